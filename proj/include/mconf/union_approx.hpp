#pragma once

#include "mconf/exact.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <vector>

namespace mconf {

struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  void validate() const;
  double volume() const;

  // Response ranges of the dataset expanded by the given fraction per side.
  static Box around_responses(const Eigen::MatrixXd& responses, double expand = 0.5);
};

struct VolumeEstimate {
  enum class Method { ClosedFormEllipsoid, MonteCarlo };

  double value = 0.0;  // +inf sentinel for unbounded regions
  Method method = Method::MonteCarlo;
  double mc_stderr = 0.0;  // meaningful for Monte Carlo only
  Box box;

  bool unbounded() const { return std::isinf(value); }
};

// Closed-form ellipsoid volume when the quadratic form is positive definite;
// Monte Carlo fraction-in-box otherwise. A quadratic region with a
// nonpositive curvature direction whose box faces still contain member
// points is reported as unbounded (+inf).
VolumeEstimate region_volume(const Region& region, const Box& box, int mc_samples,
                             std::uint64_t seed = 0);

// Union of per-observation regions; membership is the OR over members.
class UnionRegion {
 public:
  UnionRegion(std::vector<RegionPtr> members, double alpha_nominal);

  bool contains(const Eigen::VectorXd& z) const;  // short-circuits

  const std::vector<RegionPtr>& members() const { return members_; }
  double alpha_nominal() const { return alpha_nominal_; }

  // Number of member predicates evaluated so far (test instrumentation).
  std::int64_t probes() const { return probes_.load(); }

 private:
  std::vector<RegionPtr> members_;
  double alpha_nominal_;
  mutable std::atomic<std::int64_t> probes_{0};
};

// Union of the ceil((1-alpha)(n+1)) smallest regions by volume; ties broken
// by observation index ascending, +inf volumes ordered last.
UnionRegion smart_union(const std::vector<RegionPtr>& regions, double alpha,
                        const std::vector<VolumeEstimate>& volumes);

// Union of k distinct members chosen uniformly without replacement.
UnionRegion random_union(const std::vector<RegionPtr>& regions, int k,
                         std::uint64_t seed);

inline bool union_membership(const UnionRegion& u, const Eigen::VectorXd& z) {
  return u.contains(z);
}

}  // namespace mconf
