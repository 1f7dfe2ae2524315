#include "mconf/union_approx.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace mconf {

void Box::validate() const {
  if (lower.size() != upper.size() || lower.size() < 1) {
    throw Error(ErrorCode::Config, "box bounds must have matching positive dimension");
  }
  if (((upper - lower).array() <= 0.0).any()) {
    throw Error(ErrorCode::Config, "box side lengths must be positive");
  }
}

double Box::volume() const {
  return (upper - lower).prod();
}

Box Box::around_responses(const Eigen::MatrixXd& responses, double expand) {
  Box b;
  b.lower = responses.colwise().minCoeff();
  b.upper = responses.colwise().maxCoeff();
  Eigen::VectorXd span = b.upper - b.lower;
  // Guard against a degenerate span in any dimension.
  for (Eigen::Index k = 0; k < span.size(); ++k) {
    if (span[k] <= 0.0) span[k] = std::max(1.0, std::abs(b.lower[k]));
  }
  b.lower -= expand * span;
  b.upper += expand * span;
  return b;
}

namespace {

double unit_ball_volume(int q) {
  return std::pow(std::numbers::pi, q / 2.0) / std::tgamma(q / 2.0 + 1.0);
}

// Sample points on the box faces; any member point there marks the region
// as extending beyond the box.
bool region_touches_faces(const Region& region, const Box& box, int samples_per_face,
                          std::mt19937_64& rng) {
  const Eigen::Index q = box.lower.size();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index k = 0; k < q; ++k) {
    for (int side = 0; side < 2; ++side) {
      for (int s = 0; s < samples_per_face; ++s) {
        Eigen::VectorXd z(q);
        for (Eigen::Index j = 0; j < q; ++j) {
          z[j] = box.lower[j] + unit(rng) * (box.upper[j] - box.lower[j]);
        }
        z[k] = side == 0 ? box.lower[k] : box.upper[k];
        if (region.contains(z)) return true;
      }
    }
  }
  return false;
}

}  // namespace

VolumeEstimate region_volume(const Region& region, const Box& box, int mc_samples,
                             std::uint64_t seed) {
  box.validate();
  if (mc_samples < 1000) {
    throw Error(ErrorCode::Config, "mc_samples must be >= 1000");
  }
  const Eigen::Index q = box.lower.size();
  VolumeEstimate est;
  est.box = box;

  const auto* quad = dynamic_cast<const QuadraticRegion*>(&region);
  if (quad != nullptr) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(quad->qmat());
    const double min_eig = eig.eigenvalues().minCoeff();
    const double scale = std::max(eig.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
    if (min_eig > 1e-12 * scale) {
      // Bounded ellipsoid {(z-m)'Q(z-m) <= m'Qm - c}.
      const Eigen::VectorXd center = quad->qmat().ldlt().solve(-0.5 * quad->lin());
      const double r2 = center.dot(quad->qmat() * center) - quad->cst();
      est.method = VolumeEstimate::Method::ClosedFormEllipsoid;
      est.value = r2 <= 0.0
                      ? 0.0
                      : unit_ball_volume(static_cast<int>(q)) *
                            std::pow(r2, q / 2.0) /
                            std::sqrt(quad->qmat().determinant());
      return est;
    }
    std::mt19937_64 face_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    if (region_touches_faces(region, box, std::max(mc_samples / (20 * static_cast<int>(q)), 50),
                             face_rng)) {
      est.method = VolumeEstimate::Method::MonteCarlo;
      est.value = std::numeric_limits<double>::infinity();
      return est;
    }
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::int64_t inside = 0;
  Eigen::VectorXd z(q);
  for (int s = 0; s < mc_samples; ++s) {
    for (Eigen::Index j = 0; j < q; ++j) {
      z[j] = box.lower[j] + unit(rng) * (box.upper[j] - box.lower[j]);
    }
    if (region.contains(z)) ++inside;
  }
  const double frac = static_cast<double>(inside) / static_cast<double>(mc_samples);
  est.method = VolumeEstimate::Method::MonteCarlo;
  est.value = frac * box.volume();
  est.mc_stderr = box.volume() * std::sqrt(frac * (1.0 - frac) / mc_samples);
  return est;
}

UnionRegion::UnionRegion(std::vector<RegionPtr> members, double alpha_nominal)
    : members_(std::move(members)), alpha_nominal_(alpha_nominal) {
  if (members_.empty()) {
    throw Error(ErrorCode::Config, "union must have at least one member");
  }
}

bool UnionRegion::contains(const Eigen::VectorXd& z) const {
  for (const auto& m : members_) {
    probes_.fetch_add(1, std::memory_order_relaxed);
    if (m->contains(z)) return true;
  }
  return false;
}

UnionRegion smart_union(const std::vector<RegionPtr>& regions, double alpha,
                        const std::vector<VolumeEstimate>& volumes) {
  const auto n = regions.size();
  if (volumes.size() != n) {
    throw Error(ErrorCode::Config, "volumes must align with regions");
  }
  const int need = region_membership_threshold(static_cast<Eigen::Index>(n), alpha);
  if (need > static_cast<int>(n)) {
    throw Error(ErrorCode::Config,
                "level unattainable: need " + std::to_string(need) + " regions, have " +
                    std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    const double vx = volumes[x].value;
    const double vy = volumes[y].value;
    if (vx != vy) return vx < vy;  // +inf naturally orders last
    return regions[x]->obs_index() < regions[y]->obs_index();
  });
  std::vector<RegionPtr> members;
  members.reserve(static_cast<std::size_t>(need));
  for (int i = 0; i < need; ++i) members.push_back(regions[order[static_cast<std::size_t>(i)]]);
  return UnionRegion(std::move(members), 1.0 - static_cast<double>(need) /
                                                   static_cast<double>(n + 1));
}

UnionRegion random_union(const std::vector<RegionPtr>& regions, int k,
                         std::uint64_t seed) {
  const int n = static_cast<int>(regions.size());
  if (k < 1 || k > n) {
    throw Error(ErrorCode::Config, "subset size k out of range");
  }
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first k entries are a uniform subset.
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  std::vector<RegionPtr> members;
  members.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) members.push_back(regions[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
  return UnionRegion(std::move(members),
                     1.0 - static_cast<double>(k) / static_cast<double>(n + 1));
}

}  // namespace mconf
