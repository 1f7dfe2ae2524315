#pragma once

#include "mconf/core.hpp"
#include "mconf/hat.hpp"

#include <array>
#include <memory>
#include <vector>

namespace mconf {

// Residual of observation i in output dimension k at candidate z is exactly
// a(i, k) + b(i, k) * z_k. Indices are 0-based; the candidate row is n
// (the spec-level observation n+1).
struct AffineCoeffs {
  Eigen::MatrixXd a;  // (n+1) x q
  Eigen::MatrixXd b;  // (n+1) x q

  Eigen::Index n_plus_1() const { return a.rows(); }
  Eigen::Index q() const { return a.cols(); }
};

AffineCoeffs affine_coeffs(const HatSet& hats, const Eigen::MatrixXd& responses);

// S_i(z): L1 = sum_k |a_ik + b_ik z_k|; WNorm = r' W r with r_k = a_ik + b_ik z_k.
double score_closed(const AffineCoeffs& coeffs, const ConformityMeasure& measure,
                    Eigen::Index i, const Eigen::VectorXd& z);

// |{i < n : S_n(z) <= S_i(z)}| / (n+1). One hat-matrix construction serves
// any number of candidate queries.
Rational pvalue_exact(const AffineCoeffs& coeffs, const ConformityMeasure& measure,
                      const Eigen::VectorXd& z);

// Per-observation conformity region E_i = {z : S_{n+1}(z) <= S_i(z)}.
class Region {
 public:
  virtual ~Region() = default;
  virtual bool contains(const Eigen::VectorXd& z) const = 0;
  int obs_index() const { return obs_index_; }

 protected:
  explicit Region(int obs) : obs_index_(obs) {}

 private:
  int obs_index_;
};

using RegionPtr = std::shared_ptr<const Region>;

// {z : z' qmat z + lin'z + cst <= 0}, equivalent to the W-norm score
// comparison S_{n+1}(z) <= S_i(z).
class QuadraticRegion : public Region {
 public:
  QuadraticRegion(Eigen::MatrixXd qmat, Eigen::VectorXd lin, double cst, int obs);

  bool contains(const Eigen::VectorXd& z) const override;

  const Eigen::MatrixXd& qmat() const { return qmat_; }
  const Eigen::VectorXd& lin() const { return lin_; }
  double cst() const { return cst_; }

 private:
  Eigen::MatrixXd qmat_;
  Eigen::VectorXd lin_;
  double cst_;
};

// Exact predicate region under the L1 measure; no geometry is stored.
class L1Region : public Region {
 public:
  L1Region(std::shared_ptr<const AffineCoeffs> coeffs, int obs);

  bool contains(const Eigen::VectorXd& z) const override;

 private:
  std::shared_ptr<const AffineCoeffs> coeffs_;
};

QuadraticRegion region_wnorm(const AffineCoeffs& coeffs, const Eigen::MatrixXd& w,
                             Eigen::Index i);

L1Region region_l1(std::shared_ptr<const AffineCoeffs> coeffs, Eigen::Index i);

// One candidate p-value change line for q = 2: {z : normal . z + offset = 0},
// from one of the 2^4 sign assignments of the four absolute-value terms.
struct ChangeLine {
  Eigen::Vector2d normal;
  double offset = 0.0;
  std::array<int, 4> signs{};  // (s_i1, s_i2, s_n1, s_n2), each +1 or -1
};

// Candidate change lines where S_i(z) = S_{n+1}(z) can hold; degenerate sign
// patterns (both line coefficients vanishing) are omitted.
std::vector<ChangeLine> l1_changepoints_2d(const AffineCoeffs& coeffs, Eigen::Index i);

struct WEstimate {
  Eigen::MatrixXd w;
  // W is built from residuals of a fit on the training rows alone, which is
  // not an exchangeable construction; consumers should treat coverage as
  // empirical rather than guaranteed.
  bool exchangeability_warning = true;
};

// W = inverse of the (jittered) sample covariance of residuals from the
// model fit on the training data only.
WEstimate estimate_w(const Dataset& data, const HatSet& hats_for_dn);

}  // namespace mconf
