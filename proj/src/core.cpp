#include "mconf/core.hpp"

#include <cmath>

namespace mconf {

void Dataset::validate() const {
  if (covariates.rows() != responses.rows()) {
    throw Error(ErrorCode::Data, "covariates and responses must have identical row count");
  }
  if (covariates.rows() < 1) {
    throw Error(ErrorCode::Data, "dataset needs at least one observation");
  }
  if (!covariates.allFinite() || !responses.allFinite()) {
    throw Error(ErrorCode::Data, "dataset contains non-finite entries");
  }
}

void AugmentedProblem::validate() const {
  base.validate();
  if (x_new.size() != base.p()) {
    throw Error(ErrorCode::Data, "x_new length must equal covariate dimension");
  }
  if (z && z->size() != base.q()) {
    throw Error(ErrorCode::Data, "candidate z length must equal response dimension");
  }
}

Eigen::MatrixXd AugmentedProblem::augmented_covariates() const {
  Eigen::MatrixXd x(base.n() + 1, base.p());
  x.topRows(base.n()) = base.covariates;
  x.row(base.n()) = x_new.transpose();
  return x;
}

ConformityMeasure ConformityMeasure::wnorm(Eigen::MatrixXd w) {
  ConformityMeasure m;
  m.kind = Kind::WNorm;
  m.w = std::move(w);
  return m;
}

void ConformityMeasure::validate(Eigen::Index q) const {
  if (kind == Kind::L1) return;
  if (w.rows() != q || w.cols() != q) {
    throw Error(ErrorCode::Config, "W must be q x q");
  }
  const double scale = w.norm();
  if ((w - w.transpose()).norm() > 1e-10 * std::max(scale, 1.0)) {
    throw Error(ErrorCode::Config, "W must be symmetric");
  }
}

int rank_of_last(const Eigen::VectorXd& scores) {
  const Eigen::Index m = scores.size();
  if (m < 1) throw Error(ErrorCode::Data, "empty score vector");
  const double last = scores[m - 1];
  int rank = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (scores[i] <= last) ++rank;
  }
  return rank;
}

Rational pi_score(const Eigen::VectorXd& scores) {
  return {rank_of_last(scores), scores.size()};
}

Rational pvalue_from_scores(const Eigen::VectorXd& scores) {
  const Eigen::Index m = scores.size();
  if (m < 1) throw Error(ErrorCode::Data, "empty score vector");
  const double last = scores[m - 1];
  std::int64_t count = 0;
  for (Eigen::Index i = 0; i + 1 < m; ++i) {
    if (last <= scores[i]) ++count;
  }
  return {count, m};
}

int region_membership_threshold(Eigen::Index n, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::Config, "alpha must be in (0, 1)");
  }
  if (n < 1) throw Error(ErrorCode::Data, "n must be >= 1");
  return static_cast<int>(std::ceil((1.0 - alpha) * static_cast<double>(n + 1)));
}

}  // namespace mconf
