#include "mconf/oracle.hpp"

namespace mconf {

Eigen::VectorXd refit_scores(const Predictor& predictor, const Dataset& data,
                             const Eigen::VectorXd& x_new, const Eigen::VectorXd& z,
                             const ConformityMeasure& measure) {
  data.validate();
  measure.validate(data.q());
  const Eigen::Index n = data.n();
  AugmentedProblem prob{data, x_new, z};
  prob.validate();
  const Eigen::MatrixXd x_aug = prob.augmented_covariates();
  Eigen::MatrixXd y_aug(n + 1, data.q());
  y_aug.topRows(n) = data.responses;
  y_aug.row(n) = z.transpose();

  const Eigen::MatrixXd fitted = predictor.fit_predict(x_aug, y_aug);
  Eigen::VectorXd scores(n + 1);
  for (Eigen::Index i = 0; i <= n; ++i) {
    const Eigen::VectorXd r = y_aug.row(i).transpose() - fitted.row(i).transpose();
    scores[i] = measure.kind == ConformityMeasure::Kind::L1 ? r.lpNorm<1>()
                                                            : r.dot(measure.w * r);
  }
  return scores;
}

void GridSpec::validate() const {
  if (lower.size() != upper.size() || lower.size() < 1) {
    throw Error(ErrorCode::Config, "grid bounds must have matching positive dimension");
  }
  if (((upper - lower).array() <= 0.0).any()) {
    throw Error(ErrorCode::Config, "grid bounds must satisfy lower < upper");
  }
  if (points_per_dim < 2) {
    throw Error(ErrorCode::Config, "points_per_dim must be >= 2");
  }
}

std::int64_t GridSpec::total_points() const {
  std::int64_t total = 1;
  for (Eigen::Index k = 0; k < lower.size(); ++k) total *= points_per_dim;
  return total;
}

Eigen::VectorXd GridSpec::point(std::int64_t flat_index) const {
  const Eigen::Index q = lower.size();
  Eigen::VectorXd z(q);
  std::int64_t rem = flat_index;
  for (Eigen::Index k = q - 1; k >= 0; --k) {
    const std::int64_t idx = rem % points_per_dim;
    rem /= points_per_dim;
    z[k] = lower[k] + (upper[k] - lower[k]) * static_cast<double>(idx) /
                          static_cast<double>(points_per_dim - 1);
  }
  return z;
}

double GridSpec::cell_volume() const {
  double v = 1.0;
  for (Eigen::Index k = 0; k < lower.size(); ++k) {
    v *= (upper[k] - lower[k]) / static_cast<double>(points_per_dim - 1);
  }
  return v;
}

GridRegion grid_region(const Predictor& predictor, const Dataset& data,
                       const Eigen::VectorXd& x_new, double alpha, const GridSpec& grid,
                       const ConformityMeasure& measure, const GridOptions& opts) {
  grid.validate();
  data.validate();
  measure.validate(data.q());
  if (grid.lower.size() != data.q()) {
    throw Error(ErrorCode::Config, "grid dimension must equal response dimension");
  }
  const std::int64_t total = grid.total_points();
  if (total > opts.point_cap) {
    throw Error(ErrorCode::Config, "grid point count exceeds cap");
  }

  GridRegion out;
  out.spec = grid;
  out.threshold = region_membership_threshold(data.n(), alpha);
  out.pvalues.reserve(static_cast<std::size_t>(total));
  out.mask.reserve(static_cast<std::size_t>(total));

  const bool exact_path = opts.allow_exact_path && predictor.has_hat();
  out.used_exact_path = exact_path;

  std::optional<AffineCoeffs> coeffs;
  if (exact_path) {
    AugmentedProblem prob{data, x_new, std::nullopt};
    prob.validate();
    const HatSet hats = predictor.build_hat(prob.augmented_covariates(), data.q());
    coeffs = affine_coeffs(hats, data.responses);
  }

  for (std::int64_t g = 0; g < total; ++g) {
    const Eigen::VectorXd z = grid.point(g);
    Rational rank{0, data.n() + 1};
    if (exact_path) {
      const double s_new = score_closed(*coeffs, measure, data.n(), z);
      std::int64_t r = 1;
      for (Eigen::Index i = 0; i < data.n(); ++i) {
        if (score_closed(*coeffs, measure, i, z) <= s_new) ++r;
      }
      rank = {r, data.n() + 1};
    } else {
      const Eigen::VectorXd scores = refit_scores(predictor, data, x_new, z, measure);
      rank = pi_score(scores);
    }
    out.pvalues.push_back(rank);
    out.mask.push_back(rank.num <= out.threshold);
  }
  return out;
}

}  // namespace mconf
