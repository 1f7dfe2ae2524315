#pragma once

#include "mconf/exact.hpp"
#include "mconf/predictors.hpp"

#include <vector>

namespace mconf {

// Conformity scores from a single refit on the augmented data D_{n+1}(z).
// The brute-force reference path: one model fit per candidate.
Eigen::VectorXd refit_scores(const Predictor& predictor, const Dataset& data,
                             const Eigen::VectorXd& x_new, const Eigen::VectorXd& z,
                             const ConformityMeasure& measure);

struct GridSpec {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  int points_per_dim = 2;

  void validate() const;
  std::int64_t total_points() const;
  Eigen::VectorXd point(std::int64_t flat_index) const;
  double cell_volume() const;
};

struct GridRegion {
  GridSpec spec;
  std::vector<Rational> pvalues;  // rank/(n+1) at each grid point, row-major
  std::vector<bool> mask;         // membership at the requested level
  int threshold = 0;              // ceil((1-alpha)(n+1))
  bool used_exact_path = false;
};

struct GridOptions {
  std::int64_t point_cap = 250000;
  // Use the closed-form score path when the predictor has a hat-matrix form.
  bool allow_exact_path = true;
};

GridRegion grid_region(const Predictor& predictor, const Dataset& data,
                       const Eigen::VectorXd& x_new, double alpha, const GridSpec& grid,
                       const ConformityMeasure& measure, const GridOptions& opts = {});

}  // namespace mconf
