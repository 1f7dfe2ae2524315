#pragma once

#include "mconf/oracle.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace mconf {

struct BisectionResult {
  double root = 0.0;
  int iterations = 0;
  double width = 0.0;
  double f_last = 0.0;  // f at the last evaluated probe
};

// Locates a sign change of f in [a, b] to interval width <= eps. f(c) = 0 at
// a probe returns c immediately. Requires sign(f(a)) != sign(f(b)).
BisectionResult bisection(const std::function<double(double)>& f, double a, double b,
                          double eps);

// g(t) = threshold - (n+1) * pi(z0 + t d), computed from a full refit at each
// probe. Integer-valued step function; g(t) >= 0 iff z0 + t d is in the
// level-alpha region.
std::function<double(double)> directional_g(const Predictor& predictor,
                                            const Dataset& data,
                                            const Eigen::VectorXd& x_new,
                                            const Eigen::VectorXd& z0,
                                            const Eigen::VectorXd& direction, double alpha,
                                            const ConformityMeasure& measure);

// Prediction of the model fit on the training data alone; the center for
// directional searches.
Eigen::VectorXd center_point(const Predictor& predictor, const Dataset& data,
                             const Eigen::VectorXd& x_new);

struct BracketSide {
  double inner = 0.0;  // g >= 0 here
  double outer = 0.0;  // g < 0 here
  int expansions = 0;
  bool multiple_sign_changes = false;  // star-shape diagnostic
};

struct BracketResult {
  std::optional<BracketSide> lower;  // t < 0 side
  std::optional<BracketSide> upper;  // t > 0 side
};

// Doubling expansion from +-scale out to +-t_cap until g turns negative.
// A side with no sign change by t_cap is left empty (unbounded direction).
BracketResult bracket(const std::function<double(double)>& g, double scale,
                      double t_cap);

// K unit vectors: equiangular for q = 2, seeded normalized Gaussians on the
// sphere for q > 2.
std::vector<Eigen::VectorXd> search_directions(int k, Eigen::Index q,
                                               std::uint64_t seed);

struct BoundaryPoint {
  Eigen::VectorXd direction;
  double t = 0.0;
  Eigen::VectorXd z;  // z0 + t * direction
  enum class Side { Lower, Upper } side = Side::Upper;
  double residual = 0.0;  // |g| at termination
  int iterations = 0;
};

struct ConvexApprox {
  enum class Kind { Ellipsoid, Hull2d };

  Kind kind = Kind::Ellipsoid;
  Eigen::VectorXd center;                // ellipsoid {(z-c)'M(z-c) <= 1}
  Eigen::MatrixXd shape;                 // M, symmetric positive definite
  std::vector<Eigen::Vector2d> hull;     // q = 2 only, counterclockwise

  bool contains(const Eigen::VectorXd& z) const;
  double volume() const;  // closed form for ellipsoid, shoelace for hull
};

// Least-squares algebraic ellipse for q = 2; minimum-volume enclosing
// ellipsoid (Khachiyan iteration) for q > 2.
ConvexApprox fit_ellipsoid(const std::vector<Eigen::VectorXd>& points);

// Counterclockwise hull, collinear interior points dropped (monotone chain).
std::vector<Eigen::Vector2d> convex_hull_2d(const std::vector<Eigen::VectorXd>& points);

struct RootCPResult {
  Eigen::VectorXd z0;
  std::vector<BoundaryPoint> points;
  ConvexApprox approx;
  std::int64_t fits_performed = 0;
  std::vector<int> unbounded_directions;       // direction indices with a missing side
  std::vector<int> star_shape_suspect;         // directions with multiple sign changes
};

struct RootCPOptions {
  int k_directions = 8;
  double eps = 1e-4;
  ConvexApprox::Kind kind = ConvexApprox::Kind::Ellipsoid;
  std::uint64_t seed = 0;
  double t_cap_spread_factor = 50.0;
  // When set, conformity scores come from this single fixed fit instead of a
  // refit per probe (the timing-baseline construction).
  std::optional<Eigen::MatrixXd> fixed_fitted;  // (n+1) x q fitted values
};

RootCPResult rootcp_region(const Predictor& predictor, const Dataset& data,
                           const Eigen::VectorXd& x_new, double alpha,
                           const ConformityMeasure& measure, const RootCPOptions& opts);

}  // namespace mconf
