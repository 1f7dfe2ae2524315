#include <doctest.h>

#include "mconf/rootcp.hpp"
#include "mconf/predictors.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace mconf;

namespace {

Dataset random_dataset(Eigen::Index n, Eigen::Index p, Eigen::Index q,
                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  Dataset d;
  d.covariates.resize(n, p);
  d.responses.resize(n, q);
  for (Eigen::Index i = 0; i < d.covariates.size(); ++i) d.covariates(i) = gauss(rng);
  for (Eigen::Index i = 0; i < d.responses.size(); ++i) d.responses(i) = gauss(rng);
  return d;
}

}  // namespace

TEST_CASE("bisection finds smooth roots to the requested width") {
  const auto sq = [](double x) { return x * x - 2.0; };
  const BisectionResult r = bisection(sq, 0.0, 2.0, 1e-8);
  CHECK(std::abs(r.root - std::numbers::sqrt2) < 1e-8);
  CHECK(r.width <= 1e-8);
  CHECK(r.iterations <= static_cast<int>(std::ceil(std::log2(2.0 / 1e-8))));

  const auto lin = [](double x) { return 3.0 * x - 1.5; };
  CHECK(std::abs(bisection(lin, -10.0, 10.0, 1e-10).root - 0.5) < 1e-10);
}

TEST_CASE("bisection edge cases") {
  const auto lin = [](double x) { return x - 1.0; };
  const BisectionResult exact = bisection(lin, 1.0, 2.0, 1e-6);
  CHECK(exact.root == 1.0);
  CHECK(exact.iterations == 0);

  CHECK_THROWS_AS(bisection(lin, 2.0, 1.0, 1e-6), Error);
  CHECK_THROWS_AS(bisection(lin, 0.0, 2.0, 0.0), Error);
  CHECK_THROWS_AS(bisection([](double) { return 1.0; }, 0.0, 1.0, 1e-6), Error);
}

TEST_CASE("bisection localizes random step discontinuities") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  for (int rep = 0; rep < 200; ++rep) {
    const double jump = unif(rng);
    const auto step = [jump](double t) { return t < jump ? -0.5 : 0.5; };
    const BisectionResult r = bisection(step, 0.0, 1.0, 1e-7);
    CHECK(std::abs(r.root - jump) <= 1e-7);
  }
}

TEST_CASE("search directions: planar fan, unit norms, seeded determinism") {
  const auto fan = search_directions(4, 2, 0);
  REQUIRE(fan.size() == 4);
  CHECK((fan[0] - Eigen::Vector2d(1, 0)).norm() < 1e-12);
  CHECK((fan[1] - Eigen::Vector2d(0, 1)).norm() < 1e-12);
  CHECK((fan[2] - Eigen::Vector2d(-1, 0)).norm() < 1e-12);
  CHECK((fan[3] - Eigen::Vector2d(0, -1)).norm() < 1e-12);

  const auto line = search_directions(3, 1, 0);
  CHECK(line[0][0] == 1.0);
  CHECK(line[1][0] == -1.0);
  CHECK(line[2][0] == 1.0);

  const auto a = search_directions(6, 4, 11);
  const auto b = search_directions(6, 4, 11);
  const auto c = search_directions(6, 4, 12);
  double seed_gap = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i].norm() - 1.0) < 1e-12);
    CHECK((a[i] - b[i]).norm() == 0.0);
    seed_gap += (a[i] - c[i]).norm();
  }
  CHECK(seed_gap > 1e-6);

  CHECK_THROWS_AS(search_directions(2, 2, 0), Error);
}

TEST_CASE("center point is the training fit at the query") {
  const Dataset data = random_dataset(8, 2, 3, 4);
  const auto pred = make_constant_mean_predictor();
  const Eigen::VectorXd z0 = center_point(*pred, data, Eigen::Vector2d(1.0, 1.0));
  CHECK((z0.transpose() - data.responses.colwise().mean()).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("directional g matches a by-hand rank computation") {
  const Dataset data = random_dataset(6, 2, 2, 5);
  const auto pred = make_constant_mean_predictor();
  const Eigen::Vector2d x_new(0.0, 0.0);
  const Eigen::Vector2d z0 = data.responses.colwise().mean().transpose();
  const Eigen::Vector2d dir(1.0, 0.0);
  const double alpha = 0.2;
  const auto g = directional_g(*pred, data, x_new, z0, dir, alpha,
                               ConformityMeasure::l1());
  const int threshold = region_membership_threshold(6, alpha);

  for (const double t : {0.0, 0.3, -0.7, 2.5, -6.0}) {
    const Eigen::Vector2d z = z0 + t * dir;
    // Hand oracle: augmented column means, L1 residuals, inclusive tie rank.
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (Eigen::Index i = 0; i < 6; ++i) mean += data.responses.row(i).transpose();
    mean = (mean + z) / 7.0;
    Eigen::VectorXd scores(7);
    for (Eigen::Index i = 0; i < 6; ++i) {
      scores[i] = (data.responses.row(i).transpose() - mean).cwiseAbs().sum();
    }
    scores[6] = (z - mean).cwiseAbs().sum();
    int rank = 0;
    for (Eigen::Index i = 0; i < 7; ++i) {
      if (scores[i] <= scores[6]) ++rank;
    }
    CHECK(g(t) == doctest::Approx(static_cast<double>(threshold - rank)));
  }
}

TEST_CASE("bracket expansion and star-shape probing") {
  // Membership interval |t| <= 5: expansion from 1 exits at 8 on both sides.
  const auto slab = [](double t) { return std::abs(t) <= 5.0 ? 1.0 : -1.0; };
  const BracketResult br = bracket(slab, 1.0, 100.0);
  REQUIRE(br.lower.has_value());
  REQUIRE(br.upper.has_value());
  CHECK(br.upper->inner == 4.0);
  CHECK(br.upper->outer == 8.0);
  CHECK(br.lower->inner == -4.0);
  CHECK(br.lower->outer == -8.0);
  // Four doubling probes (1, 2, 4, 8) plus two confirmation probes (16, 32).
  CHECK(br.upper->expansions == 6);
  CHECK(!br.upper->multiple_sign_changes);
  CHECK(!br.lower->multiple_sign_changes);

  // A detached shell beyond the boundary trips the star-shape diagnostic.
  const auto shell = [](double t) {
    const double a = std::abs(t);
    return (a <= 5.0 || (a >= 12.0 && a <= 20.0)) ? 1.0 : -1.0;
  };
  const BracketResult br2 = bracket(shell, 1.0, 100.0);
  REQUIRE(br2.upper.has_value());
  CHECK(br2.upper->multiple_sign_changes);

  // Never leaving the region by the cap: both sides empty.
  const BracketResult br3 = bracket([](double) { return 1.0; }, 1.0, 64.0);
  CHECK(!br3.lower.has_value());
  CHECK(!br3.upper.has_value());

  CHECK_THROWS_AS(bracket(slab, 0.0, 1.0), Error);
  CHECK_THROWS_AS(bracket(slab, 1.0, -1.0), Error);
}

TEST_CASE("ellipse fit recovers an axis-aligned ellipse and a circle") {
  std::vector<Eigen::VectorXd> pts;
  for (int i = 0; i < 8; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 8.0;
    pts.push_back(Eigen::Vector2d(2.0 * std::cos(a), std::sin(a)));
  }
  const ConvexApprox ell = fit_ellipsoid(pts);
  CHECK(ell.kind == ConvexApprox::Kind::Ellipsoid);
  CHECK(ell.center.cwiseAbs().maxCoeff() < 1e-6);
  Eigen::Matrix2d expected;
  expected << 0.25, 0.0, 0.0, 1.0;
  CHECK((ell.shape - expected).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(ell.volume() == doctest::Approx(2.0 * std::numbers::pi).epsilon(1e-6));

  std::vector<Eigen::VectorXd> circle;
  const double r = 3.0;
  for (int i = 0; i < 6; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 6.0 + 0.3;
    circle.push_back(Eigen::Vector2d(r * std::cos(a) + 1.0, r * std::sin(a) - 2.0));
  }
  const ConvexApprox circ = fit_ellipsoid(circle);
  CHECK((circ.center - Eigen::Vector2d(1.0, -2.0)).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((circ.shape - Eigen::Matrix2d::Identity() / (r * r)).cwiseAbs().maxCoeff() <
        1e-6);
}

TEST_CASE("enclosing ellipsoid contains its points in three dimensions") {
  std::vector<Eigen::VectorXd> pts;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> gauss;
  for (int i = 0; i < 12; ++i) {
    Eigen::Vector3d p;
    for (int j = 0; j < 3; ++j) p[j] = gauss(rng);
    pts.push_back(p);
  }
  const ConvexApprox mvee = fit_ellipsoid(pts);
  // Khachiyan's iteration stops at a relative duality gap, so points may sit
  // marginally outside the reported unit level set.
  for (const auto& p : pts) {
    const Eigen::VectorXd d = p - mvee.center;
    CHECK(d.dot(mvee.shape * d) <= 1.0 + 1e-3);
  }

  CHECK_THROWS_AS(fit_ellipsoid({}), Error);
  std::vector<Eigen::VectorXd> few(3, Eigen::Vector2d(0.0, 0.0));
  CHECK_THROWS_AS(fit_ellipsoid(few), Error);
}

TEST_CASE("convex hull: square, containment, duplicates, degeneracies") {
  std::vector<Eigen::VectorXd> pts = {
      Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 1),
      Eigen::Vector2d(0, 1), Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(1, 1)};
  const auto hull = convex_hull_2d(pts);
  REQUIRE(hull.size() == 4);
  double twice_area = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    twice_area += a.x() * b.y() - b.x() * a.y();
  }
  CHECK(twice_area == doctest::Approx(2.0));  // positive: counterclockwise

  ConvexApprox approx;
  approx.kind = ConvexApprox::Kind::Hull2d;
  std::vector<Eigen::VectorXd> cloud;
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) cloud.push_back(Eigen::Vector2d(unif(rng), unif(rng)));
  approx.hull = convex_hull_2d(cloud);
  for (const auto& p : cloud) CHECK(approx.contains(p));
  CHECK(approx.volume() <= 4.0 + 1e-12);

  std::vector<Eigen::VectorXd> collinear = {
      Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1), Eigen::Vector2d(2, 2)};
  CHECK_THROWS_AS(convex_hull_2d(collinear), Error);
  CHECK_THROWS_AS(convex_hull_2d({Eigen::Vector2d(0, 0)}), Error);
}

TEST_CASE("root search brackets the exact boundary along every direction") {
  const Dataset data = random_dataset(14, 2, 2, 17);
  const auto pred = make_ridge_predictor(Eigen::VectorXd::Constant(1, 1.0));
  const Eigen::Vector2d x_new(0.2, -0.1);
  const auto measure = ConformityMeasure::l1();
  RootCPOptions opts;
  opts.k_directions = 8;
  opts.eps = 1e-5;

  pred->reset_fit_count();
  const RootCPResult res = rootcp_region(*pred, data, x_new, 0.2, measure, opts);
  CHECK(res.fits_performed == pred->fits_performed());
  CHECK((res.z0 - center_point(*pred, data, x_new)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(res.points.size() + 2 * res.unbounded_directions.size() >= 16);

  for (const auto& bp : res.points) {
    const auto g = directional_g(*pred, data, x_new, res.z0, bp.direction, 0.2, measure);
    const double toward = bp.side == BoundaryPoint::Side::Upper ? -1.0 : 1.0;
    CHECK(g(bp.t + toward * 2.0 * opts.eps) >= 0.0);  // just inside
    CHECK(g(bp.t - toward * 2.0 * opts.eps) < 0.0);   // just outside
    CHECK(bp.iterations <= 64);
  }
}

TEST_CASE("fixed fitted values give a ball and skip model refits") {
  const Dataset data = random_dataset(12, 2, 2, 23);
  const auto pred = make_ridge_predictor(Eigen::VectorXd::Constant(1, 0.5));
  const Eigen::Vector2d x_new(0.0, 0.3);
  const Eigen::Vector2d y_true = data.responses.colwise().mean().transpose();

  Dataset augmented;
  augmented.covariates.resize(13, 2);
  augmented.covariates.topRows(12) = data.covariates;
  augmented.covariates.row(12) = x_new.transpose();
  augmented.responses.resize(13, 2);
  augmented.responses.topRows(12) = data.responses;
  augmented.responses.row(12) = y_true.transpose();
  const Eigen::MatrixXd fitted =
      pred->fit_predict(augmented.covariates, augmented.responses);

  RootCPOptions opts;
  opts.k_directions = 12;
  opts.eps = 1e-6;
  opts.fixed_fitted = fitted;
  pred->reset_fit_count();
  const RootCPResult res = rootcp_region(
      *pred, data, x_new, 0.2,
      ConformityMeasure::wnorm(Eigen::Matrix2d::Identity()), opts);

  CHECK(res.fits_performed == 0);
  CHECK((res.z0.transpose() - fitted.row(12)).cwiseAbs().maxCoeff() < 1e-12);

  // With frozen scores the region is a Euclidean ball around z0, so every
  // boundary radius agrees up to the bisection tolerance.
  REQUIRE(res.points.size() == 24);
  double lo = std::abs(res.points.front().t), hi = lo;
  for (const auto& bp : res.points) {
    lo = std::min(lo, std::abs(bp.t));
    hi = std::max(hi, std::abs(bp.t));
  }
  CHECK(hi - lo < 1e-4);
}

TEST_CASE("a nonconforming center is rejected") {
  const Dataset data = random_dataset(10, 2, 2, 31);

  class FarCenter final : public Predictor {
   public:
    std::string descriptor() const override { return "far-center"; }

   protected:
    Eigen::MatrixXd do_fit_predict(const Eigen::MatrixXd&,
                                   const Eigen::MatrixXd& y) const override {
      return Eigen::MatrixXd::Zero(y.rows(), y.cols());
    }
    Eigen::VectorXd do_fit_predict_at(const Eigen::MatrixXd&, const Eigen::MatrixXd& y,
                                      const Eigen::VectorXd&) const override {
      return Eigen::VectorXd::Constant(y.cols(), 1e6);
    }
  };

  const FarCenter pred;
  RootCPOptions opts;
  CHECK_THROWS_AS(rootcp_region(pred, data, Eigen::Vector2d(0, 0), 0.2,
                                ConformityMeasure::l1(), opts),
                  Error);
}
