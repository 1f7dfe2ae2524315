#include "mconf/rootcp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace mconf {

BisectionResult bisection(const std::function<double(double)>& f, double a, double b,
                          double eps) {
  if (!(a < b)) throw Error(ErrorCode::Config, "bisection requires a < b");
  if (!(eps > 0.0)) throw Error(ErrorCode::Config, "bisection requires eps > 0");
  const double fa = f(a);
  const double fb = f(b);
  if (fa == 0.0) return {a, 0, 0.0, fa};
  if (fb == 0.0) return {b, 0, 0.0, fb};
  if ((fa < 0.0) == (fb < 0.0)) {
    throw Error(ErrorCode::Numeric, "bisection bracket has no sign change");
  }
  const int max_iter =
      std::max(1, static_cast<int>(std::ceil(std::log2((b - a) / eps))));
  double lo = a, hi = b;
  double flo = fa;
  double f_last = fa;
  int it = 0;
  while (it < max_iter) {
    const double c = 0.5 * (lo + hi);
    const double fc = f(c);
    f_last = fc;
    ++it;
    if (fc == 0.0) return {c, it, hi - lo, fc};
    if ((fc < 0.0) != (flo < 0.0)) {
      hi = c;
    } else {
      lo = c;
      flo = fc;
    }
    if (hi - lo <= eps) break;
  }
  return {0.5 * (lo + hi), it, hi - lo, f_last};
}

Eigen::VectorXd center_point(const Predictor& predictor, const Dataset& data,
                             const Eigen::VectorXd& x_new) {
  data.validate();
  return predictor.fit_predict_at(data.covariates, data.responses, x_new);
}

std::function<double(double)> directional_g(const Predictor& predictor,
                                            const Dataset& data,
                                            const Eigen::VectorXd& x_new,
                                            const Eigen::VectorXd& z0,
                                            const Eigen::VectorXd& direction, double alpha,
                                            const ConformityMeasure& measure) {
  const int threshold = region_membership_threshold(data.n(), alpha);
  return [&predictor, data, x_new, z0, direction, measure, threshold](double t) {
    const Eigen::VectorXd z = z0 + t * direction;
    const Eigen::VectorXd scores = refit_scores(predictor, data, x_new, z, measure);
    return static_cast<double>(threshold - rank_of_last(scores));
  };
}

BracketResult bracket(const std::function<double(double)>& g, double scale,
                      double t_cap) {
  if (!(scale > 0.0) || !(t_cap > 0.0)) {
    throw Error(ErrorCode::Config, "bracket scale and cap must be positive");
  }
  BracketResult out;
  for (int sign = -1; sign <= 1; sign += 2) {
    BracketSide side;
    double inner = 0.0;
    double t = sign * scale;
    bool found = false;
    while (std::abs(t) <= t_cap) {
      ++side.expansions;
      const bool inside = g(t) >= 0.0;
      if (!inside) {
        side.inner = inner;
        side.outer = t;
        found = true;
        // Two extra probes beyond the boundary: a return to the region
        // signals a star-shape violation along this ray.
        double probe = 2.0 * t;
        for (int extra = 0; extra < 2 && std::abs(probe) <= t_cap; ++extra) {
          ++side.expansions;
          const bool back_inside = g(probe) >= 0.0;
          if (back_inside) {
            side.multiple_sign_changes = true;
            break;
          }
          probe *= 2.0;
        }
        break;
      }
      inner = t;
      t *= 2.0;
    }
    if (found) {
      if (sign < 0) {
        out.lower = side;
      } else {
        out.upper = side;
      }
    }
  }
  return out;
}

std::vector<Eigen::VectorXd> search_directions(int k, Eigen::Index q,
                                               std::uint64_t seed) {
  if (k < static_cast<int>(q) + 1) {
    throw Error(ErrorCode::Config, "need at least q + 1 search directions");
  }
  std::vector<Eigen::VectorXd> dirs;
  dirs.reserve(static_cast<std::size_t>(k));
  if (q == 1) {
    for (int i = 0; i < k; ++i) {
      dirs.push_back(Eigen::VectorXd::Constant(1, i % 2 == 0 ? 1.0 : -1.0));
    }
  } else if (q == 2) {
    for (int i = 0; i < k; ++i) {
      const double angle = 2.0 * std::numbers::pi * i / k;
      Eigen::VectorXd d(2);
      d << std::cos(angle), std::sin(angle);
      dirs.push_back(d);
    }
  } else {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < k; ++i) {
      Eigen::VectorXd d(q);
      do {
        for (Eigen::Index j = 0; j < q; ++j) d[j] = gauss(rng);
      } while (d.norm() < 1e-12);
      dirs.push_back(d / d.norm());
    }
  }
  return dirs;
}

bool ConvexApprox::contains(const Eigen::VectorXd& z) const {
  if (kind == Kind::Ellipsoid) {
    const Eigen::VectorXd d = z - center;
    return d.dot(shape * d) <= 1.0 + 1e-12;
  }
  const std::size_t m = hull.size();
  if (m < 3) return false;
  for (std::size_t i = 0; i < m; ++i) {
    const Eigen::Vector2d& a = hull[i];
    const Eigen::Vector2d& b = hull[(i + 1) % m];
    const double cross = (b.x() - a.x()) * (z.y() - a.y()) - (b.y() - a.y()) * (z.x() - a.x());
    if (cross < -1e-10 * (1.0 + (b - a).norm())) return false;
  }
  return true;
}

double ConvexApprox::volume() const {
  if (kind == Kind::Ellipsoid) {
    const int q = static_cast<int>(center.size());
    const double ball = std::pow(std::numbers::pi, q / 2.0) / std::tgamma(q / 2.0 + 1.0);
    return ball / std::sqrt(shape.determinant());
  }
  double twice_area = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Eigen::Vector2d& a = hull[i];
    const Eigen::Vector2d& b = hull[(i + 1) % hull.size()];
    twice_area += a.x() * b.y() - b.x() * a.y();
  }
  return 0.5 * std::abs(twice_area);
}

namespace {

// Numerically stable least-squares ellipse fit (partitioned scatter-matrix
// formulation of the 4ac - b^2 = 1 constrained problem).
ConvexApprox fit_ellipse_2d(const std::vector<Eigen::VectorXd>& points) {
  const std::size_t m = points.size();
  Eigen::MatrixXd d1(m, 3), d2(m, 3);
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : points) mean += p.head<2>();
  mean /= static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double x = points[i][0] - mean.x();
    const double y = points[i][1] - mean.y();
    d1.row(static_cast<Eigen::Index>(i)) << x * x, x * y, y * y;
    d2.row(static_cast<Eigen::Index>(i)) << x, y, 1.0;
  }
  const Eigen::Matrix3d s1 = d1.transpose() * d1;
  const Eigen::Matrix3d s2 = d1.transpose() * d2;
  const Eigen::Matrix3d s3 = d2.transpose() * d2;
  Eigen::FullPivLU<Eigen::Matrix3d> lu(s3);
  if (!lu.isInvertible()) {
    throw Error(ErrorCode::Numeric, "degenerate point set for ellipse fit");
  }
  const Eigen::Matrix3d t = -lu.solve(s2.transpose());
  const Eigen::Matrix3d mred_raw = s1 + s2 * t;
  Eigen::Matrix3d mred;
  mred.row(0) = mred_raw.row(2) / 2.0;
  mred.row(1) = -mred_raw.row(1);
  mred.row(2) = mred_raw.row(0) / 2.0;
  Eigen::EigenSolver<Eigen::Matrix3d> eig(mred);
  Eigen::Vector3d a1 = Eigen::Vector3d::Zero();
  bool ok = false;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(eig.eigenvalues()[i].imag()) > 1e-10) continue;
    const Eigen::Vector3d v = eig.eigenvectors().col(i).real();
    const double cond = 4.0 * v[0] * v[2] - v[1] * v[1];
    if (cond > 0.0) {
      // Eigenvector sign is arbitrary; 4ac > b^2 forces sign(a) == sign(c),
      // so normalizing to a > 0 makes the quadratic part positive definite.
      a1 = v[0] > 0.0 ? v : Eigen::Vector3d(-v);
      ok = true;
      break;
    }
  }
  if (!ok) {
    throw Error(ErrorCode::Numeric, "least-squares conic is not an ellipse");
  }
  const Eigen::Vector3d a2 = t * a1;
  const double a = a1[0], b = a1[1], c = a1[2];
  const double d = a2[0], e = a2[1], f = a2[2];

  Eigen::Matrix2d quad;
  quad << a, b / 2.0, b / 2.0, c;
  const Eigen::Vector2d linv(d, e);
  const Eigen::Vector2d ctr_local = -0.5 * quad.inverse() * linv;
  const double scale = ctr_local.dot(quad * ctr_local) - f;
  if (scale <= 0.0) {
    throw Error(ErrorCode::Numeric, "ellipse fit collapsed to an empty region");
  }
  ConvexApprox out;
  out.kind = ConvexApprox::Kind::Ellipsoid;
  out.center = mean + ctr_local;
  Eigen::Matrix2d shape = quad / scale;
  shape = 0.5 * (shape + shape.transpose());
  out.shape = shape;
  return out;
}

// Minimum-volume enclosing ellipsoid via Khachiyan's barycentric update.
ConvexApprox fit_mvee(const std::vector<Eigen::VectorXd>& points, double tol) {
  const Eigen::Index q = points.front().size();
  const Eigen::Index m = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd p(q, m);
  for (Eigen::Index j = 0; j < m; ++j) p.col(j) = points[static_cast<std::size_t>(j)];
  Eigen::MatrixXd lifted(q + 1, m);
  lifted.topRows(q) = p;
  lifted.row(q).setOnes();

  Eigen::VectorXd u = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  const int max_iter = 10000;
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::MatrixXd x = lifted * u.asDiagonal() * lifted.transpose();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(x);
    if (!lu.isInvertible()) {
      throw Error(ErrorCode::Numeric, "degenerate point set for enclosing ellipsoid");
    }
    const Eigen::MatrixXd xinv = lu.inverse();
    Eigen::Index jmax = 0;
    double kappa = -1.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double mj = lifted.col(j).dot(xinv * lifted.col(j));
      if (mj > kappa) {
        kappa = mj;
        jmax = j;
      }
    }
    const double dim = static_cast<double>(q) + 1.0;
    if (kappa - dim <= tol * dim) break;
    const double step = (kappa - dim) / (dim * (kappa - 1.0));
    u *= (1.0 - step);
    u[jmax] += step;
  }

  const Eigen::VectorXd ctr = p * u;
  const Eigen::MatrixXd cov = p * u.asDiagonal() * p.transpose() - ctr * ctr.transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(cov);
  if (!lu.isInvertible()) {
    throw Error(ErrorCode::Numeric, "degenerate point set for enclosing ellipsoid");
  }
  ConvexApprox out;
  out.kind = ConvexApprox::Kind::Ellipsoid;
  out.center = ctr;
  Eigen::MatrixXd shape = lu.inverse() / static_cast<double>(q);
  out.shape = 0.5 * (shape + shape.transpose());
  return out;
}

}  // namespace

ConvexApprox fit_ellipsoid(const std::vector<Eigen::VectorXd>& points) {
  if (points.empty()) throw Error(ErrorCode::Data, "no points to fit");
  const Eigen::Index q = points.front().size();
  const std::size_t need = q == 2 ? 5 : static_cast<std::size_t>(q) + 1;
  if (points.size() < need) {
    throw Error(ErrorCode::Data, "too few boundary points for ellipsoid fit");
  }
  if (q == 2) return fit_ellipse_2d(points);
  return fit_mvee(points, 1e-7);
}

std::vector<Eigen::Vector2d> convex_hull_2d(const std::vector<Eigen::VectorXd>& points) {
  if (points.size() < 3) throw Error(ErrorCode::Data, "hull needs at least 3 points");
  std::vector<Eigen::Vector2d> pts;
  pts.reserve(points.size());
  for (const auto& p : points) {
    if (p.size() != 2) throw Error(ErrorCode::Config, "hull points must be 2-D");
    pts.emplace_back(p[0], p[1]);
  }
  std::sort(pts.begin(), pts.end(), [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
                          return a == b;
                        }),
            pts.end());
  const auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a,
                        const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Eigen::Vector2d> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {  // lower chain
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  const std::size_t lower = k + 1;
  for (auto it = pts.rbegin() + 1; it != pts.rend(); ++it) {  // upper chain
    while (k >= lower && cross(hull[k - 2], hull[k - 1], *it) <= 0.0) --k;
    hull[k++] = *it;
  }
  hull.resize(k - 1);
  if (hull.size() < 3) {
    throw Error(ErrorCode::Numeric, "all points collinear; no 2-D hull");
  }
  return hull;
}

RootCPResult rootcp_region(const Predictor& predictor, const Dataset& data,
                           const Eigen::VectorXd& x_new, double alpha,
                           const ConformityMeasure& measure, const RootCPOptions& opts) {
  data.validate();
  measure.validate(data.q());
  const Eigen::Index q = data.q();
  const int threshold = region_membership_threshold(data.n(), alpha);

  RootCPResult result;
  const std::int64_t fits_before = predictor.fits_performed();

  if (opts.fixed_fitted) {
    if (opts.fixed_fitted->rows() != data.n() + 1 || opts.fixed_fitted->cols() != q) {
      throw Error(ErrorCode::Config, "fixed fitted values must be (n+1) x q");
    }
    result.z0 = opts.fixed_fitted->row(data.n()).transpose();
  } else {
    result.z0 = center_point(predictor, data, x_new);
  }

  // pi at a candidate, as the integer rank of the last score.
  const auto rank_at = [&](const Eigen::VectorXd& z) {
    if (opts.fixed_fitted) {
      Eigen::VectorXd scores(data.n() + 1);
      for (Eigen::Index i = 0; i < data.n(); ++i) {
        const Eigen::VectorXd r =
            data.responses.row(i).transpose() - opts.fixed_fitted->row(i).transpose();
        scores[i] = measure.kind == ConformityMeasure::Kind::L1 ? r.lpNorm<1>()
                                                                : r.dot(measure.w * r);
      }
      const Eigen::VectorXd r = z - opts.fixed_fitted->row(data.n()).transpose();
      scores[data.n()] = measure.kind == ConformityMeasure::Kind::L1
                             ? r.lpNorm<1>()
                             : r.dot(measure.w * r);
      return rank_of_last(scores);
    }
    return rank_of_last(refit_scores(predictor, data, x_new, z, measure));
  };

  const int rank0 = rank_at(result.z0);
  if (rank0 > threshold) {
    throw Error(ErrorCode::Numeric,
                "center point is nonconforming; increase alpha or use a better "
                "center model");
  }

  const Eigen::VectorXd spread = (data.responses.colwise().maxCoeff() -
                                  data.responses.colwise().minCoeff())
                                     .transpose();

  const auto dirs = search_directions(opts.k_directions, q, opts.seed);
  std::vector<Eigen::VectorXd> boundary;
  for (int k = 0; k < static_cast<int>(dirs.size()); ++k) {
    const Eigen::VectorXd& d = dirs[static_cast<std::size_t>(k)];
    double scale = d.cwiseProduct(spread).norm();
    if (scale <= 0.0) scale = 1.0;
    const double t_cap = opts.t_cap_spread_factor * scale;
    // Offset by 1/2 so the integer-valued step function never hits zero:
    // positive inside the region, negative outside.
    const auto f = [&](double t) {
      return static_cast<double>(threshold - rank_at(result.z0 + t * d)) + 0.5;
    };
    const BracketResult br = bracket(f, scale, t_cap);
    bool any_missing = false;
    for (int side = 0; side < 2; ++side) {
      const auto& bs = side == 0 ? br.lower : br.upper;
      if (!bs) {
        any_missing = true;
        continue;
      }
      if (bs->multiple_sign_changes &&
          (result.star_shape_suspect.empty() || result.star_shape_suspect.back() != k)) {
        result.star_shape_suspect.push_back(k);
      }
      const double a = std::min(bs->inner, bs->outer);
      const double b = std::max(bs->inner, bs->outer);
      const BisectionResult bis = bisection(f, a, b, opts.eps);
      BoundaryPoint bp;
      bp.direction = d;
      bp.t = bis.root;
      bp.z = result.z0 + bis.root * d;
      bp.side = side == 0 ? BoundaryPoint::Side::Lower : BoundaryPoint::Side::Upper;
      bp.iterations = bis.iterations;
      bp.residual = std::abs(bis.f_last - 0.5);  // |g| at the last probe
      result.points.push_back(bp);
      boundary.push_back(bp.z);
    }
    if (any_missing) result.unbounded_directions.push_back(k);
  }

  if (boundary.size() < static_cast<std::size_t>(q) + 1) {
    throw Error(ErrorCode::Numeric, "too few usable boundary points for a convex fit");
  }

  if (opts.kind == ConvexApprox::Kind::Hull2d) {
    if (q != 2) throw Error(ErrorCode::Config, "hull approximation requires q = 2");
    ConvexApprox hull;
    hull.kind = ConvexApprox::Kind::Hull2d;
    hull.hull = convex_hull_2d(boundary);
    result.approx = std::move(hull);
  } else {
    result.approx = fit_ellipsoid(boundary);
  }

  result.fits_performed = predictor.fits_performed() - fits_before;
  return result;
}

}  // namespace mconf
