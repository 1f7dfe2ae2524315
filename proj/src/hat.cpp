#include "mconf/hat.hpp"

#include <cmath>
#include <string>

namespace mconf {

void KernelSpec::validate(Eigen::Index p) const {
  if (bandwidths.size() != p) {
    throw Error(ErrorCode::Config, "bandwidth vector length must equal covariate dimension");
  }
  if ((bandwidths.array() <= 0.0).any()) {
    throw Error(ErrorCode::Config, "all bandwidths must be positive");
  }
}

double gaussian_product_kernel(const Eigen::VectorXd& u, const Eigen::VectorXd& h) {
  double e = 0.0;
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    const double r = u[j] / h[j];
    e += r * r;
  }
  return std::exp(-0.5 * e);
}

HatSet ridge_hat(const Eigen::MatrixXd& x_aug, const Eigen::VectorXd& lambdas) {
  if (!x_aug.allFinite()) throw Error(ErrorCode::Data, "non-finite covariates");
  const Eigen::Index p = x_aug.cols();
  HatSet hs;
  hs.kind = HatSet::Kind::Ridge;
  hs.ridge_lambdas = lambdas;
  const Eigen::MatrixXd xtx = x_aug.transpose() * x_aug;
  for (Eigen::Index k = 0; k < lambdas.size(); ++k) {
    const double lambda = lambdas[k];
    if (lambda < 0.0) throw Error(ErrorCode::Config, "ridge lambda must be >= 0");
    Eigen::MatrixXd sys = xtx;
    sys.diagonal().array() += lambda;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sys);
    if (lambda == 0.0 && lu.rank() < p) {
      throw Error(ErrorCode::Numeric,
                  "singular system: lambda = 0 with rank-deficient design");
    }
    hs.mats.push_back(x_aug * lu.solve(x_aug.transpose()));
  }
  return hs;
}

HatSet nw_hat(const Eigen::MatrixXd& x_aug, const KernelSpec& kernel, Eigen::Index q) {
  kernel.validate(x_aug.cols());
  const Eigen::Index m = x_aug.rows();
  Eigen::MatrixXd h(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      h(i, j) = gaussian_product_kernel(x_aug.row(j) - x_aug.row(i), kernel.bandwidths);
    }
    h.row(i) /= h.row(i).sum();
  }
  HatSet hs;
  hs.kind = HatSet::Kind::NadarayaWatson;
  hs.kernel = kernel;
  hs.mats.assign(static_cast<std::size_t>(q), h);
  return hs;
}

HatSet local_linear_hat(const Eigen::MatrixXd& x_aug, const KernelSpec& kernel,
                        Eigen::Index q) {
  kernel.validate(x_aug.cols());
  const Eigen::Index m = x_aug.rows();
  const Eigen::Index p = x_aug.cols();
  Eigen::MatrixXd h(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::MatrixXd xt(m, p + 1);
    Eigen::VectorXd g(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      xt(j, 0) = 1.0;
      xt.row(j).tail(p) = x_aug.row(j) - x_aug.row(i);
      g[j] = gaussian_product_kernel(x_aug.row(j) - x_aug.row(i), kernel.bandwidths);
    }
    const Eigen::MatrixXd xtg = xt.transpose() * g.asDiagonal();
    Eigen::MatrixXd sys = xtg * xt;
    // Tiny bandwidths concentrate all kernel mass at x_i and make the local
    // system singular; jitter first, error only if still ill-conditioned.
    sys.diagonal().array() += 1e-10 * sys.trace();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sys, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double cond =
        svd.singularValues()(0) / svd.singularValues()(svd.singularValues().size() - 1);
    if (!std::isfinite(cond) || cond > 1e12) {
      throw Error(ErrorCode::Numeric, "local-linear system ill-conditioned at row " +
                                          std::to_string(i) +
                                          " (condition estimate " + std::to_string(cond) + ")");
    }
    // Row i of X~_i is (1, 0'), so the smoother weights at x_i are the first
    // row of (X~'GX~)^{-1} X~'G.
    h.row(i) = (svd.solve(xtg)).row(0);
  }
  HatSet hs;
  hs.kind = HatSet::Kind::LocalLinear;
  hs.kernel = kernel;
  hs.mats.assign(static_cast<std::size_t>(q), h);
  return hs;
}

}  // namespace mconf
