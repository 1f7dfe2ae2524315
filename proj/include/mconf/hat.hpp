#pragma once

#include "mconf/core.hpp"

#include <vector>

namespace mconf {

struct KernelSpec {
  Eigen::VectorXd bandwidths;  // length p, all > 0; Gaussian product kernel

  void validate(Eigen::Index p) const;
};

// Per-output-dimension smoother matrices H_k built from covariates only.
// The construction API takes no response argument, so H_k cannot depend
// on the responses.
struct HatSet {
  enum class Kind { Ridge, NadarayaWatson, LocalLinear };

  std::vector<Eigen::MatrixXd> mats;  // q matrices, each m x m
  Kind kind = Kind::Ridge;
  Eigen::VectorXd ridge_lambdas;      // per-dimension, Ridge only
  KernelSpec kernel;                  // NW / local-linear only

  Eigen::Index size() const { return mats.empty() ? 0 : mats.front().rows(); }
  Eigen::Index q() const { return static_cast<Eigen::Index>(mats.size()); }
};

// H_k = X (X'X + lambda_k I)^{-1} X'.
HatSet ridge_hat(const Eigen::MatrixXd& x_aug, const Eigen::VectorXd& lambdas);

// Row i holds the normalized Gaussian kernel weights centered at x_i; the
// single matrix is shared across the q output dimensions.
HatSet nw_hat(const Eigen::MatrixXd& x_aug, const KernelSpec& kernel, Eigen::Index q);

// Row i holds the local-linear smoother weights at x_i, i.e. the first row
// of (X~' G X~)^{-1} X~' G with X~ = [1, x_j - x_i] and G the diagonal
// kernel matrix centered at x_i.
HatSet local_linear_hat(const Eigen::MatrixXd& x_aug, const KernelSpec& kernel,
                        Eigen::Index q);

// Gaussian product kernel weight, unnormalized: prod_j exp(-0.5 ((u_j)/h_j)^2).
double gaussian_product_kernel(const Eigen::VectorXd& u, const Eigen::VectorXd& h);

}  // namespace mconf
