#include "mconf/predictors.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace mconf {

namespace {

Eigen::VectorXd expand_lambdas(const Eigen::VectorXd& lambdas, Eigen::Index q) {
  if (lambdas.size() == q) return lambdas;
  if (lambdas.size() == 1) return Eigen::VectorXd::Constant(q, lambdas[0]);
  throw Error(ErrorCode::Config, "ridge lambda count must be 1 or q");
}

class RidgePredictor final : public Predictor {
 public:
  explicit RidgePredictor(Eigen::VectorXd lambdas) : lambdas_(std::move(lambdas)) {}

  std::string descriptor() const override { return "ridge"; }
  bool has_hat() const override { return true; }

  HatSet build_hat(const Eigen::MatrixXd& x_aug, Eigen::Index q) const override {
    return ridge_hat(x_aug, expand_lambdas(lambdas_, q));
  }

 protected:
  Eigen::MatrixXd do_fit_predict(const Eigen::MatrixXd& x,
                                 const Eigen::MatrixXd& y) const override {
    const Eigen::VectorXd lam = expand_lambdas(lambdas_, y.cols());
    const Eigen::MatrixXd xtx = x.transpose() * x;
    Eigen::MatrixXd fitted(y.rows(), y.cols());
    for (Eigen::Index k = 0; k < y.cols(); ++k) {
      Eigen::MatrixXd sys = xtx;
      sys.diagonal().array() += lam[k];
      fitted.col(k) = x * sys.ldlt().solve(x.transpose() * y.col(k));
    }
    return fitted;
  }

  Eigen::VectorXd do_fit_predict_at(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                    const Eigen::VectorXd& x_new) const override {
    const Eigen::VectorXd lam = expand_lambdas(lambdas_, y.cols());
    const Eigen::MatrixXd xtx = x.transpose() * x;
    Eigen::VectorXd out(y.cols());
    for (Eigen::Index k = 0; k < y.cols(); ++k) {
      Eigen::MatrixXd sys = xtx;
      sys.diagonal().array() += lam[k];
      out[k] = x_new.dot(sys.ldlt().solve(x.transpose() * y.col(k)));
    }
    return out;
  }

 private:
  Eigen::VectorXd lambdas_;
};

class NWPredictor final : public Predictor {
 public:
  explicit NWPredictor(KernelSpec kernel) : kernel_(std::move(kernel)) {}

  std::string descriptor() const override { return "nadaraya_watson"; }
  bool has_hat() const override { return true; }

  HatSet build_hat(const Eigen::MatrixXd& x_aug, Eigen::Index q) const override {
    return nw_hat(x_aug, kernel_, q);
  }

 protected:
  Eigen::MatrixXd do_fit_predict(const Eigen::MatrixXd& x,
                                 const Eigen::MatrixXd& y) const override {
    kernel_.validate(x.cols());
    Eigen::MatrixXd fitted(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      fitted.row(i) = weighted_mean(x, y, x.row(i).transpose());
    }
    return fitted;
  }

  Eigen::VectorXd do_fit_predict_at(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                    const Eigen::VectorXd& x_new) const override {
    kernel_.validate(x.cols());
    return weighted_mean(x, y, x_new);
  }

 private:
  Eigen::VectorXd weighted_mean(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                const Eigen::VectorXd& center) const {
    Eigen::VectorXd w(x.rows());
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
      w[j] = gaussian_product_kernel(x.row(j).transpose() - center, kernel_.bandwidths);
    }
    return y.transpose() * (w / w.sum());
  }

  KernelSpec kernel_;
};

class LocalLinearPredictor final : public Predictor {
 public:
  explicit LocalLinearPredictor(KernelSpec kernel) : kernel_(std::move(kernel)) {}

  std::string descriptor() const override { return "local_linear"; }
  bool has_hat() const override { return true; }

  HatSet build_hat(const Eigen::MatrixXd& x_aug, Eigen::Index q) const override {
    return local_linear_hat(x_aug, kernel_, q);
  }

 protected:
  Eigen::MatrixXd do_fit_predict(const Eigen::MatrixXd& x,
                                 const Eigen::MatrixXd& y) const override {
    Eigen::MatrixXd fitted(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      fitted.row(i) = local_fit(x, y, x.row(i).transpose());
    }
    return fitted;
  }

  Eigen::VectorXd do_fit_predict_at(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                    const Eigen::VectorXd& x_new) const override {
    return local_fit(x, y, x_new);
  }

 private:
  Eigen::VectorXd local_fit(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                            const Eigen::VectorXd& center) const {
    kernel_.validate(x.cols());
    const Eigen::Index m = x.rows();
    const Eigen::Index p = x.cols();
    Eigen::MatrixXd xt(m, p + 1);
    Eigen::VectorXd g(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      xt(j, 0) = 1.0;
      xt.row(j).tail(p) = x.row(j) - center.transpose();
      g[j] = gaussian_product_kernel(x.row(j).transpose() - center, kernel_.bandwidths);
    }
    const Eigen::MatrixXd xtg = xt.transpose() * g.asDiagonal();
    Eigen::MatrixXd sys = xtg * xt;
    sys.diagonal().array() += 1e-10 * sys.trace();
    const Eigen::MatrixXd beta = sys.ldlt().solve(xtg * y);  // (p+1) x q
    return beta.row(0).transpose();  // intercept = local fit at the center
  }

  KernelSpec kernel_;
};

class KnnPredictor final : public Predictor {
 public:
  explicit KnnPredictor(int k) : k_(k) {
    if (k_ < 1) throw Error(ErrorCode::Config, "k must be >= 1");
  }

  std::string descriptor() const override { return "knn"; }

 protected:
  Eigen::MatrixXd do_fit_predict(const Eigen::MatrixXd& x,
                                 const Eigen::MatrixXd& y) const override {
    Eigen::MatrixXd fitted(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      fitted.row(i) = knn_mean(x, y, x.row(i).transpose());
    }
    return fitted;
  }

  Eigen::VectorXd do_fit_predict_at(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                    const Eigen::VectorXd& x_new) const override {
    return knn_mean(x, y, x_new);
  }

 private:
  Eigen::VectorXd knn_mean(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                           const Eigen::VectorXd& center) const {
    const Eigen::Index m = x.rows();
    const int k = std::min<int>(k_, static_cast<int>(m));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    // Distance ties resolve by row index so results are deterministic.
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return (x.row(a).transpose() - center).squaredNorm() <
             (x.row(b).transpose() - center).squaredNorm();
    });
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(y.cols());
    for (int j = 0; j < k; ++j) mean += y.row(order[static_cast<std::size_t>(j)]).transpose();
    return mean / static_cast<double>(k);
  }

  int k_;
};

class ConstantMeanPredictor final : public Predictor {
 public:
  std::string descriptor() const override { return "constant_mean"; }

 protected:
  Eigen::MatrixXd do_fit_predict(const Eigen::MatrixXd& x,
                                 const Eigen::MatrixXd& y) const override {
    (void)x;
    return Eigen::RowVectorXd(y.colwise().mean()).replicate(y.rows(), 1);
  }

  Eigen::VectorXd do_fit_predict_at(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                    const Eigen::VectorXd& x_new) const override {
    (void)x;
    (void)x_new;
    return y.colwise().mean().transpose();
  }
};

}  // namespace

PredictorPtr make_ridge_predictor(Eigen::VectorXd lambdas) {
  return std::make_shared<RidgePredictor>(std::move(lambdas));
}

PredictorPtr make_nw_predictor(KernelSpec kernel) {
  return std::make_shared<NWPredictor>(std::move(kernel));
}

PredictorPtr make_local_linear_predictor(KernelSpec kernel) {
  return std::make_shared<LocalLinearPredictor>(std::move(kernel));
}

PredictorPtr make_knn_predictor(int k) {
  return std::make_shared<KnnPredictor>(k);
}

PredictorPtr make_constant_mean_predictor() {
  return std::make_shared<ConstantMeanPredictor>();
}

}  // namespace mconf
