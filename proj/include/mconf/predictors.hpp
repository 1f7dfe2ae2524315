#pragma once

#include "mconf/core.hpp"
#include "mconf/hat.hpp"

#include <atomic>
#include <memory>
#include <string>

namespace mconf {

// A refit-per-candidate multi-target predictor. fit_predict trains on the
// given rows and returns fitted values for all of them; callers append
// (x_new, z) as the last row for augmented fits. Implementations must be
// deterministic given identical inputs and seed.
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual std::string descriptor() const = 0;
  virtual bool reentrant() const { return true; }
  virtual void set_seed(std::uint64_t) {}

  // Fit on (x, y) and return fitted values, one row per input row.
  Eigen::MatrixXd fit_predict(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) const {
    ++fits_;
    return do_fit_predict(x, y);
  }

  // Fit on (x, y) and predict the response at a single new covariate vector.
  Eigen::VectorXd fit_predict_at(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                 const Eigen::VectorXd& x_new) const {
    ++fits_;
    return do_fit_predict_at(x, y, x_new);
  }

  // True when fitted values are a response-independent linear smoothing of
  // the responses; such predictors admit the closed-form score path.
  virtual bool has_hat() const { return false; }
  virtual HatSet build_hat(const Eigen::MatrixXd& x_aug, Eigen::Index q) const {
    (void)x_aug;
    (void)q;
    throw Error(ErrorCode::Config, "predictor has no hat-matrix form");
  }

  std::int64_t fits_performed() const { return fits_.load(); }
  void reset_fit_count() const { fits_.store(0); }

 protected:
  virtual Eigen::MatrixXd do_fit_predict(const Eigen::MatrixXd& x,
                                         const Eigen::MatrixXd& y) const = 0;
  virtual Eigen::VectorXd do_fit_predict_at(const Eigen::MatrixXd& x,
                                            const Eigen::MatrixXd& y,
                                            const Eigen::VectorXd& x_new) const = 0;

 private:
  mutable std::atomic<std::int64_t> fits_{0};
};

using PredictorPtr = std::shared_ptr<Predictor>;

PredictorPtr make_ridge_predictor(Eigen::VectorXd lambdas);
PredictorPtr make_nw_predictor(KernelSpec kernel);
PredictorPtr make_local_linear_predictor(KernelSpec kernel);
PredictorPtr make_knn_predictor(int k);
PredictorPtr make_constant_mean_predictor();

}  // namespace mconf
