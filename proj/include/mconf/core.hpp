#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace mconf {

// Error taxonomy shared with the C API exit codes.
enum class ErrorCode : int {
  Config = 1,
  Data = 2,
  Numeric = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Exact ratio of integer counts. Division is deferred to reporting so that
// p-value comparisons at region boundaries stay exact.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Rational& x, const Rational& y) {
    return x.num * y.den == y.num * x.den;
  }
};

// The exchangeable sample: n paired covariate rows (p-dim) and response
// rows (q-dim).
struct Dataset {
  Eigen::MatrixXd covariates;  // n x p
  Eigen::MatrixXd responses;   // n x q

  Eigen::Index n() const { return covariates.rows(); }
  Eigen::Index p() const { return covariates.cols(); }
  Eigen::Index q() const { return responses.cols(); }

  void validate() const;
};

struct AugmentedProblem {
  Dataset base;
  Eigen::VectorXd x_new;
  std::optional<Eigen::VectorXd> z;

  void validate() const;

  // Covariates of base with x_new appended as row n+1.
  Eigen::MatrixXd augmented_covariates() const;
};

struct ConformityMeasure {
  enum class Kind { L1, WNorm };

  Kind kind = Kind::L1;
  Eigen::MatrixXd w;  // q x q, used iff kind == WNorm

  static ConformityMeasure l1() { return {Kind::L1, {}}; }
  static ConformityMeasure wnorm(Eigen::MatrixXd w);

  void validate(Eigen::Index q) const;
};

// Rank of the last score among all n+1: sum_i 1{S_i <= S_{n+1}}.
// Ties count inclusively, keeping every coverage guarantee conservative.
int rank_of_last(const Eigen::VectorXd& scores);

// pi(z) = rank_of_last / (n+1).
Rational pi_score(const Eigen::VectorXd& scores);

// |{i <= n : S_{n+1} <= S_i}| / (n+1); ties count toward membership.
Rational pvalue_from_scores(const Eigen::VectorXd& scores);

// ceil((1-alpha)(n+1)); z is in the level-alpha region iff
// (n+1)*pi(z) <= this value.
int region_membership_threshold(Eigen::Index n, double alpha);

}  // namespace mconf
