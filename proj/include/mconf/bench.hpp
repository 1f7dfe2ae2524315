#pragma once

#include "mconf/rootcp.hpp"
#include "mconf/union_approx.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace mconf {

struct SyntheticSpec {
  int n = 15;
  int p = 5;
  int q = 2;
  double informative_frac = 0.8;
  double effective_rank_frac = 0.6;
  double noise_sd = 5.0;

  void validate() const;
};

// Low-rank covariates, sparse linear response map, Gaussian noise.
Dataset synth_dataset(const SyntheticSpec& spec, std::uint64_t seed);

Dataset load_csv(const std::string& path, const std::vector<std::string>& covariate_cols,
                 const std::vector<std::string>& response_cols);

void save_csv(const Dataset& data, const std::string& path);

enum class Method {
  ExactUnionSmart,
  ExactUnionRandom,
  RootcpEllipse,
  RootcpHull,
  Grid,
  Split,
  OracleCp,
};

Method method_from_string(const std::string& s);
std::string method_to_string(Method m);

struct ExperimentConfig {
  // Dataset source: exactly one of csv_path / synthetic.
  std::string csv_path;
  std::vector<std::string> covariate_cols;
  std::vector<std::string> response_cols;
  std::optional<SyntheticSpec> synthetic;

  std::string predictor_id = "ridge";
  Eigen::VectorXd ridge_lambdas = Eigen::VectorXd::Constant(1, 1.0);
  Eigen::VectorXd bandwidths;  // empty => 1.0 per covariate
  int knn_k = 3;

  std::string measure_kind = "wnorm";  // "l1" or "wnorm"; wnorm estimates W per run

  Method method = Method::RootcpEllipse;
  double alpha = 0.1;
  int repetitions = 100;
  std::uint64_t seed = 0;

  int k_directions = 8;
  double eps = 1e-4;
  int grid_points = 30;
  int mc_samples = 100000;
  double split_frac = 0.5;
  int random_k = 0;  // 0 => ceil((1-alpha)(n+1)) for exact_union_random
  bool normalize_time = true;

  void validate() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  static ExperimentConfig from_file(const std::string& path);
};

struct RunRecord {
  int repetition = 0;
  int held_out = 0;
  bool covered = false;
  double volume = 0.0;
  double wall_seconds = 0.0;
  std::int64_t fits_performed = 0;
  bool failed = false;
  std::string error;
};

struct Report {
  ExperimentConfig config;
  std::vector<RunRecord> runs;
  double mean_coverage = 0.0;  // covered / repetitions, exact ratio of counts
  std::int64_t covered_count = 0;
  double mean_volume = 0.0;  // finite volumes only
  int infinite_volumes = 0;
  int failed_runs = 0;
  double mean_wall_seconds = 0.0;
  double oracle_mean_seconds = 0.0;  // timing baseline
  double time_normalized = 0.0;      // mean wall / oracle mean wall

  nlohmann::json to_json() const;
};

Report run_experiment(const ExperimentConfig& config);

void emit_report(const Report& report, const std::string& format,
                 const std::string& path);

// Region from a single train/calibration split: scalar aggregate score
// around the point prediction. Reduces to the classical interval at q = 1
// with the L1 measure.
struct SplitRegion {
  Eigen::VectorXd y_hat;
  ConformityMeasure measure;
  double radius = 0.0;  // calibration quantile of scores

  bool contains(const Eigen::VectorXd& z) const;
  double volume() const;
};

SplitRegion split_conformal(const Dataset& data, const Eigen::VectorXd& x_new,
                            double alpha, double split_frac, const Predictor& predictor,
                            const ConformityMeasure& measure, std::uint64_t seed);

PredictorPtr make_predictor(const ExperimentConfig& config, Eigen::Index p);

// Measure requested by the config; for the weighted norm, W is estimated from
// residuals of a fit on the training rows alone.
ConformityMeasure make_measure(const ExperimentConfig& config, const Predictor& predictor,
                               const Dataset& train);

// Plot-ready exports.
void export_grid_csv(const GridRegion& grid, const std::string& path);
void export_changepoints_csv(const std::vector<ChangeLine>& lines,
                             const std::string& path);
void export_union_grid_csv(const UnionRegion& region, const GridSpec& grid,
                           const std::string& path);
void export_rootcp(const RootCPResult& result, const std::string& csv_path,
                   const std::string& json_path);

}  // namespace mconf
