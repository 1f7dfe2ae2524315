#include "mconf/bench.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace mconf {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 1));
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n < 1 || p < 1 || q < 1) {
    throw Error(ErrorCode::Config, "synthetic n, p, q must be >= 1");
  }
  if (!(informative_frac > 0.0 && informative_frac <= 1.0) ||
      !(effective_rank_frac > 0.0 && effective_rank_frac <= 1.0)) {
    throw Error(ErrorCode::Config, "synthetic fractions must be in (0, 1]");
  }
  if (noise_sd < 0.0) {
    throw Error(ErrorCode::Config, "noise_sd must be >= 0");
  }
}

Dataset synth_dataset(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const int rank = std::max(1, static_cast<int>(std::floor(spec.effective_rank_frac * spec.p)));
  const int informative =
      std::max(1, static_cast<int>(std::floor(spec.informative_frac * spec.p)));

  // Covariates: dominant low-rank factor structure plus a small full-rank
  // residual so designs stay invertible.
  Eigen::MatrixXd factors(spec.n, rank);
  for (Eigen::Index i = 0; i < factors.size(); ++i) factors(i) = gauss(rng);
  Eigen::MatrixXd loadings(rank, spec.p);
  for (Eigen::Index i = 0; i < loadings.size(); ++i) loadings(i) = gauss(rng);
  Eigen::MatrixXd residual(spec.n, spec.p);
  for (Eigen::Index i = 0; i < residual.size(); ++i) residual(i) = gauss(rng);

  Dataset data;
  data.covariates = factors * loadings / std::sqrt(static_cast<double>(rank)) +
                    0.01 * residual;

  Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(spec.p, spec.q);
  std::uniform_real_distribution<double> unif(0.0, 100.0);
  for (int j = 0; j < informative; ++j) {
    for (int k = 0; k < spec.q; ++k) coef(j, k) = unif(rng);
  }

  Eigen::MatrixXd noise(spec.n, spec.q);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise(i) = gauss(rng);
  data.responses = data.covariates * coef + spec.noise_sd * noise;
  data.validate();
  return data;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

Dataset load_csv(const std::string& path, const std::vector<std::string>& covariate_cols,
                 const std::vector<std::string>& response_cols) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Data, "cannot open CSV file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::Data, "empty CSV file: " + path);

  const auto header = split_line(line);
  const auto col_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (trim(header[i]) == name) return static_cast<int>(i);
    }
    throw Error(ErrorCode::Data, "column not found in " + path + ": " + name);
  };
  std::vector<int> xcols, ycols;
  for (const auto& c : covariate_cols) xcols.push_back(col_index(c));
  for (const auto& c : response_cols) ycols.push_back(col_index(c));

  std::vector<std::vector<double>> xrows, yrows;
  std::vector<int> bad_rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_line(line);
    const auto parse = [&](int col) {
      if (col >= static_cast<int>(fields.size()) || trim(fields[static_cast<std::size_t>(col)]).empty()) {
        bad_rows.push_back(lineno);
        return 0.0;
      }
      const std::string f = trim(fields[static_cast<std::size_t>(col)]);
      char* end = nullptr;
      const double v = std::strtod(f.c_str(), &end);
      if (end == f.c_str() || *end != '\0') {
        throw Error(ErrorCode::Data, "parse error at " + path + ":" +
                                         std::to_string(lineno) + " column " +
                                         std::to_string(col + 1) + ": '" + f + "'");
      }
      return v;
    };
    std::vector<double> xr, yr;
    for (int c : xcols) xr.push_back(parse(c));
    for (int c : ycols) yr.push_back(parse(c));
    xrows.push_back(std::move(xr));
    yrows.push_back(std::move(yr));
  }
  if (!bad_rows.empty()) {
    std::string rows;
    for (std::size_t i = 0; i < bad_rows.size() && i < 10; ++i) {
      rows += (i ? ", " : "") + std::to_string(bad_rows[i]);
    }
    throw Error(ErrorCode::Data, "missing values in " + path + " at row(s): " + rows);
  }
  if (xrows.empty()) throw Error(ErrorCode::Data, "no data rows in " + path);

  Dataset data;
  data.covariates.resize(static_cast<Eigen::Index>(xrows.size()),
                         static_cast<Eigen::Index>(xcols.size()));
  data.responses.resize(static_cast<Eigen::Index>(yrows.size()),
                        static_cast<Eigen::Index>(ycols.size()));
  for (std::size_t i = 0; i < xrows.size(); ++i) {
    for (std::size_t j = 0; j < xrows[i].size(); ++j) {
      data.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = xrows[i][j];
    }
    for (std::size_t j = 0; j < yrows[i].size(); ++j) {
      data.responses(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = yrows[i][j];
    }
  }
  data.validate();
  return data;
}

void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Data, "cannot write CSV file: " + path);
  out.precision(17);
  for (Eigen::Index j = 0; j < data.p(); ++j) out << "x" << (j + 1) << ",";
  for (Eigen::Index k = 0; k < data.q(); ++k) {
    out << "y" << (k + 1) << (k + 1 < data.q() ? "," : "\n");
  }
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index j = 0; j < data.p(); ++j) out << data.covariates(i, j) << ",";
    for (Eigen::Index k = 0; k < data.q(); ++k) {
      out << data.responses(i, k) << (k + 1 < data.q() ? "," : "\n");
    }
  }
}

Method method_from_string(const std::string& s) {
  if (s == "exact_union_smart") return Method::ExactUnionSmart;
  if (s == "exact_union_random") return Method::ExactUnionRandom;
  if (s == "rootcp_ellipse") return Method::RootcpEllipse;
  if (s == "rootcp_hull") return Method::RootcpHull;
  if (s == "grid") return Method::Grid;
  if (s == "split") return Method::Split;
  if (s == "oracle_cp") return Method::OracleCp;
  throw Error(ErrorCode::Config, "unknown method: " + s);
}

std::string method_to_string(Method m) {
  switch (m) {
    case Method::ExactUnionSmart: return "exact_union_smart";
    case Method::ExactUnionRandom: return "exact_union_random";
    case Method::RootcpEllipse: return "rootcp_ellipse";
    case Method::RootcpHull: return "rootcp_hull";
    case Method::Grid: return "grid";
    case Method::Split: return "split";
    case Method::OracleCp: return "oracle_cp";
  }
  throw Error(ErrorCode::Config, "unknown method enum");
}

void ExperimentConfig::validate() const {
  if (csv_path.empty() == !synthetic.has_value()) {
    throw Error(ErrorCode::Config, "exactly one of csv path or synthetic spec required");
  }
  if (synthetic) synthetic->validate();
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::Config, "alpha must be in (0,1)");
  if (repetitions < 1) throw Error(ErrorCode::Config, "repetitions must be >= 1");
  if (measure_kind != "l1" && measure_kind != "wnorm") {
    throw Error(ErrorCode::Config, "measure must be 'l1' or 'wnorm'");
  }
  if (eps <= 0.0) throw Error(ErrorCode::Config, "eps must be > 0");
  if (grid_points < 2) throw Error(ErrorCode::Config, "grid_points must be >= 2");
  if (mc_samples < 1000) throw Error(ErrorCode::Config, "mc_samples must be >= 1000");
  if (!(split_frac > 0.0 && split_frac < 1.0)) {
    throw Error(ErrorCode::Config, "split_frac must be in (0,1)");
  }
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    if (d.contains("csv")) {
      const auto& f = d.at("csv");
      c.csv_path = f.at("path").get<std::string>();
      c.covariate_cols = f.at("covariates").get<std::vector<std::string>>();
      c.response_cols = f.at("responses").get<std::vector<std::string>>();
    }
    if (d.contains("synthetic")) {
      const auto& s = d.at("synthetic");
      SyntheticSpec spec;
      spec.n = s.value("n", spec.n);
      spec.p = s.value("p", spec.p);
      spec.q = s.value("q", spec.q);
      spec.informative_frac = s.value("informative_frac", spec.informative_frac);
      spec.effective_rank_frac = s.value("effective_rank_frac", spec.effective_rank_frac);
      spec.noise_sd = s.value("noise_sd", spec.noise_sd);
      c.synthetic = spec;
    }
  }
  if (j.contains("predictor")) {
    const auto& p = j.at("predictor");
    c.predictor_id = p.value("id", c.predictor_id);
    if (p.contains("lambda")) {
      if (p.at("lambda").is_array()) {
        const auto v = p.at("lambda").get<std::vector<double>>();
        c.ridge_lambdas = Eigen::Map<const Eigen::VectorXd>(v.data(),
                                                            static_cast<Eigen::Index>(v.size()));
      } else {
        c.ridge_lambdas = Eigen::VectorXd::Constant(1, p.at("lambda").get<double>());
      }
    }
    if (p.contains("bandwidth")) {
      if (p.at("bandwidth").is_array()) {
        const auto v = p.at("bandwidth").get<std::vector<double>>();
        c.bandwidths = Eigen::Map<const Eigen::VectorXd>(v.data(),
                                                         static_cast<Eigen::Index>(v.size()));
      } else {
        c.bandwidths = Eigen::VectorXd::Constant(1, p.at("bandwidth").get<double>());
      }
    }
    c.knn_k = p.value("k", c.knn_k);
  }
  if (j.contains("measure")) {
    c.measure_kind = j.at("measure").value("kind", c.measure_kind);
  }
  if (j.contains("method")) c.method = method_from_string(j.at("method").get<std::string>());
  c.alpha = j.value("alpha", c.alpha);
  c.repetitions = j.value("repetitions", c.repetitions);
  c.seed = j.value("seed", c.seed);
  c.k_directions = j.value("k_directions", c.k_directions);
  c.eps = j.value("eps", c.eps);
  c.grid_points = j.value("grid_points", c.grid_points);
  c.mc_samples = j.value("mc_samples", c.mc_samples);
  c.split_frac = j.value("split_frac", c.split_frac);
  c.random_k = j.value("random_k", c.random_k);
  c.normalize_time = j.value("normalize_time", c.normalize_time);
  return c;
}

json ExperimentConfig::to_json() const {
  json j;
  json d;
  if (!csv_path.empty()) {
    d["csv"] = {{"path", csv_path},
                {"covariates", covariate_cols},
                {"responses", response_cols}};
  }
  if (synthetic) {
    d["synthetic"] = {{"n", synthetic->n},
                      {"p", synthetic->p},
                      {"q", synthetic->q},
                      {"informative_frac", synthetic->informative_frac},
                      {"effective_rank_frac", synthetic->effective_rank_frac},
                      {"noise_sd", synthetic->noise_sd}};
  }
  j["dataset"] = d;
  json pred;
  pred["id"] = predictor_id;
  pred["lambda"] = std::vector<double>(ridge_lambdas.data(),
                                       ridge_lambdas.data() + ridge_lambdas.size());
  if (bandwidths.size() > 0) {
    pred["bandwidth"] =
        std::vector<double>(bandwidths.data(), bandwidths.data() + bandwidths.size());
  }
  pred["k"] = knn_k;
  j["predictor"] = pred;
  j["measure"] = {{"kind", measure_kind}};
  j["method"] = method_to_string(method);
  j["alpha"] = alpha;
  j["repetitions"] = repetitions;
  j["seed"] = seed;
  j["k_directions"] = k_directions;
  j["eps"] = eps;
  j["grid_points"] = grid_points;
  j["mc_samples"] = mc_samples;
  j["split_frac"] = split_frac;
  j["random_k"] = random_k;
  j["normalize_time"] = normalize_time;
  return j;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, "cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("config parse error: ") + e.what());
  }
  return from_json(j);
}

PredictorPtr make_predictor(const ExperimentConfig& config, Eigen::Index p) {
  const Eigen::VectorXd bw = config.bandwidths.size() == 0
                                 ? Eigen::VectorXd::Ones(p)
                                 : (config.bandwidths.size() == 1
                                        ? Eigen::VectorXd::Constant(p, config.bandwidths[0])
                                        : config.bandwidths);
  if (config.predictor_id == "ridge") return make_ridge_predictor(config.ridge_lambdas);
  if (config.predictor_id == "nadaraya_watson" || config.predictor_id == "nw") {
    return make_nw_predictor(KernelSpec{bw});
  }
  if (config.predictor_id == "local_linear") {
    return make_local_linear_predictor(KernelSpec{bw});
  }
  if (config.predictor_id == "knn") return make_knn_predictor(config.knn_k);
  if (config.predictor_id == "constant_mean") return make_constant_mean_predictor();
  throw Error(ErrorCode::Config, "unknown predictor id: " + config.predictor_id);
}

namespace {

Eigen::MatrixXd inverse_residual_covariance(const Eigen::MatrixXd& resid_in) {
  Eigen::MatrixXd resid = resid_in;
  const Eigen::Index n = resid.rows();
  const Eigen::Index q = resid.cols();
  const Eigen::RowVectorXd mean = resid.colwise().mean();
  resid.rowwise() -= mean;
  Eigen::MatrixXd sigma = resid.transpose() * resid / static_cast<double>(n);
  sigma.diagonal().array() += 1e-8 * sigma.trace() / static_cast<double>(q);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(sigma);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw Error(ErrorCode::Numeric, "residual covariance degenerate after jitter");
  }
  Eigen::MatrixXd w = ldlt.solve(Eigen::MatrixXd::Identity(q, q));
  return 0.5 * (w + w.transpose());
}

}  // namespace

ConformityMeasure make_measure(const ExperimentConfig& config, const Predictor& predictor,
                               const Dataset& train) {
  if (config.measure_kind == "l1") return ConformityMeasure::l1();
  if (predictor.has_hat()) {
    const HatSet hats = predictor.build_hat(train.covariates, train.q());
    return ConformityMeasure::wnorm(estimate_w(train, hats).w);
  }
  const Eigen::MatrixXd fitted = predictor.fit_predict(train.covariates, train.responses);
  return ConformityMeasure::wnorm(inverse_residual_covariance(train.responses - fitted));
}

namespace {

struct RunOutcome {
  bool covered = false;
  double volume = 0.0;
  std::int64_t fits = 0;
};

double union_mc_volume(const UnionRegion& u, const Box& box, int samples,
                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Eigen::Index q = box.lower.size();
  Eigen::VectorXd z(q);
  std::int64_t inside = 0;
  for (int s = 0; s < samples; ++s) {
    for (Eigen::Index j = 0; j < q; ++j) {
      z[j] = box.lower[j] + unit(rng) * (box.upper[j] - box.lower[j]);
    }
    if (u.contains(z)) ++inside;
  }
  return box.volume() * static_cast<double>(inside) / static_cast<double>(samples);
}

RunOutcome run_exact_union(const ExperimentConfig& config, const Predictor& predictor,
                           const Dataset& train, const Eigen::VectorXd& x_new,
                           const Eigen::VectorXd& y_true, std::uint64_t seed) {
  if (!predictor.has_hat()) {
    throw Error(ErrorCode::Config,
                "exact union methods require a hat-matrix predictor");
  }
  const ConformityMeasure measure = make_measure(config, predictor, train);
  AugmentedProblem prob{train, x_new, std::nullopt};
  prob.validate();
  const HatSet hats = predictor.build_hat(prob.augmented_covariates(), train.q());
  auto coeffs = std::make_shared<const AffineCoeffs>(affine_coeffs(hats, train.responses));

  const Eigen::Index n = train.n();
  std::vector<RegionPtr> regions;
  regions.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (measure.kind == ConformityMeasure::Kind::WNorm) {
      regions.push_back(
          std::make_shared<QuadraticRegion>(region_wnorm(*coeffs, measure.w, i)));
    } else {
      regions.push_back(std::make_shared<L1Region>(region_l1(coeffs, i)));
    }
  }

  const Box box = Box::around_responses(train.responses);
  UnionRegion u = [&] {
    if (config.method == Method::ExactUnionRandom) {
      const int k = config.random_k > 0
                        ? config.random_k
                        : region_membership_threshold(n, config.alpha);
      return random_union(regions, k, sub_seed(seed, 7));
    }
    const int vol_samples = std::max(1000, config.mc_samples / 10);
    std::vector<VolumeEstimate> volumes;
    volumes.reserve(regions.size());
    for (std::size_t i = 0; i < regions.size(); ++i) {
      volumes.push_back(
          region_volume(*regions[i], box, vol_samples, sub_seed(seed, 1000 + i)));
    }
    return smart_union(regions, config.alpha, volumes);
  }();

  RunOutcome out;
  out.covered = u.contains(y_true);
  out.volume = union_mc_volume(u, box, config.mc_samples, sub_seed(seed, 8));
  out.fits = 1;  // one hat construction serves every query
  return out;
}

RunOutcome run_grid(const ExperimentConfig& config, const Predictor& predictor,
                    const Dataset& train, const Eigen::VectorXd& x_new,
                    const Eigen::VectorXd& y_true) {
  const ConformityMeasure measure = make_measure(config, predictor, train);
  const Box box = Box::around_responses(train.responses);
  GridSpec grid{box.lower, box.upper, config.grid_points};
  predictor.reset_fit_count();
  const GridRegion gr =
      grid_region(predictor, train, x_new, config.alpha, grid, measure);

  RunOutcome out;
  // Membership of the held-out response, via the same score path.
  if (gr.used_exact_path) {
    AugmentedProblem prob{train, x_new, std::nullopt};
    const HatSet hats = predictor.build_hat(prob.augmented_covariates(), train.q());
    const AffineCoeffs coeffs = affine_coeffs(hats, train.responses);
    const double s_new = score_closed(coeffs, measure, train.n(), y_true);
    int rank = 1;
    for (Eigen::Index i = 0; i < train.n(); ++i) {
      if (score_closed(coeffs, measure, i, y_true) <= s_new) ++rank;
    }
    out.covered = rank <= gr.threshold;
    out.fits = 1;
  } else {
    const Eigen::VectorXd scores = refit_scores(predictor, train, x_new, y_true, measure);
    out.covered = rank_of_last(scores) <= gr.threshold;
    out.fits = predictor.fits_performed();
  }
  std::int64_t cells = 0;
  for (bool b : gr.mask) cells += b ? 1 : 0;
  out.volume = static_cast<double>(cells) * gr.spec.cell_volume();
  return out;
}

RunOutcome run_rootcp(const ExperimentConfig& config, const Predictor& predictor,
                      const Dataset& train, const Eigen::VectorXd& x_new,
                      const Eigen::VectorXd& y_true, std::uint64_t seed, bool oracle) {
  const ConformityMeasure measure = make_measure(config, predictor, train);
  RootCPOptions opts;
  opts.k_directions = config.k_directions;
  opts.eps = config.eps;
  opts.kind = config.method == Method::RootcpHull ? ConvexApprox::Kind::Hull2d
                                                  : ConvexApprox::Kind::Ellipsoid;
  opts.seed = seed;
  predictor.reset_fit_count();
  if (oracle) {
    AugmentedProblem prob{train, x_new, y_true};
    prob.validate();
    Eigen::MatrixXd y_aug(train.n() + 1, train.q());
    y_aug.topRows(train.n()) = train.responses;
    y_aug.row(train.n()) = y_true.transpose();
    opts.fixed_fitted = predictor.fit_predict(prob.augmented_covariates(), y_aug);
    opts.kind = config.method == Method::RootcpHull ? ConvexApprox::Kind::Hull2d
                                                    : ConvexApprox::Kind::Ellipsoid;
  }
  const RootCPResult res =
      rootcp_region(predictor, train, x_new, config.alpha, measure, opts);
  RunOutcome out;
  out.covered = res.approx.contains(y_true);
  out.volume = res.approx.volume();
  out.fits = predictor.fits_performed();
  if (oracle) out.fits = 1;
  return out;
}

RunOutcome run_split(const ExperimentConfig& config, const Predictor& predictor,
                     const Dataset& train, const Eigen::VectorXd& x_new,
                     const Eigen::VectorXd& y_true, std::uint64_t seed) {
  const ConformityMeasure base =
      config.measure_kind == "l1"
          ? ConformityMeasure::l1()
          : ConformityMeasure{ConformityMeasure::Kind::WNorm, {}};  // W estimated inside
  const SplitRegion region = split_conformal(train, x_new, config.alpha,
                                             config.split_frac, predictor, base, seed);
  RunOutcome out;
  out.covered = region.contains(y_true);
  out.volume = region.volume();
  out.fits = predictor.fits_performed();
  return out;
}

RunOutcome run_one(const ExperimentConfig& config, const Predictor& predictor,
                   const Dataset& train, const Eigen::VectorXd& x_new,
                   const Eigen::VectorXd& y_true, std::uint64_t seed) {
  switch (config.method) {
    case Method::ExactUnionSmart:
    case Method::ExactUnionRandom:
      return run_exact_union(config, predictor, train, x_new, y_true, seed);
    case Method::Grid:
      return run_grid(config, predictor, train, x_new, y_true);
    case Method::RootcpEllipse:
    case Method::RootcpHull:
      return run_rootcp(config, predictor, train, x_new, y_true, seed, false);
    case Method::Split:
      return run_split(config, predictor, train, x_new, y_true, seed);
    case Method::OracleCp:
      return run_rootcp(config, predictor, train, x_new, y_true, seed, true);
  }
  throw Error(ErrorCode::Config, "unknown method");
}

}  // namespace

bool SplitRegion::contains(const Eigen::VectorXd& z) const {
  const Eigen::VectorXd r = z - y_hat;
  const double s = measure.kind == ConformityMeasure::Kind::L1 ? r.lpNorm<1>()
                                                               : r.dot(measure.w * r);
  return s <= radius;
}

double SplitRegion::volume() const {
  const int q = static_cast<int>(y_hat.size());
  if (measure.kind == ConformityMeasure::Kind::L1) {
    // L1 ball of radius s: (2s)^q / q!
    return std::pow(2.0 * radius, q) / std::tgamma(q + 1.0);
  }
  const double ball = std::pow(std::numbers::pi, q / 2.0) / std::tgamma(q / 2.0 + 1.0);
  return ball * std::pow(radius, q / 2.0) / std::sqrt(measure.w.determinant());
}

SplitRegion split_conformal(const Dataset& data, const Eigen::VectorXd& x_new,
                            double alpha, double split_frac, const Predictor& predictor,
                            const ConformityMeasure& measure, std::uint64_t seed) {
  data.validate();
  const Eigen::Index n = data.n();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const Eigen::Index n1 =
      std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::floor(split_frac * n)));
  const Eigen::Index n2 = n - n1;
  if (n2 < 1) throw Error(ErrorCode::Config, "calibration set is empty");
  const int k = static_cast<int>(std::ceil((1.0 - alpha) * static_cast<double>(n2 + 1)));
  if (k > n2) {
    throw Error(ErrorCode::Config,
                "level unattainable: calibration set too small for alpha");
  }

  Eigen::MatrixXd x1(n1, data.p()), y1(n1, data.q());
  for (Eigen::Index i = 0; i < n1; ++i) {
    x1.row(i) = data.covariates.row(idx[static_cast<std::size_t>(i)]);
    y1.row(i) = data.responses.row(idx[static_cast<std::size_t>(i)]);
  }

  SplitRegion region;
  region.measure = measure;
  if (measure.kind == ConformityMeasure::Kind::WNorm && measure.w.size() == 0) {
    const Eigen::MatrixXd fitted1 = predictor.fit_predict(x1, y1);
    region.measure = ConformityMeasure::wnorm(inverse_residual_covariance(y1 - fitted1));
  }

  std::vector<double> scores;
  scores.reserve(static_cast<std::size_t>(n2));
  for (Eigen::Index i = n1; i < n; ++i) {
    const Eigen::Index row = idx[static_cast<std::size_t>(i)];
    const Eigen::VectorXd pred =
        predictor.fit_predict_at(x1, y1, data.covariates.row(row).transpose());
    const Eigen::VectorXd r = data.responses.row(row).transpose() - pred;
    scores.push_back(region.measure.kind == ConformityMeasure::Kind::L1
                         ? r.lpNorm<1>()
                         : r.dot(region.measure.w * r));
  }
  std::sort(scores.begin(), scores.end());
  region.radius = scores[static_cast<std::size_t>(k - 1)];
  region.y_hat = predictor.fit_predict_at(x1, y1, x_new);
  return region;
}

Report run_experiment(const ExperimentConfig& config) {
  config.validate();
  using clock = std::chrono::steady_clock;

  std::optional<Dataset> fixed_data;
  if (!config.csv_path.empty()) {
    fixed_data = load_csv(config.csv_path, config.covariate_cols, config.response_cols);
  }

  Report report;
  report.config = config;
  double wall_sum = 0.0;
  double oracle_sum = 0.0;
  int oracle_count = 0;
  double volume_sum = 0.0;
  int finite_count = 0;

  for (int rep = 0; rep < config.repetitions; ++rep) {
    const std::uint64_t rep_seed = sub_seed(config.seed, static_cast<std::uint64_t>(rep));
    RunRecord rec;
    rec.repetition = rep;
    try {
      Dataset full = fixed_data ? *fixed_data
                                : synth_dataset(*config.synthetic, sub_seed(rep_seed, 0));
      std::mt19937_64 rng(sub_seed(rep_seed, 1));
      std::uniform_int_distribution<Eigen::Index> pick(0, full.n() - 1);
      const Eigen::Index held = pick(rng);
      rec.held_out = static_cast<int>(held);

      Dataset train;
      train.covariates.resize(full.n() - 1, full.p());
      train.responses.resize(full.n() - 1, full.q());
      Eigen::Index w = 0;
      for (Eigen::Index i = 0; i < full.n(); ++i) {
        if (i == held) continue;
        train.covariates.row(w) = full.covariates.row(i);
        train.responses.row(w) = full.responses.row(i);
        ++w;
      }
      const Eigen::VectorXd x_new = full.covariates.row(held).transpose();
      const Eigen::VectorXd y_true = full.responses.row(held).transpose();

      const PredictorPtr predictor = make_predictor(config, full.p());
      predictor->set_seed(sub_seed(rep_seed, 2));

      const auto t0 = clock::now();
      const RunOutcome outcome =
          run_one(config, *predictor, train, x_new, y_true, sub_seed(rep_seed, 3));
      rec.wall_seconds = std::chrono::duration<double>(clock::now() - t0).count();
      rec.covered = outcome.covered;
      rec.volume = outcome.volume;
      rec.fits_performed = outcome.fits;

      if (config.normalize_time) {
        ExperimentConfig oc = config;
        oc.method = Method::OracleCp;
        if (config.method == Method::OracleCp) {
          oracle_sum += rec.wall_seconds;
          ++oracle_count;
        } else {
          const PredictorPtr opred = make_predictor(config, full.p());
          opred->set_seed(sub_seed(rep_seed, 2));
          const auto ot0 = clock::now();
          (void)run_one(oc, *opred, train, x_new, y_true, sub_seed(rep_seed, 3));
          oracle_sum += std::chrono::duration<double>(clock::now() - ot0).count();
          ++oracle_count;
        }
      }
    } catch (const std::exception& e) {
      rec.failed = true;
      rec.error = e.what();
      ++report.failed_runs;
    }
    if (!rec.failed) {
      if (rec.covered) ++report.covered_count;
      if (std::isfinite(rec.volume)) {
        volume_sum += rec.volume;
        ++finite_count;
      } else {
        ++report.infinite_volumes;
      }
      wall_sum += rec.wall_seconds;
    }
    report.runs.push_back(std::move(rec));
  }

  report.mean_coverage =
      static_cast<double>(report.covered_count) / static_cast<double>(config.repetitions);
  report.mean_volume = finite_count > 0 ? volume_sum / finite_count : 0.0;
  const int ok_runs = config.repetitions - report.failed_runs;
  report.mean_wall_seconds = ok_runs > 0 ? wall_sum / ok_runs : 0.0;
  report.oracle_mean_seconds = oracle_count > 0 ? oracle_sum / oracle_count : 0.0;
  report.time_normalized = report.oracle_mean_seconds > 0.0
                               ? report.mean_wall_seconds / report.oracle_mean_seconds
                               : 0.0;
  return report;
}

json Report::to_json() const {
  json j;
  j["schema_version"] = 1;
  j["config"] = config.to_json();
  j["summary"] = {{"mean_coverage", mean_coverage},
                  {"covered_count", covered_count},
                  {"repetitions", config.repetitions},
                  {"mean_volume", mean_volume},
                  {"infinite_volumes", infinite_volumes},
                  {"failed_runs", failed_runs},
                  {"mean_wall_seconds", mean_wall_seconds},
                  {"oracle_mean_seconds", oracle_mean_seconds},
                  {"time_normalized", time_normalized}};
  json runs = json::array();
  for (const auto& r : this->runs) {
    runs.push_back({{"repetition", r.repetition},
                    {"held_out", r.held_out},
                    {"covered", r.covered},
                    {"volume", r.volume},
                    {"wall_seconds", r.wall_seconds},
                    {"fits_performed", r.fits_performed},
                    {"failed", r.failed},
                    {"error", r.error}});
  }
  j["runs"] = runs;
  return j;
}

void emit_report(const Report& report, const std::string& format,
                 const std::string& path) {
  if (report.runs.empty()) {
    throw Error(ErrorCode::Config, "refusing to emit a report with no runs");
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Data, "cannot write report file: " + path);
  if (format == "json") {
    out << report.to_json().dump(2) << "\n";
    return;
  }
  if (format != "csv") {
    throw Error(ErrorCode::Config, "report format must be 'json' or 'csv'");
  }
  out.precision(17);
  out << "schema_version,row_type,repetition,held_out,covered,volume,"
         "fits_performed,failed,mean_coverage,mean_volume,infinite_volumes,"
         "wall_seconds,time_normalized\n";
  for (const auto& r : report.runs) {
    out << "1,run," << r.repetition << "," << r.held_out << "," << (r.covered ? 1 : 0)
        << "," << r.volume << "," << r.fits_performed << "," << (r.failed ? 1 : 0)
        << ",,,," << r.wall_seconds << ",\n";
  }
  out << "1,summary,,,,,,," << report.mean_coverage << "," << report.mean_volume << ","
      << report.infinite_volumes << "," << report.mean_wall_seconds << ","
      << report.time_normalized << "\n";
}

void export_grid_csv(const GridRegion& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Data, "cannot write file: " + path);
  out.precision(17);
  const Eigen::Index q = grid.spec.lower.size();
  for (Eigen::Index k = 0; k < q; ++k) out << "z" << (k + 1) << ",";
  out << "pvalue_num,pvalue_den,mask\n";
  for (std::int64_t g = 0; g < grid.spec.total_points(); ++g) {
    const Eigen::VectorXd z = grid.spec.point(g);
    for (Eigen::Index k = 0; k < q; ++k) out << z[k] << ",";
    out << grid.pvalues[static_cast<std::size_t>(g)].num << ","
        << grid.pvalues[static_cast<std::size_t>(g)].den << ","
        << (grid.mask[static_cast<std::size_t>(g)] ? 1 : 0) << "\n";
  }
}

void export_changepoints_csv(const std::vector<ChangeLine>& lines,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Data, "cannot write file: " + path);
  out.precision(17);
  out << "normal_x,normal_y,offset,s1,s2,s3,s4\n";
  for (const auto& ln : lines) {
    out << ln.normal[0] << "," << ln.normal[1] << "," << ln.offset << "," << ln.signs[0]
        << "," << ln.signs[1] << "," << ln.signs[2] << "," << ln.signs[3] << "\n";
  }
}

void export_union_grid_csv(const UnionRegion& region, const GridSpec& grid,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Data, "cannot write file: " + path);
  out.precision(17);
  const Eigen::Index q = grid.lower.size();
  for (Eigen::Index k = 0; k < q; ++k) out << "z" << (k + 1) << ",";
  out << "member\n";
  for (std::int64_t g = 0; g < grid.total_points(); ++g) {
    const Eigen::VectorXd z = grid.point(g);
    for (Eigen::Index k = 0; k < q; ++k) out << z[k] << ",";
    out << (region.contains(z) ? 1 : 0) << "\n";
  }
}

void export_rootcp(const RootCPResult& result, const std::string& csv_path,
                   const std::string& json_path) {
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    if (!out) throw Error(ErrorCode::Data, "cannot write file: " + csv_path);
    out.precision(17);
    const Eigen::Index q = result.z0.size();
    for (Eigen::Index k = 0; k < q; ++k) out << "z" << (k + 1) << ",";
    out << "t,side,iterations,residual\n";
    for (const auto& bp : result.points) {
      for (Eigen::Index k = 0; k < q; ++k) out << bp.z[k] << ",";
      out << bp.t << "," << (bp.side == BoundaryPoint::Side::Lower ? "lower" : "upper")
          << "," << bp.iterations << "," << bp.residual << "\n";
    }
  }
  if (!json_path.empty()) {
    json j;
    j["schema_version"] = 1;
    j["z0"] = std::vector<double>(result.z0.data(), result.z0.data() + result.z0.size());
    j["fits_performed"] = result.fits_performed;
    if (result.approx.kind == ConvexApprox::Kind::Ellipsoid) {
      j["kind"] = "ellipsoid";
      j["center"] = std::vector<double>(result.approx.center.data(),
                                        result.approx.center.data() +
                                            result.approx.center.size());
      json shape = json::array();
      for (Eigen::Index r = 0; r < result.approx.shape.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < result.approx.shape.cols(); ++c) {
          row.push_back(result.approx.shape(r, c));
        }
        shape.push_back(row);
      }
      j["shape"] = shape;
    } else {
      j["kind"] = "hull2d";
      json verts = json::array();
      for (const auto& v : result.approx.hull) verts.push_back({v.x(), v.y()});
      j["vertices"] = verts;
    }
    std::ofstream out(json_path);
    if (!out) throw Error(ErrorCode::Data, "cannot write file: " + json_path);
    out << j.dump(2) << "\n";
  }
}

}  // namespace mconf
