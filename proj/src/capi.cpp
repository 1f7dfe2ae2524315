#include "mconf/mconf_c.h"

#include "mconf/bench.hpp"

#include <json.hpp>

#include <fstream>
#include <functional>
#include <memory>
#include <string>

namespace {

using nlohmann::json;

thread_local std::string g_last_error;

int guard(const std::function<void()>& fn) {
  try {
    fn();
    g_last_error.clear();
    return MCONF_OK;
  } catch (const mconf::Error& e) {
    g_last_error = e.what();
    return static_cast<int>(e.code());
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return MCONF_ERR_CONFIG;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MCONF_ERR_NUMERIC;
  }
}

json parse_json(const char* text, const char* what) {
  if (text == nullptr) {
    throw mconf::Error(mconf::ErrorCode::Config, std::string(what) + " is null");
  }
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw mconf::Error(mconf::ErrorCode::Config,
                       std::string(what) + " parse error: " + e.what());
  }
}

std::string require_path(const char* path, const char* what) {
  if (path == nullptr || *path == '\0') {
    throw mconf::Error(mconf::ErrorCode::Config, std::string(what) + " is required");
  }
  return path;
}

mconf::Dataset dataset_from_config(const mconf::ExperimentConfig& config) {
  if (!config.csv_path.empty()) {
    return mconf::load_csv(config.csv_path, config.covariate_cols, config.response_cols);
  }
  return mconf::synth_dataset(*config.synthetic, config.seed);
}

struct HeldOutProblem {
  mconf::Dataset train;
  Eigen::VectorXd x_new;
  Eigen::VectorXd y_true;
};

HeldOutProblem hold_out(const mconf::Dataset& full, Eigen::Index held) {
  if (held < 0 || held >= full.n()) {
    throw mconf::Error(mconf::ErrorCode::Config, "held_out row out of range");
  }
  if (full.n() < 2) {
    throw mconf::Error(mconf::ErrorCode::Data, "need at least two rows to hold one out");
  }
  HeldOutProblem prob;
  prob.train.covariates.resize(full.n() - 1, full.p());
  prob.train.responses.resize(full.n() - 1, full.q());
  Eigen::Index w = 0;
  for (Eigen::Index i = 0; i < full.n(); ++i) {
    if (i == held) continue;
    prob.train.covariates.row(w) = full.covariates.row(i);
    prob.train.responses.row(w) = full.responses.row(i);
    ++w;
  }
  prob.x_new = full.covariates.row(held).transpose();
  prob.y_true = full.responses.row(held).transpose();
  return prob;
}

mconf::GridSpec grid_from_config(const json& j, const mconf::ExperimentConfig& config,
                                 const mconf::Dataset& train) {
  const mconf::Box box = mconf::Box::around_responses(train.responses);
  mconf::GridSpec grid{box.lower, box.upper, config.grid_points};
  if (j.contains("lower")) {
    const auto v = j.at("lower").get<std::vector<double>>();
    grid.lower = Eigen::Map<const Eigen::VectorXd>(v.data(),
                                                   static_cast<Eigen::Index>(v.size()));
  }
  if (j.contains("upper")) {
    const auto v = j.at("upper").get<std::vector<double>>();
    grid.upper = Eigen::Map<const Eigen::VectorXd>(v.data(),
                                                   static_cast<Eigen::Index>(v.size()));
  }
  grid.validate();
  return grid;
}

}  // namespace

extern "C" {

const char* mconf_last_error(void) { return g_last_error.c_str(); }

int mconf_run_experiment(const char* config_json, const char* format,
                         const char* out_path) {
  return guard([&] {
    const json j = parse_json(config_json, "config");
    const mconf::ExperimentConfig config = mconf::ExperimentConfig::from_json(j);
    config.validate();
    const mconf::Report report = mconf::run_experiment(config);
    mconf::emit_report(report, format ? format : "json",
                       require_path(out_path, "output path"));
  });
}

int mconf_synth_csv(const char* spec_json, unsigned long long seed,
                    const char* out_path) {
  return guard([&] {
    const json j = parse_json(spec_json, "spec");
    mconf::SyntheticSpec spec;
    spec.n = j.value("n", spec.n);
    spec.p = j.value("p", spec.p);
    spec.q = j.value("q", spec.q);
    spec.informative_frac = j.value("informative_frac", spec.informative_frac);
    spec.effective_rank_frac = j.value("effective_rank_frac", spec.effective_rank_frac);
    spec.noise_sd = j.value("noise_sd", spec.noise_sd);
    mconf::save_csv(mconf::synth_dataset(spec, seed), require_path(out_path, "output path"));
  });
}

int mconf_grid_export(const char* config_json, const char* out_path) {
  return guard([&] {
    const json j = parse_json(config_json, "config");
    const mconf::ExperimentConfig config = mconf::ExperimentConfig::from_json(j);
    config.validate();
    const mconf::Dataset full = dataset_from_config(config);
    const auto prob = hold_out(full, j.value("held_out", full.n() - 1));
    const mconf::PredictorPtr predictor = mconf::make_predictor(config, full.p());
    predictor->set_seed(config.seed);
    const mconf::ConformityMeasure measure =
        mconf::make_measure(config, *predictor, prob.train);
    const mconf::GridSpec grid = grid_from_config(j, config, prob.train);
    const mconf::GridRegion region = mconf::grid_region(*predictor, prob.train,
                                                        prob.x_new, config.alpha, grid,
                                                        measure);
    mconf::export_grid_csv(region, require_path(out_path, "output path"));
  });
}

int mconf_region_export(const char* config_json, const char* csv_path,
                        const char* json_path) {
  return guard([&] {
    const json j = parse_json(config_json, "config");
    const mconf::ExperimentConfig config = mconf::ExperimentConfig::from_json(j);
    config.validate();
    const mconf::Dataset full = dataset_from_config(config);
    const auto prob = hold_out(full, j.value("held_out", full.n() - 1));
    const mconf::PredictorPtr predictor = mconf::make_predictor(config, full.p());
    predictor->set_seed(config.seed);
    const mconf::ConformityMeasure measure =
        mconf::make_measure(config, *predictor, prob.train);
    const std::string csv = csv_path ? csv_path : "";
    const std::string jsn = json_path ? json_path : "";
    if (csv.empty() && jsn.empty()) {
      throw mconf::Error(mconf::ErrorCode::Config, "no output path given");
    }

    if (config.method == mconf::Method::RootcpEllipse ||
        config.method == mconf::Method::RootcpHull) {
      mconf::RootCPOptions opts;
      opts.k_directions = config.k_directions;
      opts.eps = config.eps;
      opts.kind = config.method == mconf::Method::RootcpHull
                      ? mconf::ConvexApprox::Kind::Hull2d
                      : mconf::ConvexApprox::Kind::Ellipsoid;
      opts.seed = config.seed;
      const mconf::RootCPResult result = mconf::rootcp_region(
          *predictor, prob.train, prob.x_new, config.alpha, measure, opts);
      mconf::export_rootcp(result, csv, jsn);
      return;
    }

    if (config.method == mconf::Method::ExactUnionSmart ||
        config.method == mconf::Method::ExactUnionRandom) {
      if (!predictor->has_hat()) {
        throw mconf::Error(mconf::ErrorCode::Config,
                           "exact union methods require a hat-matrix predictor");
      }
      mconf::AugmentedProblem aug{prob.train, prob.x_new, std::nullopt};
      aug.validate();
      const mconf::HatSet hats =
          predictor->build_hat(aug.augmented_covariates(), prob.train.q());
      auto coeffs = std::make_shared<const mconf::AffineCoeffs>(
          mconf::affine_coeffs(hats, prob.train.responses));
      const Eigen::Index n = prob.train.n();
      std::vector<mconf::RegionPtr> regions;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (measure.kind == mconf::ConformityMeasure::Kind::WNorm) {
          regions.push_back(std::make_shared<mconf::QuadraticRegion>(
              mconf::region_wnorm(*coeffs, measure.w, i)));
        } else {
          regions.push_back(
              std::make_shared<mconf::L1Region>(mconf::region_l1(coeffs, i)));
        }
      }
      const mconf::Box box = mconf::Box::around_responses(prob.train.responses);
      mconf::UnionRegion u = [&] {
        if (config.method == mconf::Method::ExactUnionRandom) {
          const int k = config.random_k > 0
                            ? config.random_k
                            : mconf::region_membership_threshold(n, config.alpha);
          return mconf::random_union(regions, k, config.seed);
        }
        std::vector<mconf::VolumeEstimate> volumes;
        for (std::size_t i = 0; i < regions.size(); ++i) {
          volumes.push_back(mconf::region_volume(
              *regions[i], box, std::max(1000, config.mc_samples / 10),
              config.seed + i));
        }
        return mconf::smart_union(regions, config.alpha, volumes);
      }();
      if (!csv.empty()) {
        const mconf::GridSpec grid = grid_from_config(j, config, prob.train);
        mconf::export_union_grid_csv(u, grid, csv);
      }
      if (!jsn.empty()) {
        json out;
        out["schema_version"] = 1;
        out["alpha"] = u.alpha_nominal();
        json members = json::array();
        for (const auto& r : u.members()) members.push_back(r->obs_index());
        out["members"] = members;
        out["coverage_lower_bound"] =
            static_cast<double>(u.members().size()) / static_cast<double>(n + 1);
        std::ofstream f(jsn);
        if (!f) throw mconf::Error(mconf::ErrorCode::Data, "cannot write file: " + jsn);
        f << out.dump(2) << "\n";
      }
      return;
    }

    throw mconf::Error(mconf::ErrorCode::Config,
                       "region export supports rootcp and exact union methods only");
  });
}

struct mconf_dataset {
  mconf::Dataset data;
};

mconf_dataset* mconf_dataset_create(const double* x, const double* y, int n, int p,
                                    int q) {
  mconf_dataset* out = nullptr;
  const int rc = guard([&] {
    if (x == nullptr || y == nullptr) {
      throw mconf::Error(mconf::ErrorCode::Config, "null data pointer");
    }
    if (n < 1 || p < 1 || q < 1) {
      throw mconf::Error(mconf::ErrorCode::Config, "n, p, q must be >= 1");
    }
    auto handle = std::make_unique<mconf_dataset>();
    handle->data.covariates =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                       Eigen::RowMajor>>(x, n, p);
    handle->data.responses =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                       Eigen::RowMajor>>(y, n, q);
    handle->data.validate();
    out = handle.release();
  });
  (void)rc;
  return out;
}

void mconf_dataset_free(mconf_dataset* data) { delete data; }

int mconf_dataset_dims(const mconf_dataset* data, int* n, int* p, int* q) {
  return guard([&] {
    if (data == nullptr) {
      throw mconf::Error(mconf::ErrorCode::Config, "null dataset handle");
    }
    if (n) *n = static_cast<int>(data->data.n());
    if (p) *p = static_cast<int>(data->data.p());
    if (q) *q = static_cast<int>(data->data.q());
  });
}

struct mconf_exact {
  mconf::AffineCoeffs coeffs;
  mconf::ConformityMeasure measure;
  Eigen::Index n = 0;  // training rows
};

mconf_exact* mconf_exact_create(const mconf_dataset* data, const double* x_new,
                                const char* predictor_json, const char* measure) {
  mconf_exact* out = nullptr;
  const int rc = guard([&] {
    if (data == nullptr || x_new == nullptr) {
      throw mconf::Error(mconf::ErrorCode::Config, "null argument");
    }
    json j;
    j["predictor"] = parse_json(predictor_json ? predictor_json : "{\"id\":\"ridge\"}",
                                "predictor");
    j["measure"] = {{"kind", measure ? measure : "l1"}};
    const mconf::ExperimentConfig config = mconf::ExperimentConfig::from_json(j);
    const mconf::PredictorPtr predictor = mconf::make_predictor(config, data->data.p());
    if (!predictor->has_hat()) {
      throw mconf::Error(mconf::ErrorCode::Config,
                         "exact path requires a hat-matrix predictor");
    }
    auto handle = std::make_unique<mconf_exact>();
    handle->measure = mconf::make_measure(config, *predictor, data->data);
    mconf::AugmentedProblem prob{
        data->data, Eigen::Map<const Eigen::VectorXd>(x_new, data->data.p()),
        std::nullopt};
    prob.validate();
    const mconf::HatSet hats =
        predictor->build_hat(prob.augmented_covariates(), data->data.q());
    handle->coeffs = mconf::affine_coeffs(hats, data->data.responses);
    handle->n = data->data.n();
    out = handle.release();
  });
  (void)rc;
  return out;
}

void mconf_exact_free(mconf_exact* state) { delete state; }

int mconf_exact_pvalue(const mconf_exact* state, const double* z, long long* num,
                       long long* den) {
  return guard([&] {
    if (state == nullptr || z == nullptr || num == nullptr || den == nullptr) {
      throw mconf::Error(mconf::ErrorCode::Config, "null argument");
    }
    const mconf::Rational p = mconf::pvalue_exact(
        state->coeffs, state->measure,
        Eigen::Map<const Eigen::VectorXd>(z, state->coeffs.q()));
    *num = p.num;
    *den = p.den;
  });
}

int mconf_exact_member(const mconf_exact* state, const double* z, double alpha,
                       int* member) {
  return guard([&] {
    if (state == nullptr || z == nullptr || member == nullptr) {
      throw mconf::Error(mconf::ErrorCode::Config, "null argument");
    }
    const Eigen::Map<const Eigen::VectorXd> zz(z, state->coeffs.q());
    const double s_new = mconf::score_closed(state->coeffs, state->measure, state->n, zz);
    int rank = 1;
    for (Eigen::Index i = 0; i < state->n; ++i) {
      if (mconf::score_closed(state->coeffs, state->measure, i, zz) <= s_new) ++rank;
    }
    *member = rank <= mconf::region_membership_threshold(state->n, alpha) ? 1 : 0;
  });
}

}  // extern "C"
