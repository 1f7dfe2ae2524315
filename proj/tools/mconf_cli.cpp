// Command-line front end; all work goes through the shared-library C API.
#include "mconf/mconf_c.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

namespace {

using nlohmann::json;

int fail(int code) {
  std::fprintf(stderr, "error: %s\n", mconf_last_error());
  return code;
}

// Reads the config file and applies command-line overrides on top.
std::optional<std::string> load_config(const std::string& path,
                                       const std::optional<double>& alpha,
                                       const std::optional<unsigned long long>& seed,
                                       const std::optional<std::string>& method,
                                       const std::optional<int>& reps,
                                       const std::optional<int>& k_directions,
                                       const std::optional<double>& eps) {
  std::ifstream in(path);
  if (!in) {
    std::fprintf(stderr, "error: cannot open config file: %s\n", path.c_str());
    return std::nullopt;
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: config parse error: %s\n", e.what());
    return std::nullopt;
  }
  if (alpha) j["alpha"] = *alpha;
  if (seed) j["seed"] = *seed;
  if (method) j["method"] = *method;
  if (reps) j["repetitions"] = *reps;
  if (k_directions) j["k_directions"] = *k_directions;
  if (eps) j["eps"] = *eps;
  return j.dump();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformal prediction regions for vector responses"};
  app.require_subcommand(1);

  std::string config_path, out_path, format = "json";
  std::string csv_path, json_path;
  std::optional<double> alpha, eps;
  std::optional<unsigned long long> seed;
  std::optional<std::string> method;
  std::optional<int> reps, k_directions;

  const auto add_overrides = [&](CLI::App* cmd) {
    cmd->add_option("--alpha", alpha, "miscoverage level in (0,1)");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--method", method, "region construction method");
    cmd->add_option("--reps", reps, "number of repetitions");
    cmd->add_option("--k-directions", k_directions, "boundary search directions");
    cmd->add_option("--eps", eps, "bisection tolerance");
  };

  auto* run = app.add_subcommand("run", "run a benchmark experiment");
  run->add_option("-c,--config", config_path, "JSON config file")->required();
  run->add_option("-o,--out", out_path, "report output path")->required();
  run->add_option("--format", format, "report format: json or csv");
  add_overrides(run);

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset CSV");
  std::string spec_json = "{}";
  unsigned long long synth_seed = 0;
  synth->add_option("--spec", spec_json, "JSON spec (n, p, q, noise_sd, ...)");
  synth->add_option("--seed", synth_seed, "random seed");
  synth->add_option("-o,--out", out_path, "CSV output path")->required();

  auto* grid = app.add_subcommand("grid-export", "p-values over a response grid");
  grid->add_option("-c,--config", config_path, "JSON config file")->required();
  grid->add_option("-o,--out", out_path, "CSV output path")->required();
  add_overrides(grid);

  auto* region = app.add_subcommand("region-export", "export one prediction region");
  region->add_option("-c,--config", config_path, "JSON config file")->required();
  region->add_option("--csv", csv_path, "CSV output path");
  region->add_option("--json", json_path, "JSON output path");
  add_overrides(region);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : MCONF_ERR_CONFIG;
  }

  if (synth->parsed()) {
    const int rc = mconf_synth_csv(spec_json.c_str(), synth_seed, out_path.c_str());
    return rc == MCONF_OK ? 0 : fail(rc);
  }

  const auto config =
      load_config(config_path, alpha, seed, method, reps, k_directions, eps);
  if (!config) return MCONF_ERR_CONFIG;

  int rc = MCONF_ERR_CONFIG;
  if (run->parsed()) {
    rc = mconf_run_experiment(config->c_str(), format.c_str(), out_path.c_str());
  } else if (grid->parsed()) {
    rc = mconf_grid_export(config->c_str(), out_path.c_str());
  } else if (region->parsed()) {
    rc = mconf_region_export(config->c_str(), csv_path.c_str(), json_path.c_str());
  }
  return rc == MCONF_OK ? 0 : fail(rc);
}
