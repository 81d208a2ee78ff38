#include "cgt/analysis.hpp"
#include "cgt/compressors.hpp"
#include "cgt/harness.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

constexpr int kOk = 0;
constexpr int kRunFailure = 1;
constexpr int kConfigError = 2;

nlohmann::json load_json(const std::string& arg) {
  std::string text = arg;
  if (std::filesystem::is_regular_file(arg)) {
    std::ifstream in(arg);
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw cgt::ParameterError("cannot parse '" + arg + "' as a file or JSON: " + e.what());
  }
}

cgt::ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed,
                                  const std::string& out_dir, bool force) {
  if (!std::filesystem::is_regular_file(path))
    throw cgt::ParameterError("config file '" + path + "' not found");
  auto cfg = cgt::ExperimentConfig::from_json(load_json(path));
  cfg.seed = cgt::resolve_root_seed(seed, cfg.seed);
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (force) cfg.force_params = true;
  return cfg;
}

std::string gnuplot_script(const cgt::ExperimentResult& res) {
  std::string s = "set logscale y\nset xlabel 'k'\nset ylabel 'consensus_err + opt_gap'\n"
                  "set datafile separator ','\nplot ";
  bool first = true;
  for (const auto& c : res.cells) {
    if (!c.error.empty()) continue;
    if (!first) s += ", \\\n     ";
    s += "'" + c.name + ".csv' using 1:($2+$3) every ::1 with lines title '" + c.name + "'";
    first = false;
  }
  return s + "\n";
}

int finish_experiment(const cgt::ExperimentResult& res, const cgt::ExperimentConfig& cfg,
                      bool gnuplot) {
  std::cout << res.report.to_json().dump(2) << "\n";
  if (gnuplot && !cfg.output_dir.empty()) {
    std::ofstream(std::filesystem::path(cfg.output_dir) / "plot.gp") << gnuplot_script(res);
  }
  for (const auto& c : res.cells)
    if (!c.error.empty() || c.trace.status != cgt::RunStatus::Ok) return kRunFailure;
  return kOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compressed gradient-tracking simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir, spec_arg;
  std::optional<std::uint64_t> seed;
  bool force = false, gnuplot = false;
  int dim = 50, trials = 1000;
  std::string mode = "both";

  auto* run_cmd = app.add_subcommand("run", "Run an experiment config");
  run_cmd->add_option("config", config_path, "Config file (JSON)")->required();
  run_cmd->add_option("--seed", seed, "Root seed (overrides CGT_SEED and the config)");
  run_cmd->add_option("--out", out_dir, "Output directory");
  run_cmd->add_flag("--force", force, "Accept parameters outside the certified regions");
  run_cmd->add_flag("--gnuplot", gnuplot, "Also write a gnuplot script");

  auto* bounds_cmd = app.add_subcommand("bounds", "Print theorem constants for each cell");
  bounds_cmd->add_option("config", config_path, "Config file (JSON)")->required();
  bounds_cmd->add_option("--seed", seed, "Root seed");

  auto* verify_cmd = app.add_subcommand("verify-compressor", "Monte-Carlo check of a compressor");
  verify_cmd->add_option("spec", spec_arg, "Compressor spec (file or inline JSON)")->required();
  verify_cmd->add_option("--dim", dim, "Dimension when the spec has no 'dim'");
  verify_cmd->add_option("--trials", trials, "Number of trial points");
  verify_cmd->add_option("--seed", seed, "Seed");

  auto* rep_cmd = app.add_subcommand("replicate-section5", "Built-in n=20, d=50 logistic scenario");
  rep_cmd->add_option("--out", out_dir, "Output directory")->default_val("replication_out");
  rep_cmd->add_option("--mode", mode, "practical, certified or both")
      ->check(CLI::IsMember({"practical", "certified", "both"}));
  rep_cmd->add_option("--seed", seed, "Root seed");
  rep_cmd->add_flag("--gnuplot", gnuplot, "Also write gnuplot scripts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run_cmd) {
      const auto cfg = load_config(config_path, seed, out_dir, force);
      const auto res = cgt::run_experiment(cfg);
      return finish_experiment(res, cfg, gnuplot);
    }
    if (*bounds_cmd) {
      const auto cfg = load_config(config_path, seed, "", false);
      const auto sc = cgt::build_scenario(cfg);
      nlohmann::json out;
      out["sigma"] = sc.network.sigma();
      out["L"] = sc.L;
      out["nu"] = sc.nu ? nlohmann::json(*sc.nu) : nlohmann::json(nullptr);
      out["f_star"] = sc.reference.f_star;
      out["cells"] = nlohmann::json::array();
      for (const auto& cell : cfg.cells) {
        nlohmann::json cj = {{"name", cell.name}, {"algo", cgt::to_string(cell.algo)}};
        try {
          const auto comp = cell.algo == cgt::Algorithm::DGT
                                ? cgt::CompressorSpec::identity(sc.suite.d())
                                : cgt::CompressorSpec::from_json(cell.compressor, sc.suite.d());
          cj["bounds"] = cgt::cell_bounds(sc, cell, comp).to_json();
        } catch (const cgt::ParameterError& e) {
          cj["error"] = e.what();
        }
        out["cells"].push_back(cj);
      }
      std::cout << out.dump(2) << "\n";
      return kOk;
    }
    if (*verify_cmd) {
      const auto j = load_json(spec_arg);
      const int d = j.value("dim", dim);
      const auto spec = cgt::CompressorSpec::from_json(j, d);
      spec.validate();
      cgt::Rng rng(cgt::resolve_root_seed(seed, 0));
      const auto rep = cgt::verify_assumption(spec, trials, rng);
      nlohmann::json out = {{"compressor", spec.to_json()},
                            {"pass", rep.pass},
                            {"trials", rep.trials},
                            {"violations", rep.violations},
                            {"max_observed_ratio", rep.max_observed_ratio},
                            {"threshold", rep.threshold}};
      std::cout << out.dump(2) << "\n";
      return rep.pass ? kOk : kRunFailure;
    }
    if (*rep_cmd) {
      int code = kOk;
      for (bool certified : {false, true}) {
        if ((certified && mode == "practical") || (!certified && mode == "certified")) continue;
        auto cfg = cgt::replication_config(certified);
        cfg.seed = cgt::resolve_root_seed(seed, cfg.seed);
        cfg.output_dir = (std::filesystem::path(out_dir) / (certified ? "certified" : "practical")).string();
        const auto res = cgt::run_experiment(cfg);
        code = std::max(code, finish_experiment(res, cfg, gnuplot));
      }
      return code;
    }
  } catch (const cgt::ParameterError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "run failure: " << e.what() << "\n";
    return kRunFailure;
  }
  return kOk;
}
