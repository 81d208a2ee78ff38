#include "fixtures.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace cgt;
namespace fs = std::filesystem;

namespace {

RunTrace synthetic(const std::vector<double>& metric, std::uint64_t per_iter = 10) {
  RunTrace t;
  for (std::size_t k = 0; k < metric.size(); ++k) {
    TraceRecord r;
    r.k = static_cast<int>(k);
    r.consensus_err = metric[k] / 2;
    r.opt_gap = metric[k] / 2;
    r.bits = k * per_iter;
    t.records.push_back(r);
  }
  t.bits_per_iteration = per_iter;
  return t;
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.scenario = "small";
  c.seed = 5;
  c.n = 6;
  c.density = 0.5;
  c.cost = {{"kind", "quadratic"}, {"d", 4}, {"rows", 2}};
  c.iters = 400;
  c.threshold = 1e-4;
  c.force_params = true;
  c.cells = {
      {"dgt", Algorithm::DGT, {{"kind", "identity"}}, AlgorithmParams{0.2, 0.3}},
      {"a1", Algorithm::CGT, {{"kind", "norm_sign"}}, AlgorithmParams{0.2, 0.3, 0.3, 0.3}},
      {"a3", Algorithm::Scaled, {{"kind", "uniform_quantize"}, {"delta", 2.0}},
       AlgorithmParams{0.2, 0.3, 1, 1, 0, 5.0, 0.95}},
  };
  return c;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("cgt_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli(const std::string& args, const fs::path& log = {}) {
  std::string cmd = std::string(CGT_CLI_PATH) + " " + args;
  cmd += log.empty() ? " > /dev/null 2>&1" : " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

const ExperimentResult& replication_run() {
  static const ExperimentResult r = run_experiment(replication_config(false));
  return r;
}

const CellResult& cell(const ExperimentResult& r, const std::string& name) {
  for (const auto& c : r.cells)
    if (c.name == name) return c;
  throw std::runtime_error("missing cell " + name);
}

} // namespace

TEST_CASE("upsilon is a running minimum") {
  const auto t = synthetic({5, 3, 4, 1, 2, 0.5});
  CHECK(upsilon(t, 0) == 5);
  CHECK(upsilon(t, 2) == 3);
  CHECK(upsilon(t, 4) == 1);
  CHECK(upsilon(t, 5) == 0.5);
  const auto dec = synthetic({8, 4, 2, 1});
  for (int T = 0; T < 4; ++T) CHECK(upsilon(dec, T) == dec.records[T].consensus_err * 2);
}

TEST_CASE("bits to threshold") {
  const auto t = synthetic({5, 3, 4, 1, 2, 0.5}, 7);
  auto hit = bits_to_threshold(t, 10.0);
  REQUIRE(hit);
  CHECK(hit->k == 0);
  CHECK(hit->bits == 0);
  hit = bits_to_threshold(t, 1.5);
  REQUIRE(hit);
  CHECK(hit->k == 3);
  CHECK(hit->bits == 21);
  CHECK_FALSE(bits_to_threshold(t, 0.1));
}

TEST_CASE("upsilon matches a recomputation from raw states") {
  const auto p = fixtures::pl_problem();
  Simulator sim(Algorithm::CGT, p.net, CompressorSpec::norm_sign(p.suite.d()), {0.2, 0.3, 0.3, 0.3},
                p.suite, p.X0, 3);
  std::vector<double> raw;
  RunOptions opts;
  opts.f_star = p.ref.f_star;
  opts.observer = [&](const Simulator& s) {
    const Mat X = s.stacked(Field::X);
    double cons = 0.0;
    const Vec xbar = X.rowwise().mean();
    for (int i = 0; i < X.cols(); ++i) cons += (X.col(i) - xbar).squaredNorm();
    raw.push_back(cons + X.cols() * (s.suite().global_value(xbar) - p.ref.f_star));
  };
  const auto trace = run(sim, 50, opts);
  double best = kInf, prev = kInf;
  for (int T = 0; T <= 50; ++T) {
    best = std::min(best, raw[T]);
    const double u = upsilon(trace, T);
    CHECK(u == doctest::Approx(best).epsilon(1e-12));
    CHECK(u <= prev);
    prev = u;
  }
}

TEST_CASE("uncompressed baseline costs two vectors per directed edge") {
  const auto net = generate_network(20, 0.3, 7);
  const auto suite = make_logistic_suite(20, 50, 8);
  const Mat X0 = Mat::Zero(50, 20);
  Simulator sim(Algorithm::DGT, net, CompressorSpec::identity(50), {0.1, 0.3}, suite, X0, 1);
  const std::uint64_t edges = net.edges().size();
  CHECK(sim.bits_per_iteration(BitCostModel{}, false) == 2 * edges * 50 * 64);
  CHECK(sim.bits_per_iteration(BitCostModel{}, true) == 2 * 20 * 50 * 64);
}

TEST_CASE("experiment outputs") {
  auto cfg = small_config();
  const auto dir_a = scratch("a"), dir_b = scratch("b");
  cfg.output_dir = dir_a.string();
  const auto res = run_experiment(cfg);
  cfg.output_dir = dir_b.string();
  run_experiment(cfg);

  for (const char* f : {"dgt.csv", "a1.csv", "a3.csv", "report.json", "config.resolved.json"}) {
    REQUIRE(fs::exists(dir_a / f));
    CHECK_MESSAGE(slurp(dir_a / f) == slurp(dir_b / f), f);
  }
  const auto csv = slurp(dir_a / "a1.csv");
  CHECK(csv.rfind("k,consensus_err,opt_gap,stationarity,lyapunov,bits\n", 0) == 0);

  // All cells start from the same X0.
  const auto& r0 = res.cells[0].trace.records[0];
  for (const auto& c : res.cells) {
    CHECK(c.error.empty());
    CHECK(c.trace.records[0].consensus_err == r0.consensus_err);
    CHECK(c.trace.records[0].opt_gap == r0.opt_gap);
    // Conservation: cumulative bits equal iterations times the per-iteration cost.
    CHECK(c.trace.records.back().bits ==
          std::uint64_t(c.trace.records.back().k) * c.trace.bits_per_iteration);
    // Upsilon from the in-memory trace equals the one recomputed from the CSV.
    std::istringstream in(slurp(dir_a / (c.name + ".csv")));
    std::string line;
    std::getline(in, line);
    double best = kInf;
    while (std::getline(in, line)) {
      std::istringstream row(line);
      std::string k, ce, og;
      std::getline(row, k, ',');
      std::getline(row, ce, ',');
      std::getline(row, og, ',');
      best = std::min(best, std::stod(ce) + std::stod(og));
    }
    CHECK(best == upsilon(c.trace, cfg.iters));
  }
  REQUIRE(res.report.baseline);
  REQUIRE(res.report.baseline->bits);
  CHECK(res.report.rows[0].percent.value_or(0) == doctest::Approx(100.0));
  const auto report = nlohmann::json::parse(slurp(dir_a / "report.json"));
  CHECK(report.at("scenario") == "small");
  CHECK(report.at("rows").size() == 3);
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("configuration errors leave no output") {
  auto cfg = small_config();
  const auto dir = scratch("bad");
  cfg.output_dir = dir.string();
  cfg.cells[1].compressor = {{"kind", "does_not_exist"}};
  CHECK_THROWS_AS(run_experiment(cfg), ParameterError);
  CHECK_FALSE(fs::exists(dir));

  auto unforced = small_config();
  unforced.force_params = false;
  unforced.output_dir = dir.string();
  CHECK_THROWS_AS(run_experiment(unforced), ParameterError);
  CHECK_FALSE(fs::exists(dir));

  CHECK_THROWS_AS(ExperimentConfig::from_json({{"cells", nlohmann::json::array()}, {"bogus", 1}}),
                  ParameterError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"iters", "many"}}), ParameterError);
}

TEST_CASE("config round trip and seed precedence") {
  const auto cfg = replication_config(false);
  const auto back = ExperimentConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  std::ifstream in(std::string(CGT_SOURCE_DIR) + "/configs/replication.json");
  const auto shipped = ExperimentConfig::from_json(nlohmann::json::parse(in));
  CHECK(shipped.to_json() == cfg.to_json());

  ::unsetenv("CGT_SEED");
  CHECK(resolve_root_seed(std::nullopt, 5) == 5);
  ::setenv("CGT_SEED", "77", 1);
  CHECK(resolve_root_seed(std::nullopt, 5) == 77);
  CHECK(resolve_root_seed(9, 5) == 9);
  ::setenv("CGT_SEED", "not-a-number", 1);
  CHECK_THROWS_AS(resolve_root_seed(std::nullopt, 5), ParameterError);
  ::unsetenv("CGT_SEED");
}

TEST_CASE("replication scenario ordering") {
  const auto& r = replication_run();
  const auto& a1 = cell(r, "alg1_norm_sign");
  const auto& a2 = cell(r, "alg2_norm_sign");
  // Error feedback converges at least as fast per iteration.
  for (int T : {100, 200, 400}) CHECK(upsilon(a2.trace, T) <= upsilon(a1.trace, T));
  const auto& base = *r.report.baseline;
  REQUIRE(base.bits);
  for (const auto& row : r.report.rows) {
    if (row.name == "alg1_norm_sign") {
      REQUIRE(row.bits);
      CHECK(double(*row.bits) < 0.25 * double(*base.bits));
    }
  }
}

TEST_CASE("command line exit codes") {
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  CHECK(cli("--help") == 0);
  CHECK(cli("run " + (dir / "missing.json").string()) == 2);
  {
    std::ofstream(dir / "broken.json") << "{ \"iters\": ";
  }
  CHECK(cli("run " + (dir / "broken.json").string() + " --out " + (dir / "out").string()) == 2);
  CHECK_FALSE(fs::exists(dir / "out"));
  CHECK(cli("run") == 2);

  {
    std::ofstream(dir / "id.json") << R"({"seed": 3, "network": {"n": 6, "density": 0.5},
      "cost": {"kind": "quadratic", "d": 4}, "iters": 20,
      "cells": [{"name": "ident", "algo": "alg1", "compressor": {"kind": "identity"},
                 "params": "certified"}]})";
  }
  CHECK(cli("bounds " + (dir / "id.json").string(), dir / "bounds.txt") == 0);
  const auto text = slurp(dir / "bounds.txt");
  CHECK(text.find("\"gamma_max\"") != std::string::npos);
  CHECK(text.find("\"inf\"") != std::string::npos); // compression terms vanish
  CHECK(cli("run " + (dir / "id.json").string() + " --out " + (dir / "ok").string()) == 0);
  CHECK(fs::exists(dir / "ok" / "ident.csv"));

  CHECK(cli("verify-compressor '{\"kind\": \"one_bit\"}' --dim 10 --trials 200") == 0);
  CHECK(cli("verify-compressor '{\"kind\": \"one_bit\", \"phi_c\": 0.9}' --dim 10 --trials 200") == 1);
  CHECK(cli("verify-compressor '{\"kind\": \"nope\"}' --dim 10") == 2);
  fs::remove_all(dir);
}
