#pragma once

#include "cgt/algorithms.hpp"
#include "cgt/analysis.hpp"
#include "cgt/compressors.hpp"
#include "cgt/costs.hpp"
#include "cgt/graph.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cgt {

/// Running minimum of consensus_err + opt_gap over records with k <= T.
double upsilon(const RunTrace& trace, int T);

struct ThresholdHit {
  int k = 0;
  std::uint64_t bits = 0;
};

/// First record whose running Upsilon is <= threshold.
std::optional<ThresholdHit> bits_to_threshold(const RunTrace& trace, double threshold);

/// One (algorithm, compressor) run inside an experiment.
struct CellSpec {
  std::string name;
  Algorithm algo = Algorithm::DGT;
  nlohmann::json compressor = {{"kind", "identity"}};
  /// Empty means "use the certified interior point of the matching region".
  std::optional<AlgorithmParams> params;
};

struct ExperimentConfig {
  std::string scenario = "experiment";
  std::uint64_t seed = 0;
  // Seeds derived from `seed` unless given explicitly.
  std::optional<std::uint64_t> graph_seed, cost_seed, init_seed, algo_seed;

  int n = 20;
  double density = 0.3;
  Topology topology = Topology::Random;
  nlohmann::json cost = {{"kind", "logistic"}, {"d", 50}};
  double init_scale = 1.0;

  int iters = 1000;
  double threshold = 1e-3;
  BitCostModel bits;
  bool broadcast = true;
  /// Gradient-norm tolerance of the reference solve for F*.
  double fstar_tol = 1e-9;
  /// Accept explicit parameters outside the certified regions.
  bool force_params = false;
  std::vector<CellSpec> cells;
  std::string output_dir;

  std::uint64_t resolved_graph_seed() const;
  std::uint64_t resolved_cost_seed() const;
  std::uint64_t resolved_init_seed() const;
  std::uint64_t resolved_algo_seed() const;

  /// Accepts the multi-cell schema ("cells": [...]) and the single-run schema
  /// ("algo", "compressor", "params" at top level).
  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
};

/// Root seed precedence: explicit flag, then the CGT_SEED environment variable, then the config.
std::uint64_t resolve_root_seed(std::optional<std::uint64_t> flag, std::uint64_t config_seed);

/// Network, costs, reference optimum and initial point shared by all cells.
struct Scenario {
  Network network;
  CostSuite suite;
  double L = 0.0;
  std::optional<double> nu;
  ReferenceSolution reference;
  Mat X0;
};

Scenario build_scenario(const ExperimentConfig& cfg);

/// Region and recommended point for a cell; DGT uses the compression-free region.
TheoremBounds cell_bounds(const Scenario& sc, const CellSpec& cell, const CompressorSpec& comp);

/// Empty when the parameters lie inside the region; otherwise the violated constraint.
std::optional<std::string> region_violation(Algorithm algo, const AlgorithmParams& p,
                                            const TheoremBounds& b);

struct CellResult {
  std::string name;
  Algorithm algo = Algorithm::DGT;
  std::string compressor;
  AlgorithmParams params;
  RunTrace trace;
  std::string error; // set when the cell could not run
  std::optional<ThresholdHit> hit;
};

struct ReportRow {
  std::string name;
  std::string algo;
  std::string compressor;
  std::optional<int> iters;
  std::optional<std::uint64_t> bits;
  std::optional<double> percent;
  std::string status;
};

struct ComparisonReport {
  std::string scenario;
  double threshold = 0.0;
  std::vector<ReportRow> rows;
  std::optional<ReportRow> baseline;
  nlohmann::json to_json() const;
};

struct ExperimentResult {
  std::vector<CellResult> cells;
  ComparisonReport report;
  nlohmann::json resolved;
};

/// Runs every cell on the shared scenario (cells in parallel). When
/// cfg.output_dir is set writes <cell>.csv, report.json and config.resolved.json.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Shortest round-trip decimal.
std::string format_double(double v);
std::string trace_csv(const RunTrace& trace);

/// Scaling parameters of the scaled algorithm in the replication scenario.
inline constexpr double kReplicationS0 = 10.0;
inline constexpr double kReplicationMu = 0.97;

/// The built-in replication scenario (n = 20, d = 50, logistic costs).
/// `certified` switches every cell to theorem parameters.
ExperimentConfig replication_config(bool certified = false);

} // namespace cgt
