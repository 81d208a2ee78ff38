#pragma once

#include "cgt/compressors.hpp"
#include "cgt/costs.hpp"
#include "cgt/graph.hpp"
#include "cgt/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cgt {

enum class Algorithm { CGT, EFCGT, Scaled, DGT };

std::string to_string(Algorithm algo);
/// Accepts "alg1", "alg2", "alg3", "dgt".
Algorithm algorithm_from_string(const std::string& name);

struct AlgorithmParams {
  double eta = 0.0;
  double gamma = 0.0;
  double phi_x = 1.0;
  double phi_y = 1.0;
  double varsigma = 0.0;
  double s0 = 1.0;
  double mu = 0.5;

  /// Checks only the fields the algorithm reads.
  void validate(Algorithm algo) const;
  static AlgorithmParams from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Everything one agent keeps locally. Fields an algorithm does not use stay zero.
struct AgentState {
  Vec x, y, grad;
  Vec a, b, c, dd; // A, B, C, D
  Vec ex, ey;      // error feedback
  Vec xhat, yhat, v, z;
};

/// The only data an agent exposes to its neighbours.
struct Outbox {
  Vec qx, qy, qhx, qhy;
};

/// Stacked views (column i = agent i) for diagnostics.
enum class Field { X, Y, Grad, A, B, C, D, EX, EY, Xhat, Yhat, V, Z, QX, QY, QHX, QHY };

/// Non-finite state detected. The simulator keeps the last finite state.
class DivergenceError : public std::runtime_error {
public:
  DivergenceError(const std::string& what, nlohmann::json snapshot)
      : std::runtime_error(what), snapshot_(std::move(snapshot)) {}
  const nlohmann::json& snapshot() const { return snapshot_; }

private:
  nlohmann::json snapshot_;
};

/// s(k) dropped below 1e-300.
class ScalingExhausted : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct SimulatorOptions {
  /// Visit agents in a random order each tick (results must not change).
  bool shuffle_order = false;
};

/// Synchronous simulation of one algorithm on a fixed network.
class Simulator {
public:
  /// X0 is d x n. Compression draws use substreams of `seed`.
  Simulator(Algorithm algo, const Network& net, const CompressorSpec& comp,
            const AlgorithmParams& params, const CostSuite& suite, const Mat& X0,
            std::uint64_t seed, SimulatorOptions options = {});

  void step();

  Algorithm algorithm() const { return algo_; }
  int k() const { return k_; }
  int n() const { return n_; }
  int d() const { return d_; }
  const Network& network() const { return *net_; }
  const CostSuite& suite() const { return *suite_; }
  const CompressorSpec& compressor() const { return comp_; }
  const AlgorithmParams& params() const { return params_; }
  const std::vector<AgentState>& states() const { return states_; }
  const std::vector<Outbox>& outboxes() const { return outboxes_; }
  Mat stacked(Field f) const;

  /// s(k) for the scaled algorithm.
  long double scaling(int k) const;

  int messages_per_agent() const { return algo_ == Algorithm::EFCGT ? 4 : 2; }
  /// Bits sent in one iteration: per agent once (broadcast) or once per out-edge.
  std::uint64_t bits_per_iteration(const BitCostModel& model, bool broadcast) const;

  /// Scaled algorithm only: max_i max(||X_i(k) - Xhat_i(k-1)||_p, ||Y_i(k) - Yhat_i(k-1)||_p) / s(k).
  double induction_ratio() const { return induction_ratio_; }
  /// Scaled algorithm only: max_i of the unscaled compression error s(k) ||C(u) - u||_p.
  double compression_error() const { return compression_error_; }

private:
  Vec compress_msg(const Vec& u, int agent, int channel);
  Vec mix(const std::vector<Outbox>& box, Vec Outbox::*field, int i) const;
  void init(const Mat& X0);
  void check_finite(const std::vector<AgentState>& next, const std::vector<Outbox>& box) const;
  void ensure_scaling(int k);
  [[noreturn]] void diverged(int agent, const char* field) const;
  Vec grad_at(int i, const Vec& x) const;

  // Running sums carried in double-double (value = hi + lo). Paired sums such
  // as A and B would otherwise drift apart by round-off once increments shrink.
  struct Wide {
    Vec hi, lo;
  };
  struct Sums {
    Wide a, b, c, dd, xhat, v, yhat, z;
  };
  void accumulate(Wide& sum, const Vec& q, Vec Outbox::*field, int i, double w0, double w1,
                  bool laplacian) const;

  Algorithm algo_;
  const Network* net_;
  CompressorSpec comp_;
  AlgorithmParams params_;
  const CostSuite* suite_;
  std::uint64_t seed_;
  SimulatorOptions options_;
  int n_, d_;
  int k_ = 0;
  std::vector<AgentState> states_;
  std::vector<Outbox> outboxes_;
  std::vector<Sums> sums_;
  std::vector<long double> scaling_;
  std::vector<int> order_;
  double induction_ratio_ = 0.0;
  double compression_error_ = 0.0;
};

struct TraceRecord {
  int k = 0;
  double consensus_err = 0.0;
  double opt_gap = 0.0;
  double stationarity = 0.0;
  double lyapunov = 0.0;
  std::uint64_t bits = 0;
};

enum class RunStatus { Ok, Diverged, ScalingExhausted };
std::string to_string(RunStatus s);

struct RunTrace {
  std::vector<TraceRecord> records;
  RunStatus status = RunStatus::Ok;
  std::string message;
  nlohmann::json snapshot;
  std::uint64_t bits_per_iteration = 0;
};

struct RunOptions {
  double f_star = 0.0;
  BitCostModel bits;
  bool broadcast = true;
  /// Lyapunov value of the current state; 0 when unset.
  std::function<double(const Simulator&)> lyapunov;
  /// Called after initialisation and after every step.
  std::function<void(const Simulator&)> observer;
};

/// Sum_i ||X_i - Xbar||^2
double consensus_error(const Mat& X);

TraceRecord measure(const Simulator& sim, double f_star, double lyapunov, std::uint64_t bits);

/// Runs `iters` steps and records k = 0..iters. Failures end the trace early
/// with a status instead of throwing.
RunTrace run(Simulator& sim, int iters, const RunOptions& opts);

} // namespace cgt
