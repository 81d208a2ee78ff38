#pragma once

#include "cgt/rng.hpp"
#include "cgt/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cgt {

enum class CostKind { LogisticLog, QuadraticPL };

std::string to_string(CostKind kind);

/// F_i(x) = h / (1 + exp(-xi^T x - nu)) + m ln(1 + ||x||^2)
struct LogisticTerm {
  double h = 0.0;
  double nu = 0.0;
  double m = 0.0;
  Vec xi;
};

/// F_i(x) = 0.5 ||M x - b||^2
struct QuadraticTerm {
  Mat M;
  Vec b;
};

/// Per-agent local costs F_1..F_n on R^d. Immutable; eval/grad are pure.
class CostSuite {
public:
  static CostSuite logistic(std::vector<LogisticTerm> terms);
  static CostSuite quadratic(std::vector<QuadraticTerm> terms);

  CostKind kind() const { return kind_; }
  int n() const { return n_; }
  int d() const { return d_; }

  double eval(int agent, const Vec& x) const;
  Vec grad(int agent, const Vec& x) const;
  /// F(x) = (1/n) sum_i F_i(x)
  double global_value(const Vec& x) const;
  Vec global_grad(const Vec& x) const;

  /// Rigorous smoothness constant shared by all F_i.
  ///  logistic:  max_i |h_i| ||xi_i||^2 / (6 sqrt 3) + 2 |m_i|
  ///  quadratic: max_i ||M_i^T M_i||_2
  double analytic_L() const;
  /// Smallest nonzero eigenvalue of (1/n) sum M_i^T M_i; empty for logistic.
  std::optional<double> pl_constant() const;

  const std::vector<LogisticTerm>& logistic_terms() const { return logistic_; }
  const std::vector<QuadraticTerm>& quadratic_terms() const { return quadratic_; }

  /// Generator provenance, filled in by the make_* functions.
  nlohmann::json provenance;
  nlohmann::json to_json(bool full_dump = false) const;

private:
  CostKind kind_ = CostKind::LogisticLog;
  int n_ = 0;
  int d_ = 0;
  std::vector<LogisticTerm> logistic_;
  std::vector<QuadraticTerm> quadratic_;
};

/// h_i, nu_i, m_i and the entries of xi_i i.i.d. standard normal.
/// With abs_m the log-term coefficient is |m_i| so F is bounded below.
CostSuite make_logistic_suite(int n, int d, std::uint64_t seed, bool abs_m = true);

/// Consistent least squares b_i = M_i x_true with `null_dims` directions
/// removed from every M_i, so F is P-L but not strongly convex when
/// null_dims > 0. All M_i share one scale so that max_i ||M_i^T M_i|| = target_L.
CostSuite make_quadratic_suite(int n, int d, int rows, std::uint64_t seed, int null_dims = 1,
                               double target_L = 1.0);

/// Rebuilds a suite from its provenance document (kind + dims + seed).
CostSuite make_cost_suite(const nlohmann::json& spec, int n, std::uint64_t seed);

/// Sampled smoothness estimate: 1.5 * max ||grad F_i(x) - grad F_i(y)|| / ||x - y||
/// over `samples` random pairs per agent. Quadratic suites return analytic_L().
double estimate_L(const CostSuite& suite, int samples, Rng& rng);

struct ReferenceSolution {
  Vec x_star;
  double f_star = 0.0;
  double grad_norm = 0.0;
  bool certified = false;
  std::vector<double> restart_values;
  std::vector<Vec> restart_endpoints;
};

/// Centralised gradient descent with Armijo backtracking on F from several
/// starts (the origin plus Gaussian draws). Returns the best endpoint; it is
/// certified when ||grad F|| <= tol there.
ReferenceSolution solve_reference(const CostSuite& suite, double tol, int restarts = 16,
                                  std::uint64_t seed = 0, int max_iters = 50000,
                                  const std::vector<Vec>& extra_starts = {});

struct ProbeReport {
  int probes = 0;
  int violations = 0;
  double lowest_value = 0.0;
  std::optional<Vec> lowest_point;
};

/// Samples F at random points and counts values below f_star - tol.
ProbeReport probe_reference(const CostSuite& suite, double f_star, double tol, int probes,
                            Rng& rng, double scale = 3.0);

/// Runs solve_reference, probes 10^4 points and re-solves from any probe that
/// undercuts the reference. Returns the improved solution.
ReferenceSolution certified_reference(const CostSuite& suite, double tol, std::uint64_t seed);

} // namespace cgt
