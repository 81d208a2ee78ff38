#pragma once

#include "cgt/algorithms.hpp"
#include "cgt/compressors.hpp"
#include "cgt/costs.hpp"
#include "cgt/types.hpp"

#include <nlohmann/json.hpp>

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cgt {


// Single-source constant formulas. Terms that divide by C return +inf when C = 0.

/// phi = (1 - sigma)^2 / (320 L^2)
double lyapunov_phi(double sigma, double L);
/// phi_hat = 0.1 min{c1 (2 c1 + 1), c2 (2 c2 + 1)} / C
double lyapunov_phi_hat(double c1, double c2, double C);
/// phi_tilde = 0.4 gamma (1 - sigma) / (eta L^2)
double lyapunov_phi_tilde(double gamma, double sigma, double eta, double L);
/// delta = 1 - gamma (1 - sigma)
double delta_of(double gamma, double sigma);

/// Norm-equivalence constants for p in {2, inf}:
///   ||v||_2 <= d_tilde ||v||_p  and  ||v||_p <= d_hat ||v||_2.
struct NormConstants {
  double d_hat = 1.0;
  double d_tilde = 1.0;
};
NormConstants norm_constants(double p, int d);

struct NamedValue {
  std::string name;
  double value = 0.0;
};

/// The seven gamma terms (their min is Pi).
std::vector<NamedValue> theorem1_gamma_terms(double sigma, double L, double c1, double c2, double C);
/// The six eta terms evaluated at gamma.
std::vector<NamedValue> theorem1_eta_terms(double sigma, double L, double c1, double c2,
                                           double gamma);
/// The ten gamma terms of the error-feedback region (last one is Pi).
std::vector<NamedValue> theorem3_gamma_terms(double sigma, double L, double c1, double c2, double C);
/// Upper end of the error-feedback decay interval: min{1/(2 sqrt C), 1/sqrt(2C + 1)}.
double theorem3_varsigma_max(double C);

/// epsilon, theta and xi constants of the relative-compressor analysis at (eta, gamma).
/// theta4 needs nu and is omitted when nu is empty.
std::map<std::string, double> theorem1_constants(double sigma, double L, double c1, double c2,
                                                 double C, double eta, double gamma,
                                                 std::optional<double> nu = std::nullopt);

struct ConstantEntry {
  std::string name;
  double value = 0.0;
  std::string formula;
};

enum class Theorem { T1, T3, T5, T7 };
std::string to_string(Theorem t);

/// Parameter region and constants of one theorem, plus the recommended
/// interior point (gamma = gamma_max / 2, eta = eta_max(gamma) / 2).
struct TheoremBounds {
  Theorem theorem = Theorem::T1;
  bool feasible = true;
  std::string binding; // name of the constraint that made the region empty or tightest

  double sigma = 0.0, L = 0.0;
  std::optional<double> nu;
  double c1 = 0.0, c2 = 0.0, C = 0.0;
  double delta = 0.0, phi_w = 0.0, phi_hat = 0.0, phi_tilde = 0.0;

  double gamma_max = 0.0, gamma = 0.0;
  double eta_max = 0.0, eta = 0.0;
  double varsigma_max = 0.0, varsigma = 0.0;
  double s0_min = 0.0, s0 = 0.0;
  double mu_min = 0.0, mu = 0.0;

  std::vector<NamedValue> gamma_terms;
  std::vector<NamedValue> eta_terms;
  std::vector<ConstantEntry> table;

  double get(const std::string& name) const;
  bool has(const std::string& name) const;
  void put(const std::string& name, double value, const std::string& formula);
  nlohmann::json to_json() const;
};

/// Relative compressors without error feedback.
/// Requires sigma in (0,1), L > 0, phi_x and phi_y in (0, 1/r).
TheoremBounds bounds_theorem1(double sigma, double L, const CompressorSpec& comp, double phi_x,
                              double phi_y, std::optional<double> nu = std::nullopt);

/// Relative compressors with error feedback. eta follows the first region at the returned gamma.
TheoremBounds bounds_theorem3(double sigma, double L, const CompressorSpec& comp, double phi_x,
                              double phi_y, std::optional<double> nu = std::nullopt);

/// Globally bounded absolute compressors. (eta, gamma) come from the first
/// region with the compression-dependent terms removed and c1 = c2 = 1/4.
/// s0 and mu are free; the result carries the slack constants for them.
TheoremBounds bounds_theorem5(double sigma, double L, const CompressorSpec& comp, int n, double s0,
                              double mu, std::optional<double> nu = std::nullopt);

/// The additive slack 2 n d_tilde^2 xi8 s^2 (1 + 2 L^2) of the scaled descent inequality.
double breve_descent_slack(const TheoremBounds& b, int n, double s);

/// Three-case constant of the scaled linear rate, using varpi = (mu^2 + 1) / 2 on the tie.
double breve_theta6(const TheoremBounds& b, double U0);

/// Initial quantities the locally bounded region needs.
struct InitialState {
  double breve_V0 = 0.0;  // ||X - Xbar||^2 + phi ||Y - Ybar||^2 at k = 0
  double opt_gap0 = 0.0;  // n (F(Xbar(0)) - F*)
  double max_x_norm = 0.0;
  double max_y_norm = 0.0;
};

/// Locally bounded absolute compressors under the P-L condition.
TheoremBounds bounds_theorem7(double sigma, double L, double nu, const CompressorSpec& comp, int n,
                              const InitialState& init);

enum class LyapunovKind { U, UHat, UBreve, UTilde };
std::string to_string(LyapunovKind k);

struct LyapunovWeights {
  double phi = 0.0;
  double phi_hat = 0.0;
  double phi_tilde = 0.0;
};
LyapunovWeights weights_of(const TheoremBounds& b);

struct LyapunovValue {
  double total = 0.0;
  std::map<std::string, double> terms;
};

struct StackedState {
  Mat X, Y, A, C, EX, EY; // d x n; A, C, EX, EY may be empty when unused
};

LyapunovValue lyapunov_eval(LyapunovKind which, const StackedState& s, const CostSuite& suite,
                            double f_star, const LyapunovWeights& w);
/// Checks the algorithm/function pairing first.
LyapunovValue lyapunov_eval(LyapunovKind which, const Simulator& sim, double f_star,
                            const LyapunovWeights& w);
/// Natural Lyapunov function of each algorithm.
LyapunovKind default_lyapunov(Algorithm algo);

enum class FitMode { Linear, Sublinear };

struct RateFit {
  /// Linear: exp(slope) of log(metric) vs k. Sublinear: slope of k * metric vs k.
  double rate = 0.0;
  /// Linear: exp(intercept). Sublinear: mean of k * metric.
  double constant = 0.0;
  double r_squared = 0.0;
  int points = 0;
};

RateFit fit_rate(const std::vector<double>& ks, const std::vector<double>& values, FitMode mode);
/// Fits consensus_err + opt_gap over records with k in [k0, k1].
RateFit fit_rate(const RunTrace& trace, int k0, int k1, FitMode mode = FitMode::Linear);

} // namespace cgt
