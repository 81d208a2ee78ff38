#pragma once

#include "cgt/rng.hpp"
#include "cgt/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace cgt {

enum class CompressorKind {
  Identity,
  NormSign,
  TopK,
  RandomSparsify,
  RandomQuantize,
  UniformQuantize,
  OneBitBinary,
};

/// Which error bound the compressor satisfies.
///  - RelativeBounded: E||C(x)/r - x||^2 <= (1 - psi) ||x||^2
///  - GlobalAbsolute:  E||C(x) - x||_p^2 <= C
///  - LocalAbsolute:   ||C(x) - x||_p <= 1 - phi_c  whenever ||x||_p <= 1
enum class AssumptionClass { RelativeBounded, GlobalAbsolute, LocalAbsolute };

std::string to_string(CompressorKind kind);
std::string to_string(AssumptionClass cls);
CompressorKind compressor_kind_from_string(const std::string& name);

/// Immutable description of a compressor and its certified constants.
struct CompressorSpec {
  CompressorKind kind = CompressorKind::Identity;
  AssumptionClass assumption = AssumptionClass::RelativeBounded;
  int dim = 1;
  double delta = 0.0;  // UniformQuantize step
  int keep_k = 0;      // TopK / RandomSparsify
  int levels = 0;      // RandomQuantize
  double r = 1.0;
  double psi = 1.0;
  double cap_c = 0.0;  // C of the matching assumption
  double p_norm = 2.0; // 2 or +inf
  double phi_c = 1.0;

  bool randomized() const {
    return kind == CompressorKind::RandomSparsify || kind == CompressorKind::RandomQuantize;
  }

  static CompressorSpec identity(int d);
  /// ||x||_inf / 2 * sign(x); r = d/2, psi = 1/d^2.
  static CompressorSpec norm_sign(int d);
  /// Keep the k largest magnitudes; r = 1, psi = k/d.
  static CompressorSpec top_k(int d, int k);
  /// Keep k uniformly chosen coordinates scaled by d/k; r = d/k, psi = k/d.
  static CompressorSpec random_sparsify(int d, int k);
  /// Unbiased stochastic rounding to `levels` levels of |x_i| / ||x||.
  static CompressorSpec random_quantize(int d, int levels);
  /// delta * floor(x / delta + 1/2); p = inf, C = delta^2 / 4.
  static CompressorSpec uniform_quantize(int d, double delta);
  /// q(a) = 0.5 for a >= 0 and -0.5 otherwise; p = inf, phi_c = 0.5.
  static CompressorSpec one_bit(int d);

  /// Throws ParameterError when the constants break the class invariants.
  void validate() const;

  /// Parses `kind`, `delta`, `keep_k`, `levels`, `p_norm` and the optional
  /// overrides `r`, `psi`, `cap_c`, `phi_c`.
  static CompressorSpec from_json(const nlohmann::json& j, int d);
  nlohmann::json to_json() const;
  std::string label() const;
};

/// 2 r^2 (1 - psi) + 2 (1 - r)^2
double relative_to_absolute_constant(double r, double psi);

/// Payload bit model. b_C bits per float scalar, b_Q bits per quantized integer.
struct BitCostModel {
  int bits_scalar = 64;
  int bits_int = 4;
  void validate() const;
};

/// Compress x. Only randomized kinds consume from rng.
Vec compress(const CompressorSpec& spec, const Vec& x, Rng& rng);

/// Bits needed to transmit one compressed vector of dimension d.
std::uint64_t bit_cost(const CompressorSpec& spec, const BitCostModel& model, int d);

/// ||x||_p for p in {2, inf}.
double p_norm(const Vec& x, double p);

struct AssumptionReport {
  bool pass = true;
  int trials = 0;
  int violations = 0;
  double max_observed_ratio = 0.0; // observed / allowed, pass needs <= threshold
  double threshold = 1.0;
  std::optional<Vec> offending;
};

/// Monte-Carlo check that `spec` satisfies its declared assumption.
///
/// Randomized kinds estimate the expectation with `inner_draws` samples per
/// point and accept a mean up to (1 - psi) * 1.05. Deterministic kinds must
/// satisfy the bound on every draw up to rounding.
AssumptionReport verify_assumption(const CompressorSpec& spec, int trials, Rng& rng,
                                   int inner_draws = 1000);

} // namespace cgt
