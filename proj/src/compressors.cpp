#include "cgt/compressors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace cgt {

namespace {


int ceil_log2(std::uint64_t v) {
  int b = 0;
  while ((std::uint64_t{1} << b) < v) ++b;
  return b;
}

double sign_plus(double a) { return a >= 0.0 ? 1.0 : -1.0; }

} // namespace

std::string to_string(CompressorKind kind) {
  switch (kind) {
  case CompressorKind::Identity: return "identity";
  case CompressorKind::NormSign: return "norm_sign";
  case CompressorKind::TopK: return "top_k";
  case CompressorKind::RandomSparsify: return "random_sparsify";
  case CompressorKind::RandomQuantize: return "random_quantize";
  case CompressorKind::UniformQuantize: return "uniform_quantize";
  case CompressorKind::OneBitBinary: return "one_bit";
  }
  return "unknown";
}

std::string to_string(AssumptionClass cls) {
  switch (cls) {
  case AssumptionClass::RelativeBounded: return "relative_bounded";
  case AssumptionClass::GlobalAbsolute: return "global_absolute";
  case AssumptionClass::LocalAbsolute: return "local_absolute";
  }
  return "unknown";
}

CompressorKind compressor_kind_from_string(const std::string& name) {
  for (auto k : {CompressorKind::Identity, CompressorKind::NormSign, CompressorKind::TopK,
                 CompressorKind::RandomSparsify, CompressorKind::RandomQuantize,
                 CompressorKind::UniformQuantize, CompressorKind::OneBitBinary})
    if (to_string(k) == name) return k;
  throw ParameterError("unknown compressor kind '" + name + "'");
}

double relative_to_absolute_constant(double r, double psi) {
  return 2.0 * r * r * (1.0 - psi) + 2.0 * (1.0 - r) * (1.0 - r);
}

CompressorSpec CompressorSpec::identity(int d) {
  CompressorSpec s;
  s.kind = CompressorKind::Identity;
  s.assumption = AssumptionClass::RelativeBounded;
  s.dim = d;
  s.r = 1.0;
  s.psi = 1.0;
  s.cap_c = 0.0;
  s.phi_c = 1.0;
  return s;
}

CompressorSpec CompressorSpec::norm_sign(int d) {
  CompressorSpec s;
  s.kind = CompressorKind::NormSign;
  s.assumption = AssumptionClass::RelativeBounded;
  s.dim = d;
  s.r = d / 2.0;
  s.psi = 1.0 / (static_cast<double>(d) * d);
  s.cap_c = relative_to_absolute_constant(s.r, s.psi);
  return s;
}

CompressorSpec CompressorSpec::top_k(int d, int k) {
  CompressorSpec s;
  s.kind = CompressorKind::TopK;
  s.assumption = AssumptionClass::RelativeBounded;
  s.dim = d;
  s.keep_k = k;
  s.r = 1.0;
  s.psi = static_cast<double>(k) / d;
  s.cap_c = relative_to_absolute_constant(s.r, s.psi);
  return s;
}

CompressorSpec CompressorSpec::random_sparsify(int d, int k) {
  CompressorSpec s;
  s.kind = CompressorKind::RandomSparsify;
  s.assumption = AssumptionClass::RelativeBounded;
  s.dim = d;
  s.keep_k = k;
  s.r = static_cast<double>(d) / k;
  s.psi = static_cast<double>(k) / d;
  s.cap_c = relative_to_absolute_constant(s.r, s.psi);
  return s;
}

CompressorSpec CompressorSpec::random_quantize(int d, int levels) {
  CompressorSpec s;
  s.kind = CompressorKind::RandomQuantize;
  s.assumption = AssumptionClass::RelativeBounded;
  s.dim = d;
  s.levels = levels;
  // unbiased with variance factor omega; C/(1+omega) is then a contraction
  const double omega = std::min(d / (static_cast<double>(levels) * levels),
                                std::sqrt(static_cast<double>(d)) / levels);
  s.r = 1.0 + omega;
  s.psi = 1.0 / (1.0 + omega);
  s.cap_c = relative_to_absolute_constant(s.r, s.psi);
  return s;
}

CompressorSpec CompressorSpec::uniform_quantize(int d, double delta) {
  CompressorSpec s;
  s.kind = CompressorKind::UniformQuantize;
  s.assumption = AssumptionClass::GlobalAbsolute;
  s.dim = d;
  s.delta = delta;
  s.p_norm = kInf;
  s.cap_c = 0.25 * delta * delta;
  return s;
}

CompressorSpec CompressorSpec::one_bit(int d) {
  CompressorSpec s;
  s.kind = CompressorKind::OneBitBinary;
  s.assumption = AssumptionClass::LocalAbsolute;
  s.dim = d;
  s.p_norm = kInf;
  s.phi_c = 0.5;
  return s;
}

void CompressorSpec::validate() const {
  if (dim < 1) throw ParameterError("compressor dimension must be positive");
  if (!(p_norm == 2.0 || p_norm == kInf)) throw ParameterError("p_norm must be 2 or inf");
  switch (assumption) {
  case AssumptionClass::RelativeBounded: {
    if (!(r > 0.0)) throw ParameterError("relative compressor needs r > 0");
    if (!(psi > 0.0 && psi <= 1.0)) throw ParameterError("relative compressor needs psi in (0, 1]");
    const double expect = relative_to_absolute_constant(r, psi);
    if (std::abs(cap_c - expect) > 1e-12 * std::max(1.0, expect))
      throw ParameterError("stored C differs from 2r^2(1-psi) + 2(1-r)^2");
    break;
  }
  case AssumptionClass::GlobalAbsolute:
    if (!(cap_c >= 0.0)) throw ParameterError("absolute compressor needs C >= 0");
    break;
  case AssumptionClass::LocalAbsolute:
    if (!(phi_c > 0.0 && phi_c <= 1.0)) throw ParameterError("local compressor needs phi in (0, 1]");
    break;
  }
  if (kind == CompressorKind::UniformQuantize && !(delta > 0.0))
    throw ParameterError("uniform quantizer needs delta > 0");
  if ((kind == CompressorKind::TopK || kind == CompressorKind::RandomSparsify) &&
      (keep_k < 1 || keep_k > dim))
    throw ParameterError("keep_k must lie in [1, d]");
  if (kind == CompressorKind::RandomQuantize && levels < 1)
    throw ParameterError("random quantizer needs levels >= 1");
}

CompressorSpec CompressorSpec::from_json(const nlohmann::json& j, int d) {
  const auto kind = compressor_kind_from_string(j.at("kind").get<std::string>());
  CompressorSpec s;
  switch (kind) {
  case CompressorKind::Identity: s = identity(d); break;
  case CompressorKind::NormSign: s = norm_sign(d); break;
  case CompressorKind::TopK: s = top_k(d, j.value("keep_k", std::max(1, d / 10))); break;
  case CompressorKind::RandomSparsify:
    s = random_sparsify(d, j.value("keep_k", std::max(1, d / 10)));
    break;
  case CompressorKind::RandomQuantize: s = random_quantize(d, j.value("levels", 4)); break;
  case CompressorKind::UniformQuantize: s = uniform_quantize(d, j.value("delta", 2.0)); break;
  case CompressorKind::OneBitBinary: s = one_bit(d); break;
  }
  if (j.contains("p_norm")) {
    const auto& p = j.at("p_norm");
    if (p.is_string()) {
      const auto ps = p.get<std::string>();
      if (ps != "inf") throw ParameterError("p_norm string must be \"inf\"");
      s.p_norm = kInf;
    } else {
      s.p_norm = p.get<double>();
    }
  }
  bool relative_override = false;
  if (j.contains("r")) { s.r = j.at("r").get<double>(); relative_override = true; }
  if (j.contains("psi")) { s.psi = j.at("psi").get<double>(); relative_override = true; }
  if (relative_override && s.assumption == AssumptionClass::RelativeBounded)
    s.cap_c = relative_to_absolute_constant(s.r, s.psi);
  if (j.contains("cap_c")) s.cap_c = j.at("cap_c").get<double>();
  if (j.contains("phi_c")) s.phi_c = j.at("phi_c").get<double>();
  s.validate();
  return s;
}

nlohmann::json CompressorSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = to_string(kind);
  j["assumption"] = to_string(assumption);
  j["dim"] = dim;
  if (kind == CompressorKind::UniformQuantize) j["delta"] = delta;
  if (kind == CompressorKind::TopK || kind == CompressorKind::RandomSparsify) j["keep_k"] = keep_k;
  if (kind == CompressorKind::RandomQuantize) j["levels"] = levels;
  if (p_norm == kInf)
    j["p_norm"] = "inf";
  else
    j["p_norm"] = p_norm;
  j["r"] = r;
  j["psi"] = psi;
  j["cap_c"] = cap_c;
  j["phi_c"] = phi_c;
  return j;
}

std::string CompressorSpec::label() const {
  std::ostringstream os;
  os << to_string(kind);
  if (kind == CompressorKind::UniformQuantize) os << "(delta=" << delta << ")";
  if (kind == CompressorKind::TopK || kind == CompressorKind::RandomSparsify)
    os << "(k=" << keep_k << ")";
  if (kind == CompressorKind::RandomQuantize) os << "(levels=" << levels << ")";
  return os.str();
}

void BitCostModel::validate() const {
  if (bits_scalar < 1 || bits_int < 1) throw ParameterError("bit model entries must be >= 1");
}

double p_norm(const Vec& x, double p) {
  if (p == kInf) return x.size() == 0 ? 0.0 : x.cwiseAbs().maxCoeff();
  if (p == 2.0) return x.norm();
  throw ParameterError("only p = 2 and p = inf are supported");
}

Vec compress(const CompressorSpec& spec, const Vec& x, Rng& rng) {
  if (!x.allFinite()) throw ParameterError("compress: non-finite input");
  const Eigen::Index d = x.size();
  switch (spec.kind) {
  case CompressorKind::Identity:
    return x;
  case CompressorKind::NormSign: {
    const double half = 0.5 * p_norm(x, kInf);
    Vec out(d);
    for (Eigen::Index i = 0; i < d; ++i) out(i) = half * sign_plus(x(i));
    return out;
  }
  case CompressorKind::TopK: {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(d));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    // stable tie-break on index keeps the operator a pure function
    std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
      return std::abs(x(a)) > std::abs(x(b));
    });
    Vec out = Vec::Zero(d);
    for (int t = 0; t < spec.keep_k && t < d; ++t) out(idx[t]) = x(idx[t]);
    return out;
  }
  case CompressorKind::RandomSparsify: {
    // partial Fisher-Yates to pick keep_k distinct coordinates
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(d));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    Vec out = Vec::Zero(d);
    const double scale = static_cast<double>(d) / spec.keep_k;
    for (int t = 0; t < spec.keep_k; ++t) {
      const auto pick = t + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(d - t)));
      std::swap(idx[t], idx[pick]);
      out(idx[t]) = scale * x(idx[t]);
    }
    return out;
  }
  case CompressorKind::RandomQuantize: {
    const double norm = x.norm();
    Vec out = Vec::Zero(d);
    if (norm == 0.0) return out;
    const double s = spec.levels;
    for (Eigen::Index i = 0; i < d; ++i) {
      const double level = std::abs(x(i)) / norm * s;
      double lower = std::floor(level);
      if (rng.uniform() < level - lower) lower += 1.0;
      out(i) = norm * sign_plus(x(i)) * lower / s;
    }
    return out;
  }
  case CompressorKind::UniformQuantize: {
    Vec out(d);
    for (Eigen::Index i = 0; i < d; ++i)
      out(i) = spec.delta * std::floor(x(i) / spec.delta + 0.5);
    return out;
  }
  case CompressorKind::OneBitBinary: {
    Vec out(d);
    for (Eigen::Index i = 0; i < d; ++i) out(i) = x(i) >= 0.0 ? 0.5 : -0.5;
    return out;
  }
  }
  throw ParameterError("unhandled compressor kind");
}

std::uint64_t bit_cost(const CompressorSpec& spec, const BitCostModel& model, int d) {
  if (d < 1) throw ParameterError("bit_cost: d must be positive");
  const auto ud = static_cast<std::uint64_t>(d);
  const auto bc = static_cast<std::uint64_t>(model.bits_scalar);
  switch (spec.kind) {
  case CompressorKind::Identity: return ud * bc;
  case CompressorKind::NormSign: return 2 * ud + bc;
  case CompressorKind::TopK:
  case CompressorKind::RandomSparsify:
    return static_cast<std::uint64_t>(spec.keep_k) * (bc + ceil_log2(ud));
  case CompressorKind::RandomQuantize:
    return bc + ud * (1 + ceil_log2(static_cast<std::uint64_t>(spec.levels) + 1));
  case CompressorKind::UniformQuantize: return ud * static_cast<std::uint64_t>(model.bits_int);
  case CompressorKind::OneBitBinary: return ud;
  }
  return 0;
}

namespace {

Vec sample_point(int trial, int d, Rng& rng) {
  Vec x(d);
  switch (trial % 6) {
  case 0:
  case 1:
    for (int i = 0; i < d; ++i) x(i) = rng.normal();
    break;
  case 2: { // single spike
    x.setZero();
    x(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(d)))) = 3.0 * rng.normal();
    break;
  }
  case 3: // constant
    x.setConstant(rng.normal());
    break;
  case 4: // tiny norm
    for (int i = 0; i < d; ++i) x(i) = 1e-8 * rng.normal();
    break;
  default: // sparse-ish with mixed scales
    for (int i = 0; i < d; ++i) x(i) = rng.bernoulli(0.3) ? 10.0 * rng.normal() : 0.0;
    break;
  }
  if (x.squaredNorm() == 0.0) x(0) = 1.0;
  return x;
}

Vec sample_unit_ball_point(int trial, int d, double p, Rng& rng) {
  Vec x(d);
  switch (trial % 4) {
  case 0: // interior, uniform box
    for (int i = 0; i < d; ++i) x(i) = rng.uniform(-1.0, 1.0);
    break;
  case 1: // corners and zeros
    for (int i = 0; i < d; ++i) {
      const auto c = rng.below(3);
      x(i) = c == 0 ? -1.0 : (c == 1 ? 0.0 : 1.0);
    }
    break;
  case 2:
    for (int i = 0; i < d; ++i) x(i) = rng.normal();
    break;
  default:
    for (int i = 0; i < d; ++i) x(i) = 1e-6 * rng.normal();
    break;
  }
  const double nrm = p_norm(x, p);
  if (nrm > 1.0) x /= nrm;
  return x;
}

} // namespace

AssumptionReport verify_assumption(const CompressorSpec& spec, int trials, Rng& rng,
                                   int inner_draws) {
  if (trials < 100) throw ParameterError("verify_assumption needs at least 100 trials");
  spec.validate();
  const int d = spec.dim;
  const int draws = spec.randomized() ? std::max(inner_draws, 1000) : 1;
  AssumptionReport rep;
  rep.trials = trials;
  rep.threshold =
      (spec.randomized() && spec.assumption == AssumptionClass::RelativeBounded) ? 1.05 : 1.0;

  for (int t = 0; t < trials; ++t) {
    double observed = 0.0, allowed = 0.0, slack = 0.0;
    Vec x;
    switch (spec.assumption) {
    case AssumptionClass::RelativeBounded: {
      x = sample_point(t, d, rng);
      double acc = 0.0;
      for (int k = 0; k < draws; ++k) acc += (compress(spec, x, rng) / spec.r - x).squaredNorm();
      observed = acc / draws;
      allowed = (1.0 - spec.psi) * x.squaredNorm();
      slack = 1e-12 * x.squaredNorm();
      break;
    }
    case AssumptionClass::GlobalAbsolute: {
      x = sample_point(t, d, rng);
      if (t % 3 == 0) x *= 1e3; // large inputs matter for absolute bounds
      double acc = 0.0;
      for (int k = 0; k < draws; ++k) {
        const double e = p_norm(compress(spec, x, rng) - x, spec.p_norm);
        acc += e * e;
      }
      observed = acc / draws;
      allowed = spec.cap_c;
      slack = 1e-12 * std::max(1.0, x.squaredNorm());
      break;
    }
    case AssumptionClass::LocalAbsolute: {
      x = sample_unit_ball_point(t, d, spec.p_norm, rng);
      double acc = 0.0;
      for (int k = 0; k < draws; ++k) acc += p_norm(compress(spec, x, rng) - x, spec.p_norm);
      observed = acc / draws;
      allowed = 1.0 - spec.phi_c;
      slack = 1e-12;
      break;
    }
    }
    double ratio;
    if (allowed > 0.0)
      ratio = observed / allowed;
    else
      ratio = observed <= slack ? 0.0 : kInf;
    rep.max_observed_ratio = std::max(rep.max_observed_ratio, ratio);
    if (observed > allowed * rep.threshold + slack) {
      ++rep.violations;
      if (!rep.offending) rep.offending = x;
    }
  }
  rep.pass = rep.violations == 0;
  return rep;
}

} // namespace cgt
