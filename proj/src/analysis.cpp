#include "cgt/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cgt {

namespace {

double over(double num, double den) { return den == 0.0 ? kInf : num / den; }

double min_of(const std::vector<NamedValue>& terms, std::string* which = nullptr) {
  double best = kInf;
  for (const auto& t : terms)
    if (t.value < best) {
      best = t.value;
      if (which) *which = t.name;
    }
  return best;
}

void check_common(double sigma, double L) {
  if (!(sigma > 0.0 && sigma < 1.0)) throw ParameterError("sigma must lie in (0, 1)");
  if (!(L > 0.0) || !std::isfinite(L)) throw ParameterError("L must be positive");
}

void check_phi(const char* name, double phi, double r) {
  if (!(phi > 0.0 && phi < 1.0 / r))
    throw ParameterError(std::string(name) + " must lie in (0, 1/r) = (0, " +
                         std::to_string(1.0 / r) + ")");
}

void table_from_map(TheoremBounds& b, const std::map<std::string, double>& m) {
  static const std::map<std::string, std::string> formulas = {
      {"eps1", "8 L^2 eta^2 / ((1-sigma) gamma)"},
      {"eps2", "4 (1 + 1/c1) eta^2"},
      {"eps3", "5 (1 + 1/c2) eta^2"},
      {"theta1", "min{theta2, theta3}"},
      {"theta2", "eta/4 - (phi eps1 + eps2 + eps3)"},
      {"theta3", "min{0.07 (1-sigma) gamma, 0.44 c1 (2c1+1), 0.77 c2 (2c2+1)}"},
      {"theta4", "min{theta3, 2 nu theta2}"},
      {"theta5", "delta + phi xi1 + xi2 + xi3 + eta L^2 / 2"},
      {"theta6", "xi4 + phi xi5 + xi6 + xi7"},
      {"theta7", "xi8 + phi xi9 + xi10 + xi11"},
      {"theta8", "phi xi8 + xi12"},
      {"theta9", "eta/4 (1 - 2 eta L)"},
      {"xi1", "8 L^2 / ((1-sigma) gamma) (8 gamma^2 + 2 eta^2 L^2)"},
      {"xi2", "4 (8 gamma^2 + 2 eta^2 L^2)(1 + 1/c1)"},
      {"xi3", "xi7 L^2"},
      {"xi4", "2 eta^2 / (gamma (1-sigma))"},
      {"xi5", "delta + 8 L^2 eta^2 / ((1-sigma) gamma)"},
      {"xi6", "4 (1 + 1/c1) eta^2"},
      {"xi7", "5 (1 + 1/c2)(8 gamma^2 + 2 eta^2 L^2)"},
      {"xi8", "8 gamma C / (1-sigma)"},
      {"xi9", "32 L^2 gamma C / (1-sigma)"},
      {"xi10", "16 gamma^2 (1 + 1/c1) C + (1 - c1 - 2 c1^2)"},
      {"xi11", "20 (1 + 1/c2) gamma^2 L^2 C"},
      {"xi12", "20 gamma^2 (1 + 1/c2) C + (1 - c2 - 2 c2^2)"},
  };
  for (const auto& [name, value] : m) {
    auto it = formulas.find(name);
    b.put(name, value, it == formulas.end() ? "" : it->second);
  }
}

void put_base(TheoremBounds& b) {
  b.put("sigma", b.sigma, "||W - 11^T/n||_2");
  b.put("L", b.L, "smoothness constant");
  if (b.nu) b.put("nu", *b.nu, "P-L constant");
  if (b.theorem != Theorem::T7) {
    b.put("c1", b.c1, "phi_x psi r / 2");
    b.put("c2", b.c2, "phi_y psi r / 2");
    b.put("C", b.C, "compression constant");
  }
  b.put("phi", b.phi_w, "(1-sigma)^2 / (320 L^2)");
  b.put("gamma_max", b.gamma_max, "min of gamma terms");
  b.put("gamma", b.gamma, "gamma_max / 2");
  b.put("delta", b.delta, "1 - gamma (1-sigma)");
  b.put("eta_max", b.eta_max, "min of eta terms at gamma");
  b.put("eta", b.eta, "eta_max / 2");
}

} // namespace

double lyapunov_phi(double sigma, double L) {
  return (1.0 - sigma) * (1.0 - sigma) / (320.0 * L * L);
}

double lyapunov_phi_hat(double c1, double c2, double C) {
  return over(0.1 * std::min(c1 * (2.0 * c1 + 1.0), c2 * (2.0 * c2 + 1.0)), C);
}

double lyapunov_phi_tilde(double gamma, double sigma, double eta, double L) {
  return 0.4 * gamma * (1.0 - sigma) / (eta * L * L);
}

double delta_of(double gamma, double sigma) { return 1.0 - gamma * (1.0 - sigma); }

NormConstants norm_constants(double p, int d) {
  if (d < 1) throw ParameterError("dimension must be positive");
  if (p == 2.0) return {1.0, 1.0};
  if (std::isinf(p) && p > 0) return {1.0, std::sqrt(static_cast<double>(d))};
  throw ParameterError("only p = 2 and p = inf are supported");
}

std::vector<NamedValue> theorem1_gamma_terms(double sigma, double L, double c1, double c2,
                                             double C) {
  const double g = 1.0 - sigma;
  const double k1 = 1.0 + 1.0 / c1, k2 = 1.0 + 1.0 / c2;
  return {
      {"(1-sigma)/(160(1+1/c1))", g / (160.0 * k1)},
      {"(1-sigma)/(40000(1+1/c2)L^2)", g / (40000.0 * k2 * L * L)},
      {"c1(1-sigma)/(40C)", over(c1 * g, 40.0 * C)},
      {"c1/(8 sqrt C)", over(c1, 8.0 * std::sqrt(C))},
      {"c1/(10 L sqrt(C(1+1/c2)))", over(c1, 10.0 * L * std::sqrt(C * k2))},
      {"c2 L^2/C", over(c2 * L * L, C)},
      {"c2/(10 sqrt C)", over(c2, 10.0 * std::sqrt(C))},
  };
}

std::vector<NamedValue> theorem1_eta_terms(double sigma, double L, double c1, double c2,
                                           double gamma) {
  const double g = 1.0 - sigma;
  const double k1 = 1.0 + 1.0 / c1, k2 = 1.0 + 1.0 / c2;
  return {
      {"(1-sigma)^2 gamma/(40L)", g * g * gamma / (40.0 * L)},
      {"0.4(1-sigma)gamma/L^2", 0.4 * g * gamma / (L * L)},
      {"(1-sigma)^2/(80L) sqrt(gamma/(1+1/c1))", g * g / (80.0 * L) * std::sqrt(gamma / k1)},
      {"9/(40(4(1+1/c1)+5(1+1/c2)))", 9.0 / (40.0 * (4.0 * k1 + 5.0 * k2))},
      {"1/(2L)", 1.0 / (2.0 * L)},
      {"gamma", gamma},
  };
}

std::vector<NamedValue> theorem3_gamma_terms(double sigma, double L, double c1, double c2,
                                             double C) {
  const double g = 1.0 - sigma;
  const double k1 = 1.0 + 1.0 / c1, k2 = 1.0 + 1.0 / c2;
  const double phi = lyapunov_phi(sigma, L);
  const double phi_hat = lyapunov_phi_hat(c1, c2, C);
  const double Pi = min_of(theorem1_gamma_terms(sigma, L, c1, c2, C));
  return {
      {"c1(1-sigma)/(160C)", over(c1 * g, 160.0 * C)},
      {"c1/(16 sqrt C)", over(c1, 16.0 * std::sqrt(C))},
      {"c1/(20 L sqrt(C(1+1/c2)))", over(c1, 20.0 * L * std::sqrt(C * k2))},
      {"c2 L^2/(4C)", over(c2 * L * L, 4.0 * C)},
      {"c2/(20 sqrt C)", over(c2, 20.0 * std::sqrt(C))},
      {"1/(4(1+1/c1)+5(1+1/c2)L^2)", 1.0 / (4.0 * k1 + 5.0 * k2 * L * L)},
      {"(1-sigma)phi_hat/(4(16(1+4 phi L^2)+8(1-sigma)))",
       g * phi_hat / (4.0 * (16.0 * (1.0 + 4.0 * phi * L * L) + 8.0 * g))},
      {"1/(5(1+1/c2))", 1.0 / (5.0 * k2)},
      {"(1-sigma)phi_hat/(32(2 phi+(1-sigma)))", g * phi_hat / (32.0 * (2.0 * phi + g))},
      {"Pi", Pi},
  };
}

double theorem3_varsigma_max(double C) {
  return std::min(over(1.0, 2.0 * std::sqrt(C)), 1.0 / std::sqrt(2.0 * C + 1.0));
}

std::map<std::string, double> theorem1_constants(double sigma, double L, double c1, double c2,
                                                 double C, double eta, double gamma,
                                                 std::optional<double> nu) {
  const double g = 1.0 - sigma;
  const double k1 = 1.0 + 1.0 / c1, k2 = 1.0 + 1.0 / c2;
  const double L2 = L * L;
  const double phi = lyapunov_phi(sigma, L);
  const double delta = delta_of(gamma, sigma);
  const double mix = 8.0 * gamma * gamma + 2.0 * eta * eta * L2;
  std::map<std::string, double> m;
  m["eps1"] = 8.0 * L2 * eta * eta / (g * gamma);
  m["eps2"] = 4.0 * k1 * eta * eta;
  m["eps3"] = 5.0 * k2 * eta * eta;
  m["theta2"] = eta / 4.0 - (phi * m["eps1"] + m["eps2"] + m["eps3"]);
  m["theta3"] = std::min({0.07 * g * gamma, 0.44 * c1 * (2.0 * c1 + 1.0),
                          0.77 * c2 * (2.0 * c2 + 1.0)});
  m["theta1"] = std::min(m["theta2"], m["theta3"]);
  if (nu) m["theta4"] = std::min(m["theta3"], 2.0 * *nu * m["theta2"]);
  m["xi1"] = 8.0 * L2 / (g * gamma) * mix;
  m["xi2"] = 4.0 * mix * k1;
  m["xi7"] = 5.0 * k2 * mix;
  m["xi3"] = m["xi7"] * L2;
  m["xi4"] = 2.0 * eta * eta / (gamma * g);
  m["xi5"] = delta + 8.0 * L2 * eta * eta / (g * gamma);
  m["xi6"] = 4.0 * k1 * eta * eta;
  m["xi8"] = 8.0 * gamma * C / g;
  m["xi9"] = 32.0 * L2 * gamma * C / g;
  m["xi10"] = 16.0 * gamma * gamma * k1 * C + (1.0 - c1 - 2.0 * c1 * c1);
  m["xi11"] = 20.0 * k2 * gamma * gamma * L2 * C;
  m["xi12"] = 20.0 * gamma * gamma * k2 * C + (1.0 - c2 - 2.0 * c2 * c2);
  m["theta5"] = delta + phi * m["xi1"] + m["xi2"] + m["xi3"] + eta * L2 / 2.0;
  m["theta6"] = m["xi4"] + phi * m["xi5"] + m["xi6"] + m["xi7"];
  m["theta7"] = m["xi8"] + phi * m["xi9"] + m["xi10"] + m["xi11"];
  m["theta8"] = phi * m["xi8"] + m["xi12"];
  m["theta9"] = eta / 4.0 * (1.0 - 2.0 * eta * L);
  return m;
}

std::string to_string(Theorem t) {
  switch (t) {
  case Theorem::T1: return "relative";
  case Theorem::T3: return "relative-error-feedback";
  case Theorem::T5: return "global-absolute";
  case Theorem::T7: return "local-absolute";
  }
  return "?";
}

double TheoremBounds::get(const std::string& name) const {
  for (const auto& e : table)
    if (e.name == name) return e.value;
  throw ParameterError("constant '" + name + "' is not defined for this theorem");
}

bool TheoremBounds::has(const std::string& name) const {
  return std::any_of(table.begin(), table.end(), [&](const auto& e) { return e.name == name; });
}

void TheoremBounds::put(const std::string& name, double value, const std::string& formula) {
  for (auto& e : table)
    if (e.name == name) {
      e.value = value;
      e.formula = formula;
      return;
    }
  table.push_back({name, value, formula});
}

nlohmann::json TheoremBounds::to_json() const {
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
  };
  nlohmann::json j;
  j["theorem"] = to_string(theorem);
  j["feasible"] = feasible;
  j["binding"] = binding;
  auto list = [&](const std::vector<NamedValue>& v) {
    auto a = nlohmann::json::array();
    for (const auto& t : v) a.push_back({{"term", t.name}, {"value", num(t.value)}});
    return a;
  };
  j["gamma_terms"] = list(gamma_terms);
  j["eta_terms"] = list(eta_terms);
  auto consts = nlohmann::json::array();
  for (const auto& e : table)
    consts.push_back({{"name", e.name}, {"value", num(e.value)}, {"formula", e.formula}});
  j["constants"] = consts;
  return j;
}

TheoremBounds bounds_theorem1(double sigma, double L, const CompressorSpec& comp, double phi_x,
                              double phi_y, std::optional<double> nu) {
  check_common(sigma, L);
  if (comp.assumption != AssumptionClass::RelativeBounded)
    throw ParameterError("this region needs a relative-error compressor");
  check_phi("phi_x", phi_x, comp.r);
  check_phi("phi_y", phi_y, comp.r);
  TheoremBounds b;
  b.theorem = Theorem::T1;
  b.sigma = sigma;
  b.L = L;
  b.nu = nu;
  b.C = comp.cap_c;
  b.c1 = phi_x * comp.psi * comp.r / 2.0;
  b.c2 = phi_y * comp.psi * comp.r / 2.0;
  b.phi_w = lyapunov_phi(sigma, L);
  b.gamma_terms = theorem1_gamma_terms(sigma, L, b.c1, b.c2, b.C);
  b.gamma_max = min_of(b.gamma_terms, &b.binding);
  b.gamma = b.gamma_max / 2.0;
  b.eta_terms = theorem1_eta_terms(sigma, L, b.c1, b.c2, b.gamma);
  b.eta_max = min_of(b.eta_terms);
  b.eta = b.eta_max / 2.0;
  b.delta = delta_of(b.gamma, sigma);
  put_base(b);
  table_from_map(b, theorem1_constants(sigma, L, b.c1, b.c2, b.C, b.eta, b.gamma, nu));
  b.feasible = b.gamma_max > 0.0 && b.eta_max > 0.0 && b.get("theta2") > 0.0;
  return b;
}

TheoremBounds bounds_theorem3(double sigma, double L, const CompressorSpec& comp, double phi_x,
                              double phi_y, std::optional<double> nu) {
  TheoremBounds b = bounds_theorem1(sigma, L, comp, phi_x, phi_y, nu);
  b.theorem = Theorem::T3;
  b.table.clear();
  b.phi_hat = lyapunov_phi_hat(b.c1, b.c2, b.C);
  b.gamma_terms = theorem3_gamma_terms(sigma, L, b.c1, b.c2, b.C);
  b.gamma_max = min_of(b.gamma_terms, &b.binding);
  b.gamma = b.gamma_max / 2.0;
  b.eta_terms = theorem1_eta_terms(sigma, L, b.c1, b.c2, b.gamma);
  b.eta_max = min_of(b.eta_terms);
  b.eta = b.eta_max / 2.0;
  b.delta = delta_of(b.gamma, sigma);
  b.varsigma_max = theorem3_varsigma_max(b.C);
  b.varsigma = b.varsigma_max / 2.0;
  put_base(b);
  b.put("phi_hat", b.phi_hat, "0.1 min{c1 (2c1+1), c2 (2c2+1)} / C");
  b.put("varsigma_max", b.varsigma_max, "min{1/(2 sqrt C), 1/sqrt(2C+1)}");
  b.put("varsigma", b.varsigma, "varsigma_max / 2");
  auto m = theorem1_constants(sigma, L, b.c1, b.c2, b.C, b.eta, b.gamma, nu);
  table_from_map(b, m);
  const double g = 1.0 - sigma;
  const double th2 = std::min({0.07 * g * b.gamma, 0.24 * b.c1 * (2.0 * b.c1 + 1.0),
                               0.57 * b.c2 * (2.0 * b.c2 + 1.0), 0.25});
  b.put("theta_hat2", th2, "min{0.07 (1-sigma) gamma, 0.24 c1 (2c1+1), 0.57 c2 (2c2+1), 0.25}");
  b.put("theta_hat1", std::min(m["theta2"], th2), "min{theta2, theta_hat2}");
  if (nu) b.put("theta_hat3", std::min(th2, 2.0 * *nu * m["theta2"]), "min{theta_hat2, 2 nu theta2}");
  b.feasible = b.gamma_max > 0.0 && b.eta_max > 0.0 && m["theta2"] > 0.0;
  return b;
}

TheoremBounds bounds_theorem5(double sigma, double L, const CompressorSpec& comp, int n, double s0,
                              double mu, std::optional<double> nu) {
  check_common(sigma, L);
  if (comp.assumption != AssumptionClass::GlobalAbsolute)
    throw ParameterError("this region needs a globally bounded absolute compressor");
  if (n < 1) throw ParameterError("n must be positive");
  if (!(s0 > 0.0)) throw ParameterError("s0 must be positive");
  if (!(mu > 0.0 && mu < 1.0)) throw ParameterError("mu must lie in (0, 1)");
  const NormConstants nc = norm_constants(comp.p_norm, comp.dim);
  TheoremBounds b;
  b.theorem = Theorem::T5;
  b.sigma = sigma;
  b.L = L;
  b.nu = nu;
  b.c1 = b.c2 = 0.25;
  b.C = comp.cap_c;
  b.phi_w = lyapunov_phi(sigma, L);
  // The relative-compression terms vanish for this algorithm, so only the C-free terms remain.
  b.gamma_terms = theorem1_gamma_terms(sigma, L, b.c1, b.c2, 0.0);
  b.gamma_terms.erase(std::remove_if(b.gamma_terms.begin(), b.gamma_terms.end(),
                                     [](const NamedValue& t) { return std::isinf(t.value); }),
                      b.gamma_terms.end());
  b.gamma_max = min_of(b.gamma_terms, &b.binding);
  b.gamma = b.gamma_max / 2.0;
  b.eta_terms = theorem1_eta_terms(sigma, L, b.c1, b.c2, b.gamma);
  b.eta_max = min_of(b.eta_terms);
  b.eta = b.eta_max / 2.0;
  b.delta = delta_of(b.gamma, sigma);
  b.s0 = s0;
  b.mu = mu;
  put_base(b);
  b.put("n", n, "number of agents");
  b.put("d_tilde", nc.d_tilde, "||v||_2 <= d_tilde ||v||_p");
  b.put("s0", s0, "initial scaling");
  b.put("mu", mu, "scaling decay");
  const auto m = theorem1_constants(sigma, L, b.c1, b.c2, 0.0, b.eta, b.gamma, nu);
  const double g = 1.0 - sigma;
  const double xi8 = 8.0 * b.gamma * b.C / g;
  const double dt2 = nc.d_tilde * nc.d_tilde;
  b.put("eps1", m.at("eps1"), "8 L^2 eta^2 / ((1-sigma) gamma)");
  b.put("theta2", m.at("theta2"), "eta/4 - (phi eps1 + eps2 + eps3)");
  b.put("xi8", xi8, "8 gamma C / (1-sigma)");
  const double t3 = 0.59 * g * b.gamma;
  const double t4 = b.eta / 4.0 - b.phi_w * m.at("eps1");
  b.put("theta_breve3", t3, "0.59 (1-sigma) gamma");
  b.put("theta_breve4", t4, "eta/4 - phi eps1");
  b.put("theta_breve1", std::min(t3, t4), "min{theta_breve3, theta_breve4}");
  b.put("theta_breve8", 2.0 * n * dt2 * xi8 * (1.0 + 2.0 * L * L),
        "2 n d_tilde^2 xi8 (1 + 2 L^2)");
  b.put("theta_breve2", 2.0 * n * dt2 * xi8 * s0 * s0 * (1.0 + 2.0 * L * L),
        "2 n d_tilde^2 xi8 s0^2 (1 + 2 L^2)");
  if (nu) {
    const double t7 = std::min(std::min(t3, t4), 2.0 * *nu * m.at("theta2"));
    b.put("theta_breve7", t7, "min{theta_breve1, 2 nu theta2}");
    b.put("theta_breve5", std::min(t7, 1.0 - mu * mu), "min{theta_breve7, 1 - mu^2}");
  }
  b.feasible = b.gamma_max > 0.0 && b.eta_max > 0.0 && t4 > 0.0;
  return b;
}

double breve_descent_slack(const TheoremBounds& b, int n, double s) {
  const double dt = b.get("d_tilde");
  return 2.0 * n * dt * dt * b.get("xi8") * s * s * (1.0 + 2.0 * b.L * b.L);
}

double breve_theta6(const TheoremBounds& b, double U0) {
  const double t7 = b.get("theta_breve7");
  const double t8 = b.get("theta_breve8");
  const double mu2 = b.mu * b.mu;
  const double s02 = b.s0 * b.s0;
  const double a = 1.0 - t7;
  double factor;
  if (a < mu2) {
    factor = 1.0 / ((1.0 - a / mu2) * mu2);
  } else if (a > mu2) {
    factor = 1.0 / ((1.0 - mu2 / a) * a);
  } else {
    const double varpi = (mu2 + 1.0) / 2.0;
    factor = 1.0 / ((1.0 - mu2 / varpi) * varpi);
  }
  return U0 + t8 * s02 * factor;
}

TheoremBounds bounds_theorem7(double sigma, double L, double nu, const CompressorSpec& comp, int n,
                              const InitialState& init) {
  check_common(sigma, L);
  if (!(nu > 0.0)) throw ParameterError("nu must be positive");
  if (comp.assumption != AssumptionClass::LocalAbsolute)
    throw ParameterError("this region needs a locally bounded absolute compressor");
  const double phc = comp.phi_c;
  if (!(phc > 0.0 && phc <= 1.0)) throw ParameterError("phi_c must lie in (0, 1]");
  const NormConstants nc = norm_constants(comp.p_norm, comp.dim);
  const double g = 1.0 - sigma;
  const double L2 = L * L;
  const double dh2 = nc.d_hat * nc.d_hat;
  const double dt2 = nc.d_tilde * nc.d_tilde;
  const double kp = 1.0 + 1.0 / phc;
  const double om = (1.0 - phc) * (1.0 - phc);
  const double Phi = phc + phc * phc - phc * phc * phc;

  TheoremBounds b;
  b.theorem = Theorem::T7;
  b.sigma = sigma;
  b.L = L;
  b.nu = nu;
  b.phi_w = lyapunov_phi(sigma, L);

  const double th2 = 2.0 * (1.0 + 2.0 * L2) * 8.0 * n * dt2 * om / g;
  const double th4 = std::min(0.59 * g, 48.0 * nu * b.phi_w / g);
  const double xi5 = th2 > 0.0 ? 2.0 * th2 / th4 : 1.0;
  const double xi8 = 16.0 * n * dh2 * dt2 * kp;
  const double xi9 = 20.0 * n * dh2 * dt2 * kp;
  const double xi1 = 4.0 * dh2 * (5.0 + 4.0 * L2) * kp * xi5;
  const double xi2 = 10.0 * L2 * (3.0 + 2.0 * L2) * kp * xi5;
  const double xi3 = xi8 * om + 32.0 * dh2 * kp * xi5;
  const double xi4 = xi9 * (1.0 + L2) * om + 40.0 * dh2 * (1.0 + L2) * kp * xi5;

  b.gamma_terms = {
      {"sqrt(Phi/(2 xi~3))", std::sqrt(Phi / (2.0 * xi3))},
      {"sqrt(Phi/(2 xi~4))", std::sqrt(Phi / (2.0 * xi4))},
      {"2L^2/((1-sigma) nu)", 2.0 * L2 / (g * nu)},
      {"1", 1.0},
  };
  b.gamma_max = min_of(b.gamma_terms, &b.binding);
  b.gamma = b.gamma_max / 2.0;
  b.eta_terms = {
      {"(1-sigma)^2 gamma/(40L)", g * g * b.gamma / (40.0 * L)},
      {"Phi/(2 xi~1)", Phi / (2.0 * xi1)},
      {"Phi/(2 xi~2)", Phi / (2.0 * xi2)},
      {"1", 1.0},
  };
  b.eta_max = min_of(b.eta_terms);
  b.eta = b.eta_max / 2.0;
  b.delta = delta_of(b.gamma, sigma);
  b.phi_tilde = lyapunov_phi_tilde(b.gamma, sigma, b.eta, L);

  const double xi6 = 1.0 - Phi + b.eta * xi1 + b.gamma * b.gamma * xi3;
  const double xi7 = 1.0 - Phi + b.eta * xi2 + b.gamma * b.gamma * xi4;
  const double tb3 = 0.59 * g * b.gamma;
  const double th3_stmt = std::min(tb3, 0.5 * b.gamma);
  const double th3_proof = th4 * b.gamma;
  const double th1_stmt = 1.0 - th3_stmt + th2 / xi5 * b.gamma;
  const double th1_proof = 1.0 - th3_proof + th2 / xi5 * b.gamma;
  const double th1 = std::max(th1_stmt, th1_proof);
  b.mu_min = std::sqrt(std::max({th1, xi6, xi7, 0.0}));
  b.mu = (b.mu_min + 1.0) / 2.0;

  const double U0 = init.breve_V0 + b.phi_tilde * init.opt_gap0;
  b.s0_min = std::max({std::sqrt(std::max(U0, 0.0) / xi5), init.max_x_norm, init.max_y_norm});
  b.s0 = b.s0_min;

  put_base(b);
  b.put("n", n, "number of agents");
  b.put("phi_c", phc, "local compression constant");
  b.put("Phi", Phi, "phi_c + phi_c^2 - phi_c^3");
  b.put("d_hat", nc.d_hat, "||v||_p <= d_hat ||v||_2");
  b.put("d_tilde", nc.d_tilde, "||v||_2 <= d_tilde ||v||_p");
  b.put("phi_tilde", b.phi_tilde, "0.4 gamma (1-sigma) / (eta L^2)");
  b.put("theta~2", th2, "2 (1 + 2L^2) 8 n d_tilde^2 (1-phi_c)^2 / (1-sigma)");
  b.put("theta~4", th4, "min{0.59 (1-sigma), 48 nu phi / (1-sigma)}");
  b.put("xi~5", xi5, "2 theta~2 / theta~4 (1 when theta~2 = 0)");
  b.put("xi~8", xi8, "16 n d_hat^2 d_tilde^2 (1 + 1/phi_c)");
  b.put("xi~9", xi9, "20 n d_hat^2 d_tilde^2 (1 + 1/phi_c)");
  b.put("xi~1", xi1, "4 d_hat^2 (5 + 4L^2)(1 + 1/phi_c) xi~5");
  b.put("xi~2", xi2, "10 L^2 (3 + 2L^2)(1 + 1/phi_c) xi~5");
  b.put("xi~3", xi3, "xi~8 (1-phi_c)^2 + 32 d_hat^2 (1 + 1/phi_c) xi~5");
  b.put("xi~4", xi4, "xi~9 (1+L^2)(1-phi_c)^2 + 40 d_hat^2 (1+L^2)(1 + 1/phi_c) xi~5");
  b.put("xi~6", xi6, "1 - Phi + eta xi~1 + gamma^2 xi~3");
  b.put("xi~7", xi7, "1 - Phi + eta xi~2 + gamma^2 xi~4");
  b.put("theta_breve3", tb3, "0.59 (1-sigma) gamma");
  b.put("theta~3", th3_stmt, "min{theta_breve3, 0.5 gamma}");
  b.put("theta~3_alt", th3_proof, "theta~4 gamma");
  b.put("theta~1", th1_stmt, "1 - theta~3 + theta~2 gamma / xi~5");
  b.put("theta~1_alt", th1_proof, "1 - theta~4 gamma + theta~2 gamma / xi~5");
  b.put("U~0", U0, "||X-Xbar||^2 + phi ||Y-Ybar||^2 + phi_tilde n (F(Xbar) - F*) at k = 0");
  b.put("mu_min", b.mu_min, "max{sqrt theta~1, sqrt theta~1_alt, sqrt xi~6, sqrt xi~7}");
  b.put("mu", b.mu, "(mu_min + 1) / 2");
  b.put("s0_min", b.s0_min, "max{sqrt(U~0 / xi~5), max ||X_i(0)||, max ||Y_i(0)||}");
  b.put("s0", b.s0, "s0_min");

  b.feasible = true;
  auto fail = [&](const std::string& why) {
    if (b.feasible) b.binding = why;
    b.feasible = false;
  };
  if (!(b.gamma_max > 0.0) || !std::isfinite(b.gamma_max)) fail("gamma interval empty");
  if (!(b.eta_max > 0.0) || !std::isfinite(b.eta_max)) fail("eta interval empty");
  if (!(b.mu_min < 1.0)) fail("mu interval empty (mu_min >= 1)");
  if (!(b.s0 > 0.0) || !std::isfinite(b.s0)) fail("s0 not positive");
  return b;
}

std::string to_string(LyapunovKind k) {
  switch (k) {
  case LyapunovKind::U: return "U";
  case LyapunovKind::UHat: return "U_hat";
  case LyapunovKind::UBreve: return "U_breve";
  case LyapunovKind::UTilde: return "U_tilde";
  }
  return "?";
}

LyapunovWeights weights_of(const TheoremBounds& b) { return {b.phi_w, b.phi_hat, b.phi_tilde}; }

LyapunovValue lyapunov_eval(LyapunovKind which, const StackedState& s, const CostSuite& suite,
                            double f_star, const LyapunovWeights& w) {
  const int n = static_cast<int>(s.X.cols());
  const Vec xbar = s.X.rowwise().mean();
  const Vec ybar = s.Y.rowwise().mean();
  LyapunovValue v;
  auto& t = v.terms;
  t["consensus"] = (s.X.colwise() - xbar).squaredNorm();
  t["tracking"] = (s.Y.colwise() - ybar).squaredNorm();
  t["optimality"] = n * (suite.global_value(xbar) - f_star);
  double total = t["consensus"] + w.phi * t["tracking"];
  if (which == LyapunovKind::U || which == LyapunovKind::UHat) {
    if (s.A.size() == 0 || s.C.size() == 0)
      throw ParameterError("this Lyapunov function needs the A and C auxiliaries");
    t["comp_err_x"] = (s.X - s.A).squaredNorm();
    t["comp_err_y"] = (s.Y - s.C).squaredNorm();
    total += t["comp_err_x"] + t["comp_err_y"];
  }
  if (which == LyapunovKind::UHat) {
    if (s.EX.size() == 0 || s.EY.size() == 0)
      throw ParameterError("this Lyapunov function needs the error-feedback states");
    t["ef_x"] = s.EX.squaredNorm();
    t["ef_y"] = s.EY.squaredNorm();
    // With exact compression the weight is infinite but the states are identically zero.
    if (std::isfinite(w.phi_hat)) total += w.phi_hat * (t["ef_x"] + t["ef_y"]);
  }
  total += (which == LyapunovKind::UTilde ? w.phi_tilde : 1.0) * t["optimality"];
  v.total = total;
  return v;
}

LyapunovKind default_lyapunov(Algorithm algo) {
  switch (algo) {
  case Algorithm::CGT: return LyapunovKind::U;
  case Algorithm::EFCGT: return LyapunovKind::UHat;
  case Algorithm::Scaled:
  case Algorithm::DGT: return LyapunovKind::UBreve;
  }
  return LyapunovKind::UBreve;
}

LyapunovValue lyapunov_eval(LyapunovKind which, const Simulator& sim, double f_star,
                            const LyapunovWeights& w) {
  const Algorithm a = sim.algorithm();
  bool ok = false;
  switch (which) {
  case LyapunovKind::U: ok = a == Algorithm::CGT || a == Algorithm::EFCGT; break;
  case LyapunovKind::UHat: ok = a == Algorithm::EFCGT; break;
  case LyapunovKind::UBreve:
  case LyapunovKind::UTilde: ok = a == Algorithm::Scaled || a == Algorithm::DGT; break;
  }
  if (!ok)
    throw ParameterError("Lyapunov function " + to_string(which) + " does not apply to " +
                         to_string(a));
  StackedState s;
  s.X = sim.stacked(Field::X);
  s.Y = sim.stacked(Field::Y);
  if (which == LyapunovKind::U || which == LyapunovKind::UHat) {
    s.A = sim.stacked(Field::A);
    s.C = sim.stacked(Field::C);
  }
  if (which == LyapunovKind::UHat) {
    s.EX = sim.stacked(Field::EX);
    s.EY = sim.stacked(Field::EY);
  }
  return lyapunov_eval(which, s, sim.suite(), f_star, w);
}

RateFit fit_rate(const std::vector<double>& ks, const std::vector<double>& values, FitMode mode) {
  if (ks.size() != values.size()) throw ParameterError("fit_rate: size mismatch");
  if (ks.size() < 10) throw ParameterError("fit_rate needs at least 10 points");
  std::vector<double> y(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] > 0.0) || !std::isfinite(values[i]))
      throw ParameterError("fit_rate needs positive finite values");
    y[i] = mode == FitMode::Linear ? std::log(values[i]) : ks[i] * values[i];
  }
  const double m = static_cast<double>(ks.size());
  double kx = 0.0, ky = 0.0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    kx += ks[i];
    ky += y[i];
  }
  kx /= m;
  ky /= m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    sxx += (ks[i] - kx) * (ks[i] - kx);
    sxy += (ks[i] - kx) * (y[i] - ky);
    syy += (y[i] - ky) * (y[i] - ky);
  }
  if (sxx == 0.0) throw ParameterError("fit_rate needs distinct k values");
  const double slope = sxy / sxx;
  const double intercept = ky - slope * kx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const double e = y[i] - (intercept + slope * ks[i]);
    ss_res += e * e;
  }
  RateFit f;
  f.points = static_cast<int>(ks.size());
  const double scale = std::max(1.0, std::abs(ky));
  f.r_squared = syy <= 1e-24 * scale * scale * m ? 1.0 : 1.0 - ss_res / syy;
  if (mode == FitMode::Linear) {
    f.rate = std::exp(slope);
    f.constant = std::exp(intercept);
  } else {
    f.rate = slope;
    f.constant = ky;
  }
  return f;
}

RateFit fit_rate(const RunTrace& trace, int k0, int k1, FitMode mode) {
  if (trace.records.empty()) throw ParameterError("fit_rate: empty trace");
  if (k0 > k1 || k0 < trace.records.front().k || k1 > trace.records.back().k)
    throw ParameterError("fit_rate: window outside the trace");
  std::vector<double> ks, vs;
  for (const auto& r : trace.records)
    if (r.k >= k0 && r.k <= k1) {
      ks.push_back(r.k);
      vs.push_back(r.consensus_err + r.opt_gap);
    }
  return fit_rate(ks, vs, mode);
}

} // namespace cgt
