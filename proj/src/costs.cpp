#include "cgt/costs.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace cgt {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// max_t |s(1-s)(1-2s)| over the logistic curve
const double kSigmoidCurvature = 1.0 / (6.0 * std::sqrt(3.0));

} // namespace

std::string to_string(CostKind kind) {
  return kind == CostKind::LogisticLog ? "logistic" : "quadratic";
}

CostSuite CostSuite::logistic(std::vector<LogisticTerm> terms) {
  if (terms.empty()) throw ParameterError("cost suite needs at least one agent");
  CostSuite s;
  s.kind_ = CostKind::LogisticLog;
  s.n_ = static_cast<int>(terms.size());
  s.d_ = static_cast<int>(terms.front().xi.size());
  for (const auto& t : terms)
    if (t.xi.size() != s.d_) throw ParameterError("logistic terms disagree on dimension");
  s.logistic_ = std::move(terms);
  return s;
}

CostSuite CostSuite::quadratic(std::vector<QuadraticTerm> terms) {
  if (terms.empty()) throw ParameterError("cost suite needs at least one agent");
  CostSuite s;
  s.kind_ = CostKind::QuadraticPL;
  s.n_ = static_cast<int>(terms.size());
  s.d_ = static_cast<int>(terms.front().M.cols());
  for (const auto& t : terms)
    if (t.M.cols() != s.d_ || t.M.rows() != t.b.size())
      throw ParameterError("quadratic terms have inconsistent shapes");
  s.quadratic_ = std::move(terms);
  return s;
}

double CostSuite::eval(int agent, const Vec& x) const {
  if (!x.allFinite()) throw ParameterError("eval: non-finite point");
  if (kind_ == CostKind::LogisticLog) {
    const auto& t = logistic_.at(static_cast<std::size_t>(agent));
    return t.h * sigmoid(t.xi.dot(x) + t.nu) + t.m * std::log1p(x.squaredNorm());
  }
  const auto& t = quadratic_.at(static_cast<std::size_t>(agent));
  return 0.5 * (t.M * x - t.b).squaredNorm();
}

Vec CostSuite::grad(int agent, const Vec& x) const {
  if (!x.allFinite()) throw ParameterError("grad: non-finite point");
  if (kind_ == CostKind::LogisticLog) {
    const auto& t = logistic_.at(static_cast<std::size_t>(agent));
    const double s = sigmoid(t.xi.dot(x) + t.nu);
    return (t.h * s * (1.0 - s)) * t.xi + (2.0 * t.m / (1.0 + x.squaredNorm())) * x;
  }
  const auto& t = quadratic_.at(static_cast<std::size_t>(agent));
  return t.M.transpose() * (t.M * x - t.b);
}

double CostSuite::global_value(const Vec& x) const {
  double acc = 0.0;
  for (int i = 0; i < n_; ++i) acc += eval(i, x);
  return acc / n_;
}

Vec CostSuite::global_grad(const Vec& x) const {
  Vec acc = Vec::Zero(d_);
  for (int i = 0; i < n_; ++i) acc += grad(i, x);
  return acc / n_;
}

double CostSuite::analytic_L() const {
  double L = 0.0;
  if (kind_ == CostKind::LogisticLog) {
    for (const auto& t : logistic_)
      L = std::max(L, std::abs(t.h) * t.xi.squaredNorm() * kSigmoidCurvature + 2.0 * std::abs(t.m));
  } else {
    for (const auto& t : quadratic_) {
      Eigen::SelfAdjointEigenSolver<Mat> es(t.M.transpose() * t.M, Eigen::EigenvaluesOnly);
      L = std::max(L, es.eigenvalues().maxCoeff());
    }
  }
  return L;
}

std::optional<double> CostSuite::pl_constant() const {
  if (kind_ != CostKind::QuadraticPL) return std::nullopt;
  Mat G = Mat::Zero(d_, d_);
  for (const auto& t : quadratic_) G += t.M.transpose() * t.M;
  G /= n_;
  Eigen::SelfAdjointEigenSolver<Mat> es(G, Eigen::EigenvaluesOnly);
  const Vec& ev = es.eigenvalues();
  const double cutoff = 1e-9 * std::max(ev.maxCoeff(), 1e-300);
  double nu = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev(i) > cutoff) {
      nu = ev(i);
      break;
    }
  if (nu <= 0.0) return std::nullopt;
  return nu;
}

nlohmann::json CostSuite::to_json(bool full_dump) const {
  nlohmann::json j = provenance.is_null() ? nlohmann::json::object() : provenance;
  j["kind"] = to_string(kind_);
  j["n"] = n_;
  j["d"] = d_;
  if (!full_dump) return j;
  auto agents = nlohmann::json::array();
  if (kind_ == CostKind::LogisticLog) {
    for (const auto& t : logistic_)
      agents.push_back({{"h", t.h},
                        {"nu", t.nu},
                        {"m", t.m},
                        {"xi", std::vector<double>(t.xi.data(), t.xi.data() + t.xi.size())}});
  } else {
    for (const auto& t : quadratic_) {
      std::vector<double> m;
      for (Eigen::Index r = 0; r < t.M.rows(); ++r)
        for (Eigen::Index c = 0; c < t.M.cols(); ++c) m.push_back(t.M(r, c));
      agents.push_back({{"rows", t.M.rows()},
                        {"M", m},
                        {"b", std::vector<double>(t.b.data(), t.b.data() + t.b.size())}});
    }
  }
  j["agents"] = agents;
  return j;
}

CostSuite make_logistic_suite(int n, int d, std::uint64_t seed, bool abs_m) {
  if (n < 1 || d < 1) throw ParameterError("logistic suite needs n, d >= 1");
  std::vector<LogisticTerm> terms;
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, 0x10u, static_cast<std::uint64_t>(i)));
    LogisticTerm t;
    t.h = rng.normal();
    t.nu = rng.normal();
    t.m = rng.normal();
    if (abs_m) t.m = std::abs(t.m);
    t.xi.resize(d);
    for (int k = 0; k < d; ++k) t.xi(k) = rng.normal();
    terms.push_back(std::move(t));
  }
  auto suite = CostSuite::logistic(std::move(terms));
  suite.provenance = {{"kind", "logistic"}, {"n", n}, {"d", d}, {"seed", seed}, {"abs_m", abs_m}};
  return suite;
}

CostSuite make_quadratic_suite(int n, int d, int rows, std::uint64_t seed, int null_dims,
                               double target_L) {
  if (n < 1 || d < 1 || rows < 1) throw ParameterError("quadratic suite needs n, d, rows >= 1");
  if (null_dims < 0 || null_dims >= d) throw ParameterError("null_dims must lie in [0, d)");
  if (!(target_L > 0.0)) throw ParameterError("target_L must be positive");
  Rng rng(derive_seed(seed, 0x20u));
  Mat basis(d, std::max(null_dims, 1));
  for (Eigen::Index r = 0; r < basis.rows(); ++r)
    for (Eigen::Index c = 0; c < basis.cols(); ++c) basis(r, c) = rng.normal();
  Mat projector = Mat::Identity(d, d);
  if (null_dims > 0) {
    Eigen::HouseholderQR<Mat> qr(basis);
    const Mat U = qr.householderQ() * Mat::Identity(d, null_dims);
    projector -= U * U.transpose();
  }
  Vec x_true(d);
  for (int k = 0; k < d; ++k) x_true(k) = rng.normal();

  std::vector<QuadraticTerm> terms;
  for (int i = 0; i < n; ++i) {
    Rng arng(derive_seed(seed, 0x21u, static_cast<std::uint64_t>(i)));
    QuadraticTerm t;
    t.M.resize(rows, d);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < d; ++c) t.M(r, c) = arng.normal();
    t.M = t.M * projector;
    terms.push_back(std::move(t));
  }
  double L = 0.0;
  for (const auto& t : terms) {
    Eigen::SelfAdjointEigenSolver<Mat> es(t.M.transpose() * t.M, Eigen::EigenvaluesOnly);
    L = std::max(L, es.eigenvalues().maxCoeff());
  }
  const double scale = std::sqrt(target_L / L);
  for (auto& t : terms) {
    t.M *= scale;
    t.b = t.M * x_true;
  }
  auto suite = CostSuite::quadratic(std::move(terms));
  suite.provenance = {{"kind", "quadratic"}, {"n", n},         {"d", d},
                      {"rows", rows},        {"seed", seed},   {"null_dims", null_dims},
                      {"target_L", target_L}};
  return suite;
}

CostSuite make_cost_suite(const nlohmann::json& spec, int n, std::uint64_t seed) {
  const auto kind = spec.at("kind").get<std::string>();
  const int d = spec.at("d").get<int>();
  if (kind == "logistic") return make_logistic_suite(n, d, seed, spec.value("abs_m", true));
  if (kind == "quadratic")
    return make_quadratic_suite(n, d, spec.value("rows", 2), seed, spec.value("null_dims", 1),
                                spec.value("target_L", 1.0));
  throw ParameterError("unknown cost kind '" + kind + "'");
}

double estimate_L(const CostSuite& suite, int samples, Rng& rng) {
  if (samples < 10) throw ParameterError("estimate_L needs at least 10 samples");
  if (suite.kind() == CostKind::QuadraticPL) return suite.analytic_L();
  const int d = suite.d();
  double best = 0.0;
  for (int s = 0; s < samples; ++s) {
    Vec x(d), dir(d);
    for (int k = 0; k < d; ++k) x(k) = rng.normal();
    for (int k = 0; k < d; ++k) dir(k) = rng.normal();
    const double step = std::pow(10.0, -3.0 * rng.uniform());
    const Vec y = x + step * dir;
    const double dist = (x - y).norm();
    if (dist == 0.0) continue;
    for (int i = 0; i < suite.n(); ++i)
      best = std::max(best, (suite.grad(i, x) - suite.grad(i, y)).norm() / dist);
  }
  return 1.5 * best;
}

namespace {

struct DescentResult {
  Vec x;
  double value;
  double grad_norm;
};

DescentResult descend(const CostSuite& suite, Vec x, double tol, int max_iters) {
  double f = suite.global_value(x);
  Vec g = suite.global_grad(x);
  double step = 1.0;
  for (int it = 0; it < max_iters && g.norm() > tol; ++it) {
    const double gg = g.squaredNorm();
    bool accepted = false;
    Vec trial;
    for (int bt = 0; bt < 80 && !accepted; ++bt) {
      trial = x - step * g;
      const double ft = suite.global_value(trial);
      if (ft <= f - 1e-4 * step * gg) {
        f = ft;
        accepted = true;
      } else {
        step *= 0.5;
      }
    }
    // No sufficient decrease is representable any more: F is flat to rounding here.
    if (!accepted) break;
    Vec g_next = suite.global_grad(trial);
    // Barzilai-Borwein guess for the next trial step.
    const Vec sv = trial - x;
    const Vec yv = g_next - g;
    const double sy = sv.dot(yv);
    step = sy > 0.0 ? std::clamp(sv.squaredNorm() / sy, 1e-10, 1e10) : std::min(step * 2.0, 1e10);
    x = std::move(trial);
    g = std::move(g_next);
  }
  return {x, f, g.norm()};
}

} // namespace

ReferenceSolution solve_reference(const CostSuite& suite, double tol, int restarts,
                                  std::uint64_t seed, int max_iters,
                                  const std::vector<Vec>& extra_starts) {
  if (!(tol > 0.0)) throw ParameterError("solve_reference needs tol > 0");
  const int d = suite.d();
  std::vector<Vec> starts;
  starts.push_back(Vec::Zero(d));
  Rng rng(derive_seed(seed, 0x30u));
  for (int r = 1; r < restarts; ++r) {
    Vec x(d);
    for (int k = 0; k < d; ++k) x(k) = rng.normal();
    starts.push_back(std::move(x));
  }
  for (const auto& e : extra_starts) starts.push_back(e);

  ReferenceSolution best;
  best.f_star = std::numeric_limits<double>::infinity();
  for (const auto& s : starts) {
    auto res = descend(suite, s, tol, max_iters);
    best.restart_values.push_back(res.value);
    best.restart_endpoints.push_back(res.x);
    if (res.value < best.f_star) {
      best.f_star = res.value;
      best.x_star = res.x;
      best.grad_norm = res.grad_norm;
    }
  }
  best.certified = best.grad_norm <= tol;
  return best;
}

ProbeReport probe_reference(const CostSuite& suite, double f_star, double tol, int probes,
                            Rng& rng, double scale) {
  ProbeReport rep;
  rep.probes = probes;
  rep.lowest_value = std::numeric_limits<double>::infinity();
  Vec x(suite.d());
  for (int p = 0; p < probes; ++p) {
    for (int k = 0; k < suite.d(); ++k) x(k) = scale * rng.normal();
    const double v = suite.global_value(x);
    if (v < rep.lowest_value) {
      rep.lowest_value = v;
      rep.lowest_point = x;
    }
    if (v < f_star - tol) ++rep.violations;
  }
  return rep;
}

ReferenceSolution certified_reference(const CostSuite& suite, double tol, std::uint64_t seed) {
  auto ref = solve_reference(suite, tol, 16, seed);
  Rng rng(derive_seed(seed, 0x31u));
  const auto probe = probe_reference(suite, ref.f_star, tol, 10000, rng);
  if (probe.violations > 0 && probe.lowest_point) {
    auto again = solve_reference(suite, tol, 1, seed, 50000, {*probe.lowest_point});
    if (again.f_star < ref.f_star) {
      again.restart_values.insert(again.restart_values.begin(), ref.restart_values.begin(),
                                  ref.restart_values.end());
      again.restart_endpoints.insert(again.restart_endpoints.begin(),
                                     ref.restart_endpoints.begin(), ref.restart_endpoints.end());
      return again;
    }
  }
  return ref;
}

} // namespace cgt
