#include "cgt/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

namespace cgt {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

struct ResolvedCell {
  CellSpec spec;
  CompressorSpec comp;
  AlgorithmParams params;
  LyapunovKind lyap = LyapunovKind::UBreve;
  LyapunovWeights weights;
  std::uint64_t seed = 0;
  std::string error; // parameters could not be resolved
};

double default_phi(const CompressorSpec& comp) { return 0.5 / comp.r; }

ResolvedCell resolve_cell(const ExperimentConfig& cfg, const Scenario& sc, const CellSpec& cell) {
  ResolvedCell rc;
  rc.spec = cell;
  rc.seed = derive_seed(cfg.resolved_algo_seed(), fnv1a(cell.name));
  const int d = sc.suite.d();
  rc.comp = cell.algo == Algorithm::DGT ? CompressorSpec::identity(d)
                                        : CompressorSpec::from_json(cell.compressor, d);
  if (cell.algo == Algorithm::Scaled && rc.comp.assumption == AssumptionClass::RelativeBounded)
    throw ParameterError("cell '" + cell.name + "': alg3 needs an absolute-error compressor");
  if ((cell.algo == Algorithm::CGT || cell.algo == Algorithm::EFCGT) &&
      rc.comp.assumption != AssumptionClass::RelativeBounded)
    throw ParameterError("cell '" + cell.name + "': " + to_string(cell.algo) +
                         " needs a relative-error compressor");

  const double sigma = sc.network.sigma();
  rc.lyap = default_lyapunov(cell.algo);
  if (cell.algo == Algorithm::Scaled && rc.comp.assumption == AssumptionClass::LocalAbsolute)
    rc.lyap = LyapunovKind::UTilde;

  if (cell.params) {
    rc.params = *cell.params;
    if (!cfg.force_params) {
      const TheoremBounds b = cell_bounds(sc, cell, rc.comp);
      if (auto v = region_violation(cell.algo, rc.params, b))
        throw ParameterError("cell '" + cell.name + "': parameters outside the certified region (" +
                             *v + "); set force_params to run anyway");
    }
  } else {
    try {
      const TheoremBounds b = cell_bounds(sc, cell, rc.comp);
      if (!b.feasible) throw ParameterError("empty region (" + b.binding + ")");
      rc.params.eta = b.eta;
      rc.params.gamma = b.gamma;
      rc.params.phi_x = rc.params.phi_y = default_phi(rc.comp);
      rc.params.varsigma = b.varsigma;
      rc.params.s0 = b.s0;
      rc.params.mu = b.mu;
    } catch (const ParameterError& e) {
      rc.error = e.what();
    }
  }
  rc.weights.phi = lyapunov_phi(sigma, sc.L);
  if (cell.algo == Algorithm::EFCGT)
    rc.weights.phi_hat = lyapunov_phi_hat(rc.params.phi_x * rc.comp.psi * rc.comp.r / 2.0,
                                          rc.params.phi_y * rc.comp.psi * rc.comp.r / 2.0,
                                          rc.comp.cap_c);
  if (rc.lyap == LyapunovKind::UTilde && rc.params.eta > 0.0)
    rc.weights.phi_tilde = lyapunov_phi_tilde(rc.params.gamma, sigma, rc.params.eta, sc.L);
  return rc;
}

ReportRow make_row(const CellResult& c) {
  ReportRow r;
  r.name = c.name;
  r.algo = to_string(c.algo);
  r.compressor = c.compressor;
  if (!c.error.empty()) {
    r.status = "error: " + c.error;
  } else {
    r.status = to_string(c.trace.status);
    if (c.hit) {
      r.iters = c.hit->k;
      r.bits = c.hit->bits;
    } else {
      r.status += c.trace.status == RunStatus::Ok ? " (unreached)" : "";
    }
  }
  return r;
}

nlohmann::json row_json(const ReportRow& r) {
  nlohmann::json j;
  j["name"] = r.name;
  j["algo"] = r.algo;
  j["compressor"] = r.compressor;
  j["iters"] = r.iters ? nlohmann::json(*r.iters) : nlohmann::json(nullptr);
  j["bits"] = r.bits ? nlohmann::json(*r.bits) : nlohmann::json(nullptr);
  j["percent"] = r.percent ? nlohmann::json(*r.percent) : nlohmann::json(nullptr);
  j["status"] = r.status;
  return j;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
}

} // namespace

double upsilon(const RunTrace& trace, int T) {
  if (trace.records.empty()) throw ParameterError("upsilon: empty trace");
  if (T < trace.records.front().k || T > trace.records.back().k)
    throw ParameterError("upsilon: T outside the trace");
  double best = kInf;
  for (const auto& r : trace.records) {
    if (r.k > T) break;
    best = std::min(best, r.consensus_err + r.opt_gap);
  }
  return best;
}

std::optional<ThresholdHit> bits_to_threshold(const RunTrace& trace, double threshold) {
  if (!(threshold > 0.0)) throw ParameterError("threshold must be positive");
  for (const auto& r : trace.records)
    if (r.consensus_err + r.opt_gap <= threshold) return ThresholdHit{r.k, r.bits};
  return std::nullopt;
}

Scenario build_scenario(const ExperimentConfig& cfg) {
  Network net = generate_network(cfg.n, cfg.density, cfg.resolved_graph_seed(), cfg.topology);
  CostSuite suite = make_cost_suite(cfg.cost, cfg.n, cfg.resolved_cost_seed());
  Scenario sc{std::move(net), std::move(suite), 0.0, std::nullopt, {}, Mat()};
  sc.L = sc.suite.analytic_L();
  sc.nu = sc.suite.pl_constant();
  sc.reference = certified_reference(sc.suite, cfg.fstar_tol, cfg.resolved_cost_seed());
  Rng rng(cfg.resolved_init_seed());
  sc.X0.resize(sc.suite.d(), cfg.n);
  for (int i = 0; i < cfg.n; ++i)
    for (int k = 0; k < sc.suite.d(); ++k) sc.X0(k, i) = cfg.init_scale * rng.normal();
  return sc;
}

TheoremBounds cell_bounds(const Scenario& sc, const CellSpec& cell, const CompressorSpec& comp) {
  const double sigma = sc.network.sigma();
  const double phi_x = cell.params ? cell.params->phi_x : default_phi(comp);
  const double phi_y = cell.params ? cell.params->phi_y : default_phi(comp);
  switch (cell.algo) {
  case Algorithm::CGT: return bounds_theorem1(sigma, sc.L, comp, phi_x, phi_y, sc.nu);
  case Algorithm::EFCGT: return bounds_theorem3(sigma, sc.L, comp, phi_x, phi_y, sc.nu);
  case Algorithm::DGT:
    return bounds_theorem1(sigma, sc.L, CompressorSpec::identity(sc.suite.d()), 0.5, 0.5, sc.nu);
  case Algorithm::Scaled: break;
  }
  if (comp.assumption == AssumptionClass::GlobalAbsolute) {
    double s0 = 0.0;
    for (int i = 0; i < sc.X0.cols(); ++i) {
      s0 = std::max(s0, p_norm(sc.X0.col(i), comp.p_norm));
      s0 = std::max(s0, p_norm(sc.suite.grad(i, sc.X0.col(i)), comp.p_norm));
    }
    const double s = cell.params ? cell.params->s0 : s0;
    const double mu = cell.params ? cell.params->mu : 0.99;
    return bounds_theorem5(sigma, sc.L, comp, static_cast<int>(sc.X0.cols()), s, mu, sc.nu);
  }
  if (!sc.nu)
    throw ParameterError("a locally bounded compressor has a certified region only for P-L costs");
  const int n = static_cast<int>(sc.X0.cols());
  const double phi = lyapunov_phi(sigma, sc.L);
  Mat Y(sc.X0.rows(), n);
  InitialState init;
  for (int i = 0; i < n; ++i) {
    Y.col(i) = sc.suite.grad(i, sc.X0.col(i));
    init.max_x_norm = std::max(init.max_x_norm, sc.X0.col(i).norm());
    init.max_y_norm = std::max(init.max_y_norm, Y.col(i).norm());
  }
  const Vec xbar = sc.X0.rowwise().mean();
  init.breve_V0 = consensus_error(sc.X0) + phi * consensus_error(Y);
  init.opt_gap0 = n * (sc.suite.global_value(xbar) - sc.reference.f_star);
  return bounds_theorem7(sigma, sc.L, *sc.nu, comp, n, init);
}

std::optional<std::string> region_violation(Algorithm algo, const AlgorithmParams& p,
                                            const TheoremBounds& b) {
  if (!b.feasible) return "region is empty: " + b.binding;
  if (!(p.gamma < b.gamma_max)) return "gamma must be below " + format_double(b.gamma_max);
  double eta_max;
  if (b.theorem == Theorem::T7) {
    const double g = 1.0 - b.sigma;
    eta_max = std::min({g * g * p.gamma / (40.0 * b.L), b.get("Phi") / (2.0 * b.get("xi~1")),
                        b.get("Phi") / (2.0 * b.get("xi~2")), 1.0});
  } else {
    double best = kInf;
    for (const auto& t : theorem1_eta_terms(b.sigma, b.L, b.c1, b.c2, p.gamma))
      best = std::min(best, t.value);
    eta_max = best;
  }
  if (!(p.eta < eta_max)) return "eta must be below " + format_double(eta_max);
  if (algo == Algorithm::EFCGT && !(p.varsigma > 0.0 && p.varsigma < b.varsigma_max))
    return "varsigma must lie in (0, " + format_double(b.varsigma_max) + ")";
  if (b.theorem == Theorem::T7) {
    if (!(p.mu >= b.mu_min)) return "mu must be at least " + format_double(b.mu_min);
    if (!(p.s0 >= b.s0_min)) return "s0 must be at least " + format_double(b.s0_min);
  }
  return std::nullopt;
}

nlohmann::json ComparisonReport::to_json() const {
  nlohmann::json j;
  j["scenario"] = scenario;
  j["threshold"] = threshold;
  auto rs = nlohmann::json::array();
  for (const auto& r : rows) rs.push_back(row_json(r));
  j["rows"] = rs;
  j["baseline"] = baseline ? row_json(*baseline) : nlohmann::json(nullptr);
  return j;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trace_csv(const RunTrace& trace) {
  std::string out = "k,consensus_err,opt_gap,stationarity,lyapunov,bits\n";
  for (const auto& r : trace.records) {
    out += std::to_string(r.k);
    out += ',';
    out += format_double(r.consensus_err);
    out += ',';
    out += format_double(r.opt_gap);
    out += ',';
    out += format_double(r.stationarity);
    out += ',';
    out += format_double(r.lyapunov);
    out += ',';
    out += std::to_string(r.bits);
    out += '\n';
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const Scenario sc = build_scenario(cfg);

  // Resolve every cell before running anything so config errors leave no output behind.
  std::vector<ResolvedCell> cells;
  for (const auto& c : cfg.cells) cells.push_back(resolve_cell(cfg, sc, c));

  auto run_cell = [&](const ResolvedCell& rc) {
    CellResult res;
    res.name = rc.spec.name;
    res.algo = rc.spec.algo;
    res.compressor = rc.spec.algo == Algorithm::DGT ? "none" : rc.comp.label();
    res.params = rc.params;
    if (!rc.error.empty()) {
      res.error = rc.error;
      return res;
    }
    try {
      Simulator sim(rc.spec.algo, sc.network, rc.comp, rc.params, sc.suite, sc.X0, rc.seed);
      RunOptions opts;
      opts.f_star = sc.reference.f_star;
      opts.bits = cfg.bits;
      opts.broadcast = cfg.broadcast;
      opts.lyapunov = [&rc, &sc](const Simulator& s) {
        return lyapunov_eval(rc.lyap, s, sc.reference.f_star, rc.weights).total;
      };
      res.trace = run(sim, cfg.iters, opts);
      res.hit = bits_to_threshold(res.trace, cfg.threshold);
    } catch (const std::exception& e) {
      res.error = e.what();
    }
    return res;
  };

  std::vector<std::future<CellResult>> futures;
  for (const auto& rc : cells) futures.push_back(std::async(std::launch::async, run_cell, std::cref(rc)));
  ExperimentResult out;
  for (auto& f : futures) out.cells.push_back(f.get());

  out.report.scenario = cfg.scenario;
  out.report.threshold = cfg.threshold;
  for (const auto& c : out.cells) {
    ReportRow row = make_row(c);
    if (c.algo == Algorithm::DGT && !out.report.baseline) out.report.baseline = row;
    out.report.rows.push_back(row);
  }
  if (out.report.baseline && out.report.baseline->bits && *out.report.baseline->bits > 0) {
    const double base = static_cast<double>(*out.report.baseline->bits);
    for (auto& r : out.report.rows)
      if (r.bits) r.percent = 100.0 * static_cast<double>(*r.bits) / base;
    out.report.baseline->percent = 100.0;
  }

  out.resolved = cfg.to_json();
  out.resolved["scenario_info"] = {{"sigma", sc.network.sigma()},
                                   {"L", sc.L},
                                   {"nu", sc.nu ? nlohmann::json(*sc.nu) : nlohmann::json(nullptr)},
                                   {"f_star", sc.reference.f_star},
                                   {"f_star_grad_norm", sc.reference.grad_norm},
                                   {"f_star_certified", sc.reference.certified},
                                   {"network", sc.network.to_json()},
                                   {"cost", sc.suite.to_json()}};
  auto rcs = nlohmann::json::array();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& rc = cells[i];
    nlohmann::json j = {{"name", rc.spec.name},
                        {"algo", to_string(rc.spec.algo)},
                        {"compressor", rc.comp.to_json()},
                        {"params", rc.params.to_json()},
                        {"params_mode", rc.spec.params ? "explicit" : "certified"},
                        {"lyapunov", to_string(rc.lyap)},
                        {"seed", rc.seed},
                        {"bits_per_iteration", out.cells[i].trace.bits_per_iteration},
                        {"status", out.cells[i].error.empty()
                                       ? to_string(out.cells[i].trace.status)
                                       : "error: " + out.cells[i].error}};
    rcs.push_back(j);
  }
  out.resolved["resolved_cells"] = rcs;

  if (!cfg.output_dir.empty()) {
    const std::filesystem::path dir(cfg.output_dir);
    std::filesystem::create_directories(dir);
    for (const auto& c : out.cells)
      if (c.error.empty()) write_file(dir / (c.name + ".csv"), trace_csv(c.trace));
    write_file(dir / "report.json", out.report.to_json().dump(2) + "\n");
    write_file(dir / "config.resolved.json", out.resolved.dump(2) + "\n");
  }
  return out;
}

} // namespace cgt
