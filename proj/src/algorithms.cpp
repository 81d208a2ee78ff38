#include "cgt/algorithms.hpp"

#include "cgt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cgt {

namespace {

enum Channel : std::uint64_t { kQX = 0, kQY = 1, kQHX = 2, kQHY = 3 };

constexpr long double kMinScaling = 1e-300L;

Vec AgentState::*state_member(Field f) {
  switch (f) {
  case Field::X: return &AgentState::x;
  case Field::Y: return &AgentState::y;
  case Field::Grad: return &AgentState::grad;
  case Field::A: return &AgentState::a;
  case Field::B: return &AgentState::b;
  case Field::C: return &AgentState::c;
  case Field::D: return &AgentState::dd;
  case Field::EX: return &AgentState::ex;
  case Field::EY: return &AgentState::ey;
  case Field::Xhat: return &AgentState::xhat;
  case Field::Yhat: return &AgentState::yhat;
  case Field::V: return &AgentState::v;
  case Field::Z: return &AgentState::z;
  default: return nullptr;
  }
}

Vec Outbox::*outbox_member(Field f) {
  switch (f) {
  case Field::QX: return &Outbox::qx;
  case Field::QY: return &Outbox::qy;
  case Field::QHX: return &Outbox::qhx;
  case Field::QHY: return &Outbox::qhy;
  default: return nullptr;
  }
}

const char* field_name(Field f) {
  static const char* names[] = {"x",  "y",  "grad", "a", "b", "c",  "d",  "ex", "ey",
                                "xhat", "yhat", "v", "z", "qx", "qy", "qhx", "qhy"};
  return names[static_cast<int>(f)];
}

} // namespace

std::string to_string(Algorithm algo) {
  switch (algo) {
  case Algorithm::CGT: return "alg1";
  case Algorithm::EFCGT: return "alg2";
  case Algorithm::Scaled: return "alg3";
  case Algorithm::DGT: return "dgt";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "alg1") return Algorithm::CGT;
  if (name == "alg2") return Algorithm::EFCGT;
  if (name == "alg3") return Algorithm::Scaled;
  if (name == "dgt") return Algorithm::DGT;
  throw ParameterError("unknown algorithm '" + name + "' (expected alg1, alg2, alg3 or dgt)");
}

std::string to_string(RunStatus s) {
  switch (s) {
  case RunStatus::Ok: return "ok";
  case RunStatus::Diverged: return "diverged";
  case RunStatus::ScalingExhausted: return "scaling exhausted";
  }
  return "?";
}

void AlgorithmParams::validate(Algorithm algo) const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ParameterError(std::string(name) + " must be positive");
  };
  positive(eta, "eta");
  positive(gamma, "gamma");
  if (!(gamma < 1.0)) throw ParameterError("gamma must lie in (0, 1)");
  if (algo == Algorithm::CGT || algo == Algorithm::EFCGT) {
    positive(phi_x, "phi_x");
    positive(phi_y, "phi_y");
  }
  if (algo == Algorithm::EFCGT && (!(varsigma >= 0.0) || !std::isfinite(varsigma)))
    throw ParameterError("varsigma must be nonnegative");
  if (algo == Algorithm::Scaled) {
    positive(s0, "s0");
    if (!(mu > 0.0 && mu < 1.0)) throw ParameterError("mu must lie in (0, 1)");
  }
}

AlgorithmParams AlgorithmParams::from_json(const nlohmann::json& j) {
  AlgorithmParams p;
  p.eta = j.at("eta").get<double>();
  p.gamma = j.at("gamma").get<double>();
  p.phi_x = j.value("phi_x", p.phi_x);
  p.phi_y = j.value("phi_y", p.phi_y);
  p.varsigma = j.value("varsigma", p.varsigma);
  p.s0 = j.value("s0", p.s0);
  p.mu = j.value("mu", p.mu);
  return p;
}

nlohmann::json AlgorithmParams::to_json() const {
  return {{"eta", eta},         {"gamma", gamma}, {"phi_x", phi_x}, {"phi_y", phi_y},
          {"varsigma", varsigma}, {"s0", s0},     {"mu", mu}};
}

Simulator::Simulator(Algorithm algo, const Network& net, const CompressorSpec& comp,
                     const AlgorithmParams& params, const CostSuite& suite, const Mat& X0,
                     std::uint64_t seed, SimulatorOptions options)
    : algo_(algo), net_(&net), comp_(comp), params_(params), suite_(&suite), seed_(seed),
      options_(options), n_(net.n()), d_(suite.d()) {
  params_.validate(algo_);
  if (suite.n() != n_) throw ParameterError("cost suite and network disagree on n");
  if (X0.rows() != d_ || X0.cols() != n_) throw ParameterError("X0 must be d x n");
  if (!X0.allFinite()) throw ParameterError("X0 has non-finite entries");
  if (algo_ != Algorithm::DGT) {
    comp_.validate();
    if (comp_.dim != d_) throw ParameterError("compressor dimension does not match d");
  }
  order_.resize(static_cast<std::size_t>(n_));
  std::iota(order_.begin(), order_.end(), 0);
  init(X0);
}

void Simulator::ensure_scaling(int k) {
  while (static_cast<int>(scaling_.size()) <= k) {
    const auto idx = static_cast<long double>(scaling_.size());
    const long double s = static_cast<long double>(params_.s0) *
                          std::pow(static_cast<long double>(params_.mu), idx);
    if (!(s >= kMinScaling))
      throw ScalingExhausted("scaling exhausted: s(" + std::to_string(scaling_.size()) +
                             ") fell below 1e-300");
    scaling_.push_back(s);
  }
}

long double Simulator::scaling(int k) const {
  if (algo_ != Algorithm::Scaled) throw ParameterError("scaling is defined for alg3 only");
  if (k < 0 || k >= static_cast<int>(scaling_.size()))
    throw ParameterError("scaling index out of the computed range");
  return scaling_[static_cast<std::size_t>(k)];
}

Vec Simulator::compress_msg(const Vec& u, int agent, int channel) {
  static const char* names[] = {"qx", "qy", "qhx", "qhy"};
  if (!u.allFinite()) diverged(agent, names[channel]);
  // k_ + 1 is the index of the message being produced; init uses k_ = -1.
  Rng rng(derive_seed(seed_, static_cast<std::uint64_t>(agent),
                      static_cast<std::uint64_t>(k_ + 1), static_cast<std::uint64_t>(channel)));
  return compress(comp_, u, rng);
}

Vec Simulator::mix(const std::vector<Outbox>& box, Vec Outbox::*field, int i) const {
  const Mat& W = net_->W();
  Vec acc = Vec::Zero(d_);
  for (int j = 0; j < n_; ++j)
    if (W(i, j) != 0.0) acc.noalias() += W(i, j) * (box[static_cast<std::size_t>(j)].*field);
  return acc;
}

namespace {

// Error-free transforms for double-double arithmetic.
struct DD {
  double hi, lo;
};

DD two_sum(double a, double b) {
  const double s = a + b;
  const double bb = s - a;
  return {s, (a - (s - bb)) + (b - bb)};
}

DD quick_two_sum(double a, double b) {
  const double s = a + b;
  return {s, b - (s - a)};
}

DD add(DD x, DD y) {
  DD s = two_sum(x.hi, y.hi);
  return quick_two_sum(s.hi, s.lo + x.lo + y.lo);
}

DD mul(DD x, double c) {
  const double p = x.hi * c;
  return quick_two_sum(p, std::fma(x.hi, c, -p) + x.lo * c);
}

} // namespace

void Simulator::accumulate(Wide& sum, const Vec& q, Vec Outbox::*field, int i, double w0,
                           double w1, bool laplacian) const {
  // sum += (w0 + w1) * inc with inc = q or q - sum_j W_ij q_j, all in double-double.
  const Mat& W = net_->W();
  for (int r = 0; r < d_; ++r) {
    DD inc{q(r), 0.0};
    if (laplacian)
      for (int j = 0; j < n_; ++j) {
        const double wij = W(i, j);
        if (wij == 0.0) continue;
        const double qj = (outboxes_[static_cast<std::size_t>(j)].*field)(r);
        const double p = -wij * qj;
        inc = add(inc, DD{p, std::fma(-wij, qj, -p)});
      }
    const DD scaled = add(mul(inc, w0), mul(inc, w1));
    const DD total = add(DD{sum.hi(r), sum.lo(r)}, scaled);
    sum.hi(r) = total.hi;
    sum.lo(r) = total.lo;
  }
}

void Simulator::init(const Mat& X0) {
  const Vec zero = Vec::Zero(d_);
  states_.assign(static_cast<std::size_t>(n_), AgentState{});
  outboxes_.assign(static_cast<std::size_t>(n_), Outbox{});
  const Wide zero_wide{zero, zero};
  sums_.assign(static_cast<std::size_t>(n_), Sums{zero_wide, zero_wide, zero_wide, zero_wide,
                                                  zero_wide, zero_wide, zero_wide, zero_wide});
  if (algo_ == Algorithm::Scaled) ensure_scaling(0);
  k_ = -1;
  const double p = comp_.p_norm;
  const double s0 = algo_ == Algorithm::Scaled ? static_cast<double>(scaling_[0]) : 1.0;
  induction_ratio_ = 0.0;
  compression_error_ = 0.0;
  for (int i = 0; i < n_; ++i) {
    auto& s = states_[static_cast<std::size_t>(i)];
    auto& o = outboxes_[static_cast<std::size_t>(i)];
    s.x = X0.col(i);
    s.grad = suite_->grad(i, s.x);
    s.y = s.grad;
    s.a = s.b = s.c = s.dd = s.ex = s.ey = zero;
    s.xhat = s.yhat = s.v = s.z = zero;
    o.qhx = o.qhy = zero;
    switch (algo_) {
    case Algorithm::CGT:
      o.qx = compress_msg(s.x, i, kQX);
      o.qy = compress_msg(s.y, i, kQY);
      break;
    case Algorithm::EFCGT:
      o.qx = o.qhx = compress_msg(s.x, i, kQX);
      o.qy = o.qhy = compress_msg(s.y, i, kQY);
      break;
    case Algorithm::Scaled: {
      const Vec ux = s.x / s0;
      const Vec uy = s.y / s0;
      o.qx = compress_msg(ux, i, kQX);
      o.qy = compress_msg(uy, i, kQY);
      induction_ratio_ = std::max({induction_ratio_, p_norm(ux, p), p_norm(uy, p)});
      compression_error_ = std::max(
          {compression_error_, s0 * p_norm(o.qx - ux, p), s0 * p_norm(o.qy - uy, p)});
      break;
    }
    case Algorithm::DGT:
      o.qx = s.x;
      o.qy = s.y;
      break;
    }
  }
  k_ = 0;
  check_finite(states_, outboxes_);
}

void Simulator::check_finite(const std::vector<AgentState>& next,
                             const std::vector<Outbox>& box) const {
  static const Field state_fields[] = {Field::X,  Field::Y,  Field::Grad, Field::A,    Field::B,
                                       Field::C,  Field::D,  Field::EX,   Field::EY,   Field::Xhat,
                                       Field::Yhat, Field::V, Field::Z};
  static const Field box_fields[] = {Field::QX, Field::QY, Field::QHX, Field::QHY};
  for (int i = 0; i < n_; ++i) {
    const auto& s = next[static_cast<std::size_t>(i)];
    const auto& o = box[static_cast<std::size_t>(i)];
    const char* bad = nullptr;
    for (Field f : state_fields)
      if (!(s.*state_member(f)).allFinite()) {
        bad = field_name(f);
        break;
      }
    if (!bad)
      for (Field f : box_fields)
        if (!(o.*outbox_member(f)).allFinite()) {
          bad = field_name(f);
          break;
        }
    if (bad) diverged(i, bad);
  }
}

void Simulator::diverged(int agent, const char* field) const {
  nlohmann::json snap;
  snap["k"] = k_ + 1;
  snap["agent"] = agent;
  snap["field"] = field;
  snap["algorithm"] = to_string(algo_);
  snap["params"] = params_.to_json();
  auto norms = nlohmann::json::array();
  for (const auto& st : states_) norms.push_back({{"x", st.x.norm()}, {"y", st.y.norm()}});
  snap["last_finite_norms"] = norms;
  throw DivergenceError("non-finite " + std::string(field) + " at agent " + std::to_string(agent) +
                            ", iteration " + std::to_string(k_ + 1),
                        std::move(snap));
}

Vec Simulator::grad_at(int i, const Vec& x) const {
  if (!x.allFinite()) diverged(i, "x");
  return suite_->grad(i, x);
}

void Simulator::step() {
  if (algo_ == Algorithm::Scaled) ensure_scaling(k_ + 1);
  if (options_.shuffle_order) {
    Rng rng(derive_seed(seed_, 0x5u, static_cast<std::uint64_t>(k_)));
    for (int i = n_ - 1; i > 0; --i)
      std::swap(order_[static_cast<std::size_t>(i)],
                order_[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i) + 1))]);
  }

  const double eta = params_.eta;
  const double gamma = params_.gamma;
  const double p = comp_.p_norm;
  std::vector<AgentState> next(static_cast<std::size_t>(n_));
  std::vector<Outbox> box(static_cast<std::size_t>(n_));
  std::vector<double> ratio(static_cast<std::size_t>(n_), 0.0);
  std::vector<double> err(static_cast<std::size_t>(n_), 0.0);
  std::vector<Sums> next_sums = sums_;

  // Read phase: everything on the right-hand side is iteration-k data.
  for (int i : order_) {
    const auto& s = states_[static_cast<std::size_t>(i)];
    const auto& mine = outboxes_[static_cast<std::size_t>(i)];
    auto& t = next[static_cast<std::size_t>(i)];
    auto& o = box[static_cast<std::size_t>(i)];
    t = s;
    o.qhx = o.qhy = Vec::Zero(d_);

    switch (algo_) {
    case Algorithm::CGT:
    case Algorithm::EFCGT: {
      auto& sum = next_sums[static_cast<std::size_t>(i)];
      accumulate(sum.a, mine.qx, &Outbox::qx, i, params_.phi_x, 0.0, false);
      accumulate(sum.b, mine.qx, &Outbox::qx, i, params_.phi_x, 0.0, true);
      accumulate(sum.c, mine.qy, &Outbox::qy, i, params_.phi_y, 0.0, false);
      accumulate(sum.dd, mine.qy, &Outbox::qy, i, params_.phi_y, 0.0, true);
      t.a = sum.a.hi;
      t.b = sum.b.hi;
      t.c = sum.c.hi;
      t.dd = sum.dd.hi;
      Vec ux = mine.qx - mix(outboxes_, &Outbox::qx, i);
      Vec uy = mine.qy - mix(outboxes_, &Outbox::qy, i);
      if (algo_ == Algorithm::EFCGT) {
        ux = mine.qhx - mix(outboxes_, &Outbox::qhx, i);
        uy = mine.qhy - mix(outboxes_, &Outbox::qhy, i);
      }
      t.x = s.x - gamma * (s.b + ux) - eta * s.y;
      t.grad = grad_at(i, t.x);
      t.y = s.y - gamma * (s.dd + uy) + t.grad - s.grad;
      o.qx = compress_msg(t.x - t.a, i, kQX);
      o.qy = compress_msg(t.y - t.c, i, kQY);
      if (algo_ == Algorithm::EFCGT) {
        const double vs = params_.varsigma;
        t.ex = vs * s.ex + s.x - s.a - mine.qhx;
        t.ey = vs * s.ey + s.y - s.c - mine.qhy;
        o.qhx = compress_msg(vs * t.ex + t.x - t.a, i, kQHX);
        o.qhy = compress_msg(vs * t.ey + t.y - t.c, i, kQHY);
      }
      break;
    }
    case Algorithm::Scaled: {
      // s(k) split into two doubles so the running sums see it to full precision.
      const long double skl = scaling_[static_cast<std::size_t>(k_)];
      const double sk_hi = static_cast<double>(skl);
      const double sk_lo = static_cast<double>(skl - static_cast<long double>(sk_hi));
      const double sk1 = static_cast<double>(scaling_[static_cast<std::size_t>(k_ + 1)]);
      auto& sum = next_sums[static_cast<std::size_t>(i)];
      accumulate(sum.xhat, mine.qx, &Outbox::qx, i, sk_hi, sk_lo, false);
      accumulate(sum.v, mine.qx, &Outbox::qx, i, sk_hi, sk_lo, true);
      accumulate(sum.yhat, mine.qy, &Outbox::qy, i, sk_hi, sk_lo, false);
      accumulate(sum.z, mine.qy, &Outbox::qy, i, sk_hi, sk_lo, true);
      t.xhat = sum.xhat.hi;
      t.v = sum.v.hi;
      t.yhat = sum.yhat.hi;
      t.z = sum.z.hi;
      t.x = s.x - gamma * t.v - eta * s.y;
      t.grad = grad_at(i, t.x);
      t.y = s.y - gamma * t.z + t.grad - s.grad;
      const Vec ux = (t.x - t.xhat) / sk1;
      const Vec uy = (t.y - t.yhat) / sk1;
      o.qx = compress_msg(ux, i, kQX);
      o.qy = compress_msg(uy, i, kQY);
      ratio[static_cast<std::size_t>(i)] = std::max(p_norm(ux, p), p_norm(uy, p));
      err[static_cast<std::size_t>(i)] =
          sk1 * std::max(p_norm(o.qx - ux, p), p_norm(o.qy - uy, p));
      break;
    }
    case Algorithm::DGT: {
      t.x = s.x - gamma * (s.x - mix(outboxes_, &Outbox::qx, i)) - eta * s.y;
      t.grad = grad_at(i, t.x);
      t.y = s.y - gamma * (s.y - mix(outboxes_, &Outbox::qy, i)) + t.grad - s.grad;
      o.qx = t.x;
      o.qy = t.y;
      break;
    }
    }
  }

  // Write phase.
  check_finite(next, box);
  states_ = std::move(next);
  outboxes_ = std::move(box);
  sums_ = std::move(next_sums);
  if (algo_ == Algorithm::Scaled) {
    induction_ratio_ = *std::max_element(ratio.begin(), ratio.end());
    compression_error_ = *std::max_element(err.begin(), err.end());
  }
  ++k_;
}

Mat Simulator::stacked(Field f) const {
  Mat out(d_, n_);
  if (auto m = state_member(f)) {
    for (int i = 0; i < n_; ++i) out.col(i) = states_[static_cast<std::size_t>(i)].*m;
  } else {
    auto b = outbox_member(f);
    for (int i = 0; i < n_; ++i) out.col(i) = outboxes_[static_cast<std::size_t>(i)].*b;
  }
  return out;
}

std::uint64_t Simulator::bits_per_iteration(const BitCostModel& model, bool broadcast) const {
  model.validate();
  const std::uint64_t per_msg = algo_ == Algorithm::DGT
                                    ? static_cast<std::uint64_t>(d_) *
                                          static_cast<std::uint64_t>(model.bits_scalar)
                                    : bit_cost(comp_, model, d_);
  std::uint64_t senders = 0;
  if (broadcast) {
    senders = static_cast<std::uint64_t>(n_);
  } else {
    for (int i = 0; i < n_; ++i) senders += static_cast<std::uint64_t>(net_->out_degree(i));
  }
  return senders * static_cast<std::uint64_t>(messages_per_agent()) * per_msg;
}

double consensus_error(const Mat& X) {
  const Vec xbar = X.rowwise().mean();
  return (X.colwise() - xbar).squaredNorm();
}

TraceRecord measure(const Simulator& sim, double f_star, double lyapunov, std::uint64_t bits) {
  const Mat X = sim.stacked(Field::X);
  const Vec xbar = X.rowwise().mean();
  const double n = sim.n();
  TraceRecord r;
  r.k = sim.k();
  r.consensus_err = (X.colwise() - xbar).squaredNorm();
  r.opt_gap = n * (sim.suite().global_value(xbar) - f_star);
  r.stationarity = n * sim.suite().global_grad(xbar).squaredNorm();
  r.lyapunov = lyapunov;
  r.bits = bits;
  return r;
}

RunTrace run(Simulator& sim, int iters, const RunOptions& opts) {
  if (iters < 1) throw ParameterError("iters must be at least 1");
  RunTrace trace;
  trace.bits_per_iteration = sim.bits_per_iteration(opts.bits, opts.broadcast);
  trace.records.reserve(static_cast<std::size_t>(iters) + 1);
  auto record = [&] {
    const double lyap = opts.lyapunov ? opts.lyapunov(sim) : 0.0;
    trace.records.push_back(measure(sim, opts.f_star, lyap,
                                    static_cast<std::uint64_t>(sim.k()) * trace.bits_per_iteration));
    if (opts.observer) opts.observer(sim);
  };
  record();
  for (int it = 0; it < iters; ++it) {
    try {
      sim.step();
    } catch (const DivergenceError& e) {
      trace.status = RunStatus::Diverged;
      trace.message = e.what();
      trace.snapshot = e.snapshot();
      break;
    } catch (const ScalingExhausted& e) {
      trace.status = RunStatus::ScalingExhausted;
      trace.message = e.what();
      break;
    }
    record();
  }
  return trace;
}

} // namespace cgt
