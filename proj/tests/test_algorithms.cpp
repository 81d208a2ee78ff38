#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>

using namespace cgt;

namespace {

const fixtures::PLProblem& problem() {
  static const auto p = fixtures::pl_problem();
  return p;
}

Network single_agent() {
  return Network(Eigen::Matrix<bool, 1, 1>::Constant(false), Mat::Ones(1, 1));
}

AlgorithmParams practical(Algorithm a) {
  AlgorithmParams p;
  p.eta = 0.2;
  p.gamma = 0.3;
  p.phi_x = p.phi_y = 0.3;
  p.varsigma = 0.3;
  p.s0 = 5.0;
  p.mu = 0.97;
  if (a == Algorithm::CGT || a == Algorithm::EFCGT) p.eta = 0.2;
  return p;
}

CompressorSpec natural_compressor(Algorithm a, int d) {
  switch (a) {
  case Algorithm::Scaled: return CompressorSpec::uniform_quantize(d, 2.0);
  case Algorithm::DGT: return CompressorSpec::identity(d);
  default: return CompressorSpec::norm_sign(d);
  }
}

const Algorithm kAll[] = {Algorithm::CGT, Algorithm::EFCGT, Algorithm::Scaled, Algorithm::DGT};

} // namespace

TEST_CASE("one agent reduces to centralized gradient descent") {
  const auto suite = make_quadratic_suite(1, 4, 3, 21, 0, 1.0);
  const auto net = single_agent();
  Mat X0(4, 1);
  X0 << 1.0, -2.0, 0.5, 3.0;
  for (Algorithm a : kAll) {
    auto p = practical(a);
    Simulator sim(a, net, natural_compressor(a, 4), p, suite, X0, 1);
    Vec x = X0.col(0);
    for (int k = 0; k < 50; ++k) {
      sim.step();
      x = x - p.eta * suite.grad(0, x);
      CHECK((sim.stacked(Field::X).col(0) - x).norm() <= 1e-12 * std::max(1.0, x.norm()));
    }
  }
}

TEST_CASE("zero gradients and consensus start give a fixed point") {
  const int n = 6, d = 3;
  std::vector<LogisticTerm> terms(n, LogisticTerm{0.0, 0.0, 0.0, Vec::Ones(d)});
  const auto suite = CostSuite::logistic(terms);
  const auto net = generate_network(n, 0.5, 2);
  Mat X0(d, n);
  X0.colwise() = Vec::LinSpaced(d, -1.0, 1.0);
  for (Algorithm a : kAll) {
    Simulator sim(a, net, natural_compressor(a, d), practical(a), suite, X0, 2);
    for (int k = 0; k < 30; ++k) sim.step();
    CHECK((sim.stacked(Field::X) - X0).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(sim.stacked(Field::Y).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("identity compressor reproduces the uncompressed baseline") {
  const auto& P = problem();
  const int d = P.suite.d();
  AlgorithmParams base{0.2, 0.3};
  Simulator ref(Algorithm::DGT, P.net, CompressorSpec::identity(d), base, P.suite, P.X0, 3);
  std::vector<Simulator> sims;
  for (Algorithm a : {Algorithm::CGT, Algorithm::EFCGT, Algorithm::Scaled}) {
    AlgorithmParams p = base;
    p.varsigma = 0.4;
    p.s0 = 3.0;
    p.mu = 0.9;
    sims.emplace_back(a, P.net, CompressorSpec::identity(d), p, P.suite, P.X0, 3);
  }
  for (int k = 0; k < 100; ++k) {
    ref.step();
    for (auto& s : sims) {
      s.step();
      CHECK((s.stacked(Field::X) - ref.stacked(Field::X)).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK((s.stacked(Field::Y) - ref.stacked(Field::Y)).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("error feedback with zero decay and exact messages equals the plain algorithm") {
  const auto& P = problem();
  const int d = P.suite.d();
  AlgorithmParams p{0.2, 0.3, 0.5, 0.5, 0.0};
  Simulator a1(Algorithm::CGT, P.net, CompressorSpec::identity(d), p, P.suite, P.X0, 4);
  Simulator a2(Algorithm::EFCGT, P.net, CompressorSpec::identity(d), p, P.suite, P.X0, 4);
  for (int k = 0; k < 100; ++k) {
    a1.step();
    a2.step();
    CHECK((a1.stacked(Field::X) - a2.stacked(Field::X)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(a2.stacked(Field::EX).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("mean recursions and structural identities") {
  const auto& P = problem();
  const int d = P.suite.d();
  const Mat& W = P.net.W();
  for (Algorithm a : kAll) {
    const auto p = practical(a);
    Simulator sim(a, P.net, natural_compressor(a, d), p, P.suite, P.X0, 5);
    for (int k = 0; k < 200; ++k) {
      const Vec xbar = sim.stacked(Field::X).rowwise().mean();
      const Vec ybar = sim.stacked(Field::Y).rowwise().mean();
      const Vec gbar = sim.stacked(Field::Grad).rowwise().mean();
      CHECK((ybar - gbar).norm() <= 1e-10 * (1 + gbar.norm()));
      sim.step();
      CHECK((sim.stacked(Field::X).rowwise().mean() - (xbar - p.eta * ybar)).norm() <= 1e-10);
      auto residual = [&](Field lhs, Field op) {
        const Mat M = sim.stacked(op);
        return (sim.stacked(lhs) - fixtures::mix_laplacian(M, W)).norm() /
               std::max(M.norm(), 1e-300);
      };
      if (a == Algorithm::CGT || a == Algorithm::EFCGT) {
        CHECK(residual(Field::B, Field::A) <= 1e-12);
        CHECK(residual(Field::D, Field::C) <= 1e-12);
      } else if (a == Algorithm::Scaled) {
        CHECK(residual(Field::V, Field::Xhat) <= 1e-12);
        CHECK(residual(Field::Z, Field::Yhat) <= 1e-12);
      }
    }
  }
}

TEST_CASE("agent visiting order does not change the result") {
  const auto& P = problem();
  for (Algorithm a : kAll) {
    Simulator plain(a, P.net, natural_compressor(a, P.suite.d()), practical(a), P.suite, P.X0, 6);
    Simulator shuffled(a, P.net, natural_compressor(a, P.suite.d()), practical(a), P.suite, P.X0,
                       6, SimulatorOptions{true});
    for (int k = 0; k < 50; ++k) {
      plain.step();
      shuffled.step();
    }
    CHECK(plain.stacked(Field::X) == shuffled.stacked(Field::X));
    CHECK(plain.stacked(Field::Y) == shuffled.stacked(Field::Y));
  }
}

TEST_CASE("randomized compressors are reproducible from the seed") {
  const auto& P = problem();
  const auto comp = CompressorSpec::random_sparsify(P.suite.d(), 2);
  AlgorithmParams p{0.05, 0.2, 0.2, 0.2};
  Simulator a(Algorithm::CGT, P.net, comp, p, P.suite, P.X0, 7);
  Simulator b(Algorithm::CGT, P.net, comp, p, P.suite, P.X0, 7);
  Simulator c(Algorithm::CGT, P.net, comp, p, P.suite, P.X0, 8);
  for (int k = 0; k < 40; ++k) {
    a.step();
    b.step();
    c.step();
  }
  CHECK(a.stacked(Field::X) == b.stacked(Field::X));
  CHECK(a.stacked(Field::X) != c.stacked(Field::X));
}

TEST_CASE("bit accounting") {
  const auto& P = problem();
  const int n = P.suite.n(), d = P.suite.d();
  BitCostModel m;
  for (Algorithm a : kAll) {
    const auto comp = natural_compressor(a, d);
    Simulator sim(a, P.net, comp, practical(a), P.suite, P.X0, 9);
    const std::uint64_t per_msg = a == Algorithm::DGT ? std::uint64_t(d) * 64 : bit_cost(comp, m, d);
    const std::uint64_t msgs = a == Algorithm::EFCGT ? 4 : 2;
    CHECK(sim.bits_per_iteration(m, true) == std::uint64_t(n) * msgs * per_msg);
    std::uint64_t edges = 0;
    for (int i = 0; i < n; ++i) edges += std::uint64_t(P.net.out_degree(i));
    CHECK(edges == P.net.edges().size());
    CHECK(sim.bits_per_iteration(m, false) == edges * msgs * per_msg);
    RunOptions opts;
    const auto trace = run(sim, 25, opts);
    for (const auto& r : trace.records)
      CHECK(r.bits == std::uint64_t(r.k) * std::uint64_t(n) * msgs * per_msg);
  }
}

TEST_CASE("run records every iteration and rejects empty runs") {
  const auto& P = problem();
  Simulator sim(Algorithm::DGT, P.net, CompressorSpec::identity(P.suite.d()), {0.2, 0.3}, P.suite,
                P.X0, 10);
  CHECK_THROWS_AS(run(sim, 0, {}), ParameterError);
  int calls = 0;
  RunOptions opts;
  opts.observer = [&](const Simulator&) { ++calls; };
  const auto trace = run(sim, 30, opts);
  REQUIRE(trace.records.size() == 31);
  for (int k = 0; k <= 30; ++k) CHECK(trace.records[k].k == k);
  CHECK(calls == 31);
  CHECK(trace.status == RunStatus::Ok);
}

TEST_CASE("divergence is reported with a snapshot") {
  const auto& P = problem();
  Simulator sim(Algorithm::DGT, P.net, CompressorSpec::identity(P.suite.d()), {100.0, 0.3},
                P.suite, P.X0, 11);
  const auto trace = run(sim, 2000, {});
  CHECK(trace.status == RunStatus::Diverged);
  CHECK(trace.records.size() < 2001);
  CHECK(trace.snapshot.contains("agent"));
  CHECK(trace.snapshot.contains("field"));
  CHECK(trace.snapshot.at("k").get<int>() == static_cast<int>(trace.records.size()));
  // The simulator keeps the last finite state.
  CHECK(sim.stacked(Field::X).allFinite());
}

TEST_CASE("scaling exhaustion is reported") {
  const auto& P = problem();
  AlgorithmParams p{0.1, 0.3, 1, 1, 0, 1.0, 1e-100};
  Simulator sim(Algorithm::Scaled, P.net, CompressorSpec::one_bit(P.suite.d()), p, P.suite, P.X0,
                12);
  const auto trace = run(sim, 10, {});
  CHECK(trace.status == RunStatus::ScalingExhausted);
  CHECK(trace.records.size() <= 4);
}

TEST_CASE("uniform quantizer error shrinks with the scaling") {
  const auto& P = problem();
  const double delta = 2.0;
  AlgorithmParams p{0.2, 0.3, 1, 1, 0, 5.0, 0.95};
  Simulator sim(Algorithm::Scaled, P.net, CompressorSpec::uniform_quantize(P.suite.d(), delta), p,
                P.suite, P.X0, 13);
  CHECK(sim.compression_error() <= delta / 2 * static_cast<double>(sim.scaling(0)) * (1 + 1e-12));
  for (int k = 0; k < 300; ++k) {
    sim.step();
    const double s = static_cast<double>(sim.scaling(sim.k()));
    CHECK(sim.compression_error() <= delta / 2 * s * (1 + 1e-12));
  }
  CHECK(static_cast<double>(sim.scaling(300)) == doctest::Approx(5.0 * std::pow(0.95, 300)));
}

TEST_CASE("parameter validation") {
  const auto& P = problem();
  const int d = P.suite.d();
  auto make = [&](Algorithm a, AlgorithmParams p, CompressorSpec c) {
    Simulator sim(a, P.net, c, p, P.suite, P.X0, 1);
  };
  CHECK_THROWS_AS(make(Algorithm::DGT, {0.1, 1.0}, CompressorSpec::identity(d)), ParameterError);
  CHECK_THROWS_AS(make(Algorithm::DGT, {-0.1, 0.5}, CompressorSpec::identity(d)), ParameterError);
  CHECK_THROWS_AS(make(Algorithm::Scaled, {0.1, 0.5, 1, 1, 0, 1.0, 1.0}, CompressorSpec::one_bit(d)),
                  ParameterError);
  CHECK_THROWS_AS(make(Algorithm::EFCGT, {0.1, 0.5, 0.5, 0.5, -1.0}, CompressorSpec::norm_sign(d)),
                  ParameterError);
  CHECK_THROWS_AS(make(Algorithm::CGT, {0.1, 0.5}, CompressorSpec::norm_sign(d + 1)), ParameterError);
  CHECK_THROWS_AS(Simulator(Algorithm::DGT, P.net, CompressorSpec::identity(d), {0.1, 0.5}, P.suite,
                            Mat::Zero(d, P.suite.n() + 1), 1),
                  ParameterError);
  CHECK(algorithm_from_string(to_string(Algorithm::EFCGT)) == Algorithm::EFCGT);
  CHECK_THROWS_AS(algorithm_from_string("alg9"), ParameterError);
  const auto p = practical(Algorithm::Scaled);
  const auto back = AlgorithmParams::from_json(p.to_json());
  CHECK(back.to_json() == p.to_json());
}

TEST_CASE("consensus error converges on the P-L problem") {
  const auto& P = problem();
  for (Algorithm a : kAll) {
    Simulator sim(a, P.net, natural_compressor(a, P.suite.d()), practical(a), P.suite, P.X0, 14);
    RunOptions opts;
    opts.f_star = P.ref.f_star;
    const auto trace = run(sim, 600, opts);
    CHECK(trace.status == RunStatus::Ok);
    CHECK(trace.records.back().consensus_err <= 1e-10);
    CHECK(trace.records.back().opt_gap <= 1e-10);
  }
}
