#include "cgt/compressors.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace cgt;

namespace {
Vec vec(std::initializer_list<double> v) {
  Vec x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double a : v) x(i++) = a;
  return x;
}
} // namespace

TEST_CASE("deterministic compressors follow their formulas") {
  Rng rng(1);
  CHECK(compress(CompressorSpec::norm_sign(3), vec({1, -2, 0.5}), rng) == vec({1, -1, 1}));
  CHECK(compress(CompressorSpec::norm_sign(2), vec({0, -4}), rng) == vec({2, -2}));
  CHECK(compress(CompressorSpec::uniform_quantize(2, 2.0), vec({0.9, -1.1}), rng) == vec({0, -2}));
  CHECK(compress(CompressorSpec::one_bit(3), vec({0.3, -0.2, 0}), rng) == vec({0.5, -0.5, 0.5}));
  CHECK(compress(CompressorSpec::top_k(4, 2), vec({0.1, -3, 2, 0.5}), rng) == vec({0, -3, 2, 0}));
  const Vec x = vec({1.5, -2.25, 3});
  CHECK(compress(CompressorSpec::identity(3), x, rng) == x);
}

TEST_CASE("identity constants") {
  const auto s = CompressorSpec::identity(7);
  CHECK(s.cap_c == 0.0);
  CHECK(s.r == 1.0);
  CHECK(s.psi == 1.0);
}

TEST_CASE("declared constants") {
  for (int d : {2, 10, 50}) {
    const auto s = CompressorSpec::norm_sign(d);
    CHECK(s.r == doctest::Approx(d / 2.0));
    CHECK(s.psi == doctest::Approx(1.0 / (d * d)));
    CHECK(s.cap_c == doctest::Approx(2 * s.r * s.r * (1 - s.psi) + 2 * (1 - s.r) * (1 - s.r)));
  }
  const auto u = CompressorSpec::uniform_quantize(50, 2.0);
  CHECK(u.cap_c == 1.0);
  CHECK(std::isinf(u.p_norm));
  const auto o = CompressorSpec::one_bit(50);
  CHECK(o.phi_c == 0.5);
  CHECK(relative_to_absolute_constant(1.0, 1.0) == 0.0);
}

TEST_CASE("bit costs") {
  BitCostModel m;
  CHECK(bit_cost(CompressorSpec::norm_sign(50), m, 50) == 164);
  CHECK(bit_cost(CompressorSpec::uniform_quantize(50, 2.0), m, 50) == 200);
  CHECK(bit_cost(CompressorSpec::one_bit(50), m, 50) == 50);
  CHECK(bit_cost(CompressorSpec::identity(50), m, 50) == 3200);
  m.bits_int = 8;
  CHECK(bit_cost(CompressorSpec::uniform_quantize(50, 2.0), m, 50) == 400);
  // keep_k values plus ceil(log2 d) index bits each
  CHECK(bit_cost(CompressorSpec::top_k(50, 5), BitCostModel{}, 50) == 5 * (64 + 6));
  BitCostModel bad;
  bad.bits_scalar = 0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("non-finite input is rejected") {
  Rng rng(2);
  Vec x = vec({1, std::numeric_limits<double>::quiet_NaN()});
  CHECK_THROWS_AS(compress(CompressorSpec::norm_sign(2), x, rng), ParameterError);
  x(1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(compress(CompressorSpec::one_bit(2), x, rng), ParameterError);
}

TEST_CASE("randomized compressors are unbiased") {
  Rng rng(derive_seed(3, 1));
  const Vec x = vec({1.0, -0.5, 0.25, 2.0, -1.5, 0.0});
  for (const auto& spec : {CompressorSpec::random_sparsify(6, 2), CompressorSpec::random_quantize(6, 3)}) {
    Vec mean = Vec::Zero(6);
    const int draws = 40000;
    for (int t = 0; t < draws; ++t) mean += compress(spec, x, rng);
    mean /= draws;
    CHECK((mean - x).norm() <= 0.05 * x.norm());
  }
}

TEST_CASE("verify_assumption accepts declared specs") {
  Rng rng(derive_seed(4, 1));
  for (const auto& s :
       {CompressorSpec::norm_sign(2), CompressorSpec::norm_sign(10), CompressorSpec::norm_sign(50),
        CompressorSpec::uniform_quantize(50, 2.0), CompressorSpec::one_bit(50),
        CompressorSpec::top_k(50, 5), CompressorSpec::identity(10)}) {
    const auto rep = verify_assumption(s, 1000, rng);
    CHECK_MESSAGE(rep.pass, s.label());
    CHECK(rep.violations == 0);
  }
  const auto rs = verify_assumption(CompressorSpec::random_sparsify(20, 4), 200, rng, 1000);
  CHECK(rs.pass);
}

TEST_CASE("verify_assumption rejects overstated constants") {
  Rng rng(derive_seed(5, 1));
  auto tight = CompressorSpec::uniform_quantize(10, 2.0);
  tight.cap_c = 0.1;
  const auto rep = verify_assumption(tight, 300, rng);
  CHECK_FALSE(rep.pass);
  CHECK(rep.offending.has_value());
  auto ob = CompressorSpec::one_bit(10);
  ob.phi_c = 0.9;
  CHECK_FALSE(verify_assumption(ob, 300, rng).pass);
  auto ns = CompressorSpec::from_json({{"kind", "norm_sign"}, {"r", 1.0}, {"psi", 0.9}}, 10);
  CHECK_FALSE(verify_assumption(ns, 300, rng).pass);
  CHECK_THROWS_AS(verify_assumption(CompressorSpec::one_bit(3), 10, rng), ParameterError);
}

TEST_CASE("json parsing and validation") {
  const auto s = CompressorSpec::from_json({{"kind", "uniform_quantize"}, {"delta", 0.5}}, 8);
  CHECK(s.delta == 0.5);
  CHECK(s.cap_c == doctest::Approx(0.0625));
  const auto back = CompressorSpec::from_json(s.to_json(), 8);
  CHECK(back.to_json() == s.to_json());
  CHECK_THROWS_AS(CompressorSpec::from_json({{"kind", "bogus"}}, 8), ParameterError);
  CHECK_THROWS_AS(CompressorSpec::from_json({{"kind", "top_k"}, {"keep_k", 9}}, 8), ParameterError);
  CHECK_THROWS_AS(CompressorSpec::from_json({{"kind", "uniform_quantize"}, {"delta", -1.0}}, 8),
                  ParameterError);
  CHECK_THROWS_AS(CompressorSpec::from_json({{"kind", "norm_sign"}, {"p_norm", 3.0}}, 8),
                  ParameterError);
}
