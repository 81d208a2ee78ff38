#pragma once

#include "cgt/algorithms.hpp"
#include "cgt/analysis.hpp"
#include "cgt/costs.hpp"
#include "cgt/graph.hpp"
#include "cgt/harness.hpp"

#include <cstdint>

namespace fixtures {

/// Small P-L problem: n = 10, d = 5, two rows per agent, one null direction.
struct PLProblem {
  cgt::Network net;
  cgt::CostSuite suite;
  double L;
  double nu;
  cgt::ReferenceSolution ref;
  cgt::Mat X0;
};

inline constexpr double kRefTol = 1e-9;

inline PLProblem pl_problem(std::uint64_t seed = 7, int n = 10, int d = 5) {
  auto net = cgt::generate_network(n, 0.4, cgt::derive_seed(seed, 1));
  auto suite = cgt::make_quadratic_suite(n, d, 2, cgt::derive_seed(seed, 2), 1, 1.0);
  const double L = suite.analytic_L();
  const double nu = *suite.pl_constant();
  auto ref = cgt::certified_reference(suite, kRefTol, seed);
  cgt::Rng rng(cgt::derive_seed(seed, 3));
  cgt::Mat X0(d, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) X0(k, i) = rng.normal();
  return {std::move(net), std::move(suite), L, nu, std::move(ref), std::move(X0)};
}

inline cgt::Mat mix_laplacian(const cgt::Mat& M, const cgt::Mat& W) {
  return M - M * W.transpose();
}

inline double max_norm(const cgt::Mat& M, double p) {
  double m = 0.0;
  for (int i = 0; i < M.cols(); ++i) m = std::max(m, cgt::p_norm(M.col(i), p));
  return m;
}

inline cgt::Mat initial_gradients(const cgt::CostSuite& suite, const cgt::Mat& X0) {
  cgt::Mat Y(X0.rows(), X0.cols());
  for (int i = 0; i < X0.cols(); ++i) Y.col(i) = suite.grad(i, X0.col(i));
  return Y;
}

} // namespace fixtures
