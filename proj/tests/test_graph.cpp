#include "cgt/graph.hpp"
#include "cgt/rng.hpp"

#include <doctest.h>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <queue>

using namespace cgt;

namespace {

using BoolMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Plain BFS from every node, independent of the library's check.
bool all_pairs_reachable(const BoolMat& adj) {
  const int n = static_cast<int>(adj.rows());
  for (int s = 0; s < n; ++s) {
    std::vector<bool> seen(n, false);
    std::queue<int> q;
    q.push(s);
    seen[s] = true;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int v = 0; v < n; ++v)
        if (adj(u, v) && !seen[v]) {
          seen[v] = true;
          q.push(v);
        }
    }
    for (bool b : seen)
      if (!b) return false;
  }
  return true;
}

double sigma_oracle(const Mat& W) {
  const int n = static_cast<int>(W.rows());
  const Mat M = W - Mat::Constant(n, n, 1.0 / n);
  Eigen::SelfAdjointEigenSolver<Mat> es(M.transpose() * M);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

Mat random_doubly_stochastic(int n, Rng& rng) {
  // Convex combination of permutation matrices.
  Mat W = Mat::Zero(n, n);
  double total = 0.0;
  for (int t = 0; t < 5; ++t) {
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    const double w = rng.uniform(0.1, 1.0);
    total += w;
    for (int i = 0; i < n; ++i) W(i, perm[i]) += w;
  }
  return W / total;
}

} // namespace

TEST_CASE("random network is strongly connected and doubly stochastic") {
  const auto net = generate_network(20, 0.3, 7);
  CHECK(all_pairs_reachable(net.adjacency()));
  const Mat& W = net.W();
  CHECK((W.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
  CHECK((W.colwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
  CHECK((W.array() >= 0.0).all());
  CHECK(net.sigma() > 0.0);
  CHECK(net.sigma() < 1.0);
  CHECK(net.sigma() == doctest::Approx(sigma_oracle(W)).epsilon(1e-8));
  // Weights live only on edges and the diagonal.
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j)
      if (i != j && W(j, i) > 0.0) CHECK(net.adjacency()(i, j));
}

TEST_CASE("same seed regenerates an identical network") {
  const auto a = generate_network(15, 0.25, 99);
  const auto b = generate_network(15, 0.25, 99);
  CHECK(a.adjacency() == b.adjacency());
  CHECK((a.W() - b.W()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.sigma() == b.sigma());
}

TEST_CASE("two complete nodes fall back to lazy weights") {
  const auto net = generate_network(2, 1.0, 3);
  CHECK(net.sigma() > 0.0);
  CHECK(net.sigma() < 1.0);
  // Metropolis gives the averaging matrix (sigma = 0); the lazy fallback gives (I + W)/2.
  CHECK(net.W()(0, 0) == doctest::Approx(0.75));
  CHECK(net.W()(0, 1) == doctest::Approx(0.25));
  CHECK(net.sigma() == doctest::Approx(0.5));
}

TEST_CASE("ring of five matches the circulant eigenvalue") {
  const auto net = generate_network(5, 0.3, 0, Topology::Ring);
  const double expected = std::abs(0.5 + 0.5 * std::cos(2.0 * std::numbers::pi / 5.0));
  CHECK(net.sigma() == doctest::Approx(expected).epsilon(1e-9));
  CHECK(sigma_oracle(net.W()) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("spectral gap on trivial and random matrices") {
  CHECK(spectral_gap(Mat::Constant(4, 4, 0.25)) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(spectral_gap(Mat::Identity(4, 4)) == doctest::Approx(1.0).epsilon(1e-9));
  Rng rng(derive_seed(1, 2));
  for (int t = 0; t < 5; ++t) {
    const Mat W = random_doubly_stochastic(6, rng);
    CHECK(spectral_gap(W) == doctest::Approx(sigma_oracle(W)).epsilon(1e-8));
  }
}

TEST_CASE("contraction factor arithmetic and consensus property") {
  CHECK(contraction_factor(0.3, 0.5) == doctest::Approx(0.85));
  CHECK(contraction_factor(1e-12, 0.5) == doctest::Approx(1.0));
  const auto net = generate_network(12, 0.3, 5);
  const int n = net.n();
  const double gamma = 0.4;
  const double delta = contraction_factor(gamma, net.sigma());
  const Mat T = Mat::Identity(n, n) + gamma * (net.W() - Mat::Identity(n, n));
  Rng rng(derive_seed(5, 1));
  for (int t = 0; t < 1000; ++t) {
    Vec w(n);
    for (int i = 0; i < n; ++i) w(i) = rng.normal();
    w.array() -= w.mean();
    CHECK((T * w).norm() <= delta * w.norm() + 1e-12);
  }
}

TEST_CASE("metropolis weights are symmetric and doubly stochastic") {
  BoolMat adj = BoolMat::Constant(4, 4, false);
  adj(0, 1) = adj(1, 2) = adj(2, 3) = adj(3, 0) = true;
  CHECK(strongly_connected(adj));
  const Mat W = metropolis_weights(adj);
  CHECK((W - W.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((W.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-15);
  BoolMat broken = BoolMat::Constant(3, 3, false);
  broken(0, 1) = broken(1, 0) = true;
  CHECK_FALSE(strongly_connected(broken));
}

TEST_CASE("constructor rejects invalid graphs") {
  BoolMat adj = BoolMat::Constant(3, 3, false);
  adj(0, 1) = adj(1, 0) = true;
  CHECK_THROWS_AS(Network(adj, Mat::Identity(3, 3)), ParameterError);
  BoolMat full = BoolMat::Constant(3, 3, true);
  Mat not_stochastic = Mat::Constant(3, 3, 0.5);
  CHECK_THROWS_AS(Network(full, not_stochastic), ParameterError);
  CHECK_THROWS_AS(generate_network(0, 0.3, 1), ParameterError);
  CHECK_THROWS_AS(generate_network(5, 1.5, 1), ParameterError);
}

TEST_CASE("network json round trip") {
  const auto net = generate_network(8, 0.4, 11);
  const auto back = Network::from_json(net.to_json());
  CHECK(back.adjacency() == net.adjacency());
  CHECK((back.W() - net.W()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.sigma() == doctest::Approx(net.sigma()).epsilon(1e-12));
  CHECK(net.edges().size() == static_cast<std::size_t>(net.adjacency().count() -
                                                       net.adjacency().diagonal().count()));
}
