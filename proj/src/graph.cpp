#include "cgt/graph.hpp"

#include "cgt/rng.hpp"

#include <cmath>
#include <queue>
#include <sstream>

namespace cgt {

using BoolMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

namespace {

constexpr double kStochasticTol = 1e-12;
constexpr int kMaxAttempts = 100;

std::vector<bool> reachable(const BoolMat& adj, bool reverse) {
  const int n = static_cast<int>(adj.rows());
  std::vector<bool> seen(n, false);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = true;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int v = 0; v < n; ++v) {
      const bool edge = reverse ? adj(v, u) : adj(u, v);
      if (edge && !seen[v]) {
        seen[v] = true;
        frontier.push(v);
      }
    }
  }
  return seen;
}

void check_doubly_stochastic(const Mat& W) {
  if (W.rows() != W.cols() || W.rows() < 1)
    throw ParameterError("weight matrix must be square and nonempty");
  if ((W.array() < 0.0).any()) throw ParameterError("weight matrix has negative entries");
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    if (std::abs(W.row(i).sum() - 1.0) > kStochasticTol)
      throw ParameterError("weight matrix row " + std::to_string(i) + " does not sum to 1");
    if (std::abs(W.col(i).sum() - 1.0) > kStochasticTol)
      throw ParameterError("weight matrix column " + std::to_string(i) + " does not sum to 1");
  }
}

Mat lazy(const Mat& W) {
  return 0.5 * (Mat::Identity(W.rows(), W.cols()) + W);
}

bool sigma_in_open_unit(double s) { return s > 1e-12 && s < 1.0 - 1e-12; }

} // namespace

bool strongly_connected(const BoolMat& adjacency) {
  if (adjacency.rows() == 0) return false;
  for (bool b : reachable(adjacency, false))
    if (!b) return false;
  for (bool b : reachable(adjacency, true))
    if (!b) return false;
  return true;
}

Mat metropolis_weights(const BoolMat& adjacency) {
  const Eigen::Index n = adjacency.rows();
  BoolMat sym = adjacency.array() || adjacency.transpose().array();
  std::vector<int> degree(n, 0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j && sym(i, j)) ++degree[i];
  Mat W = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double off = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j || !sym(i, j)) continue;
      W(i, j) = 1.0 / (1.0 + std::max(degree[i], degree[j]));
      off += W(i, j);
    }
    W(i, i) = 1.0 - off;
  }
  return W;
}

double spectral_gap(const Mat& W, double rel_tol, int max_iters) {
  const Eigen::Index n = W.rows();
  const Mat D = W - Mat::Constant(n, n, 1.0 / static_cast<double>(n));
  const Mat M = D.transpose() * D;

  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i)
    v(i) = 1.0 + 0.5 * std::sin(1.7 * static_cast<double>(i) + 0.3) + 0.01 * static_cast<double>(i);
  v.array() -= v.mean();
  if (v.norm() == 0.0) v.setUnit(0);
  v.normalize();

  double lambda = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Vec w = M * v;
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    const double next = v.dot(w);
    v = w / wn;
    if (it > 0 && std::abs(next - lambda) <= rel_tol * std::abs(next)) {
      return std::sqrt(std::max(next, 0.0));
    }
    lambda = next;
  }
  const double residual = (M * v - lambda * v).norm();
  std::ostringstream msg;
  msg << "power iteration did not converge in " << max_iters
      << " iterations (residual " << residual << ")";
  throw ConvergenceError(msg.str(), residual);
}

double contraction_factor(double gamma, double sigma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ParameterError("gamma must lie in (0, 1)");
  if (!(sigma >= 0.0 && sigma < 1.0)) throw ParameterError("sigma must lie in [0, 1)");
  return 1.0 - gamma * (1.0 - sigma);
}

Network::Network(BoolMat adjacency, Mat weights)
    : adjacency_(std::move(adjacency)), weights_(std::move(weights)) {
  const Eigen::Index n = weights_.rows();
  if (n < 1 || adjacency_.rows() != n || adjacency_.cols() != n)
    throw ParameterError("adjacency and weight matrix sizes disagree");
  check_doubly_stochastic(weights_);
  for (Eigen::Index i = 0; i < n; ++i) {
    adjacency_(i, i) = false;
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j && weights_(i, j) > 0.0 && !adjacency_(j, i))
        throw ParameterError("positive weight W(" + std::to_string(i) + "," + std::to_string(j) +
                             ") without edge (" + std::to_string(j) + "," +
                             std::to_string(i) + ")");
  }
  if (n > 1 && !strongly_connected(adjacency_))
    throw ParameterError("network is not strongly connected");
  sigma_ = n > 1 ? spectral_gap(weights_) : 0.0;
  if (n > 1 && !(sigma_ > 0.0 && sigma_ < 1.0))
    throw ParameterError("spectral norm of W - 11^T/n must lie in (0, 1), got " +
                         std::to_string(sigma_));
}

std::vector<std::pair<int, int>> Network::edges() const {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < n(); ++i)
    for (int j = 0; j < n(); ++j)
      if (adjacency_(i, j)) out.emplace_back(i, j);
  return out;
}

int Network::out_degree(int i) const {
  int d = 0;
  for (int j = 0; j < n(); ++j) d += adjacency_(i, j) ? 1 : 0;
  return d;
}

nlohmann::json Network::to_json() const {
  nlohmann::json j;
  j["n"] = n();
  auto edge_list = nlohmann::json::array();
  for (auto [a, b] : edges()) edge_list.push_back({a, b});
  j["edges"] = edge_list;
  std::vector<double> w;
  w.reserve(static_cast<std::size_t>(n()) * n());
  for (int r = 0; r < n(); ++r)
    for (int c = 0; c < n(); ++c) w.push_back(weights_(r, c));
  j["W"] = w;
  j["sigma"] = sigma_;
  return j;
}

Network Network::from_json(const nlohmann::json& j) {
  const int n = j.at("n").get<int>();
  if (n < 1) throw ParameterError("network n must be positive");
  BoolMat adj = BoolMat::Constant(n, n, false);
  for (const auto& e : j.at("edges")) {
    const int a = e.at(0).get<int>(), b = e.at(1).get<int>();
    if (a < 0 || b < 0 || a >= n || b >= n) throw ParameterError("edge index out of range");
    adj(a, b) = true;
  }
  const auto w = j.at("W").get<std::vector<double>>();
  if (w.size() != static_cast<std::size_t>(n) * n) throw ParameterError("W has wrong size");
  Mat W(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) W(r, c) = w[static_cast<std::size_t>(r) * n + c];
  return Network(std::move(adj), std::move(W));
}

Network generate_network(int n, double edge_density, std::uint64_t seed, Topology topology) {
  if (n < 2) throw ParameterError("network needs at least 2 agents");
  if (!(edge_density > 0.0 && edge_density <= 1.0))
    throw ParameterError("edge density must lie in (0, 1]");

  BoolMat adj = BoolMat::Constant(n, n, false);
  int attempts = 0;
  bool augmented = false;
  Mat W;

  switch (topology) {
  case Topology::Ring: {
    W = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      const int next = (i + 1) % n, prev = (i + n - 1) % n;
      adj(i, next) = adj(next, i) = true;
      W(i, i) += 0.5;
      W(i, next) += 0.25;
      W(i, prev) += 0.25;
    }
    attempts = 1;
    break;
  }
  case Topology::Complete: {
    adj.setConstant(true);
    attempts = 1;
    break;
  }
  case Topology::Random: {
    for (; attempts < kMaxAttempts;) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempts)));
      ++attempts;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) adj(i, j) = (i != j) && rng.bernoulli(edge_density);
      if (strongly_connected(adj)) break;
    }
    if (!strongly_connected(adj)) {
      for (int i = 0; i < n; ++i) adj(i, (i + 1) % n) = true;
      augmented = true;
    }
    break;
  }
  }
  for (int i = 0; i < n; ++i) adj(i, i) = false;

  // weights live on the symmetric closure
  BoolMat sym = adj.array() || adj.transpose().array();
  if (topology != Topology::Ring) W = metropolis_weights(sym);
  if (!sigma_in_open_unit(spectral_gap(W))) W = lazy(W);

  Network net(std::move(sym), std::move(W));
  net.attempts_ = attempts;
  net.augmented_ = augmented;
  return net;
}

} // namespace cgt
