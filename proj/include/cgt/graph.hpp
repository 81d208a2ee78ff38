#pragma once

#include "cgt/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <utility>
#include <vector>

namespace cgt {

enum class Topology { Random, Ring, Complete };

/// Strongly connected digraph with a doubly stochastic mixing matrix.
///
/// adjacency(i, j) == true means agent i sends to agent j, i.e. the directed
/// edge (i, j). The weight W(j, i) is positive only for such edges (or the
/// diagonal). The graph is immutable once built.
class Network {
public:
  Network(Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> adjacency, Mat weights);

  int n() const { return static_cast<int>(weights_.rows()); }
  const Mat& W() const { return weights_; }
  const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& adjacency() const {
    return adjacency_;
  }
  double sigma() const { return sigma_; }

  /// Directed edges (i, j), i != j, in row-major order.
  std::vector<std::pair<int, int>> edges() const;
  /// Number of out-neighbours of agent i, excluding itself.
  int out_degree(int i) const;
  /// Retry count used by the generator (0 when built directly).
  int attempts() const { return attempts_; }
  bool augmented_with_cycle() const { return augmented_; }

  nlohmann::json to_json() const;
  static Network from_json(const nlohmann::json& j);

private:
  friend Network generate_network(int, double, std::uint64_t, Topology);
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> adjacency_;
  Mat weights_;
  double sigma_ = 0.0;
  int attempts_ = 0;
  bool augmented_ = false;
};

/// Random strongly connected network with Metropolis weights.
///
/// Each ordered pair is linked with probability edge_density; reciprocal edges
/// are added so the weights can be symmetric. Up to 100 draws are tried before
/// a directed Hamiltonian cycle is added. If the Metropolis matrix has sigma
/// outside (0, 1) the lazy version (I + W) / 2 is used instead.
/// Ring topology uses lazy-uniform weights W = I/2 + (P + P^T)/4.
Network generate_network(int n, double edge_density, std::uint64_t seed,
                         Topology topology = Topology::Random);

/// ||W - (1/n) 1 1^T||_2 by power iteration on (W - H)^T (W - H).
/// Throws ConvergenceError after max_iters without reaching rel_tol.
double spectral_gap(const Mat& W, double rel_tol = 1e-10, int max_iters = 10000);

/// delta = 1 - gamma (1 - sigma), the consensus contraction factor.
double contraction_factor(double gamma, double sigma);

/// Forward and backward BFS from node 0.
bool strongly_connected(const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& adjacency);

/// Metropolis-Hastings weights on the symmetric closure of `adjacency`.
Mat metropolis_weights(const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& adjacency);

} // namespace cgt
