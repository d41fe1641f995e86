#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "dpsm/rng.hpp"

namespace dpsm {

/// Undirected simple graph on nodes 0..node_count-1.
struct Graph {
  int node_count = 0;
  std::vector<std::pair<int, int>> edges;  // each pair (i, j) with i < j

  std::vector<int> degrees() const;
  bool connected() const;
};

/// Sample an Erdős–Rényi graph: each unordered pair is an edge independently
/// with probability p.  Deterministic for a fixed stream.
Graph generate_er_graph(int n_nodes, double p, RngStream& stream);

/// Doubly stochastic gossip weight matrix.
struct MixingMatrix {
  Eigen::MatrixXd weights;
  double eta = 0.0;  // smallest strictly positive entry
};

/// Metropolis–Hastings weights for a graph: a_{ij} = 1/(1 + max(d_i, d_j))
/// on edges, diagonal = 1 - sum of the row's off-diagonal entries.  The
/// result is symmetric and doubly stochastic with strictly positive diagonal.
MixingMatrix metropolis_weights(const Graph& g);

/// A (possibly time-varying) sequence of mixing matrices A(k).
///
/// fixed mode resolves one connected graph up front (regenerating a
/// disconnected draw up to 100 times, then failing); resample mode draws a
/// fresh graph for every round index from a per-round derived stream, and
/// disconnected rounds are allowed.  An explicit-matrix schedule repeats a
/// caller-supplied matrix, which lets tests exercise degenerate dynamics
/// (identity, exact averaging) that no connected generator would produce.
class MixingSchedule {
 public:
  enum class Mode { fixed, resample };

  static MixingSchedule fixed_er(int n_nodes, double p, std::uint64_t seed);
  static MixingSchedule resample_er(int n_nodes, double p, std::uint64_t seed,
                                    int intercomm_bound = 1);
  static MixingSchedule from_matrix(MixingMatrix a);

  Mode mode() const { return mode_; }
  int node_count() const { return node_count_; }
  int intercomm_bound() const { return intercomm_bound_; }

  /// The weight matrix used at round k.
  MixingMatrix matrix_at(long k) const;

  /// The graph realized at round k (fixed mode: the resolved graph).
  Graph graph_at(long k) const;

 private:
  MixingSchedule() = default;

  Mode mode_ = Mode::fixed;
  int node_count_ = 0;
  double edge_probability_ = 0.0;
  std::uint64_t seed_ = 0;
  int intercomm_bound_ = 1;
  bool explicit_matrix_ = false;
  Graph fixed_graph_;
  MixingMatrix fixed_matrix_;
};

/// Observed network-assumption diagnostics over a finite horizon.
struct AssumptionReport {
  double eta_min = 0.0;        // smallest positive entry seen
  double max_row_dev = 0.0;    // worst |row sum - 1|
  double max_col_dev = 0.0;    // worst |column sum - 1|
  bool diagonal_positive = false;
  bool union_connected = false;  // union graph of every full window connected
};

/// Scan `horizon` rounds of the schedule and report how well it satisfies
/// the mixing assumptions (double stochasticity, positive diagonal, union
/// connectivity over every window of the intercommunication bound).
/// Violations are reported, never thrown.
AssumptionReport check_assumptions(const MixingSchedule& schedule,
                                   int horizon);

/// Spectral operator norm ||M||_2 via power iteration on M^T M.
/// Throws std::runtime_error if the iteration fails to converge in budget.
double operator_norm(const Eigen::MatrixXd& m, double tol = 1e-10,
                     int budget = 10000);

/// Second largest singular value of a doubly stochastic matrix, computed as
/// ||A - (1/N)11^T||_2 by power iteration (tolerance 1e-10, budget 10000).
double second_singular_value(const MixingMatrix& a);

/// Ordered product Phi(k, s) = A(s) A(s+1) ... A(k); identity when k < s.
struct TransitionProduct {
  long s = 0;
  long k = 0;
  Eigen::MatrixXd phi;
};

TransitionProduct transition_product(const MixingSchedule& schedule, long s,
                                     long k);

/// The consensus decay sequence ||Phi(k, 0) - (1/N)11^T||_2 for
/// k = 0..horizon-1, built incrementally.
std::vector<double> consensus_decay_trace(const MixingSchedule& schedule,
                                          int horizon);

}  // namespace dpsm
