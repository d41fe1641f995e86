#include "dpsm/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace dpsm {

std::vector<int> Graph::degrees() const {
  std::vector<int> d(node_count, 0);
  for (const auto& [i, j] : edges) {
    ++d[i];
    ++d[j];
  }
  return d;
}

bool Graph::connected() const {
  if (node_count <= 1) return true;
  std::vector<std::vector<int>> adj(node_count);
  for (const auto& [i, j] : edges) {
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  std::vector<char> seen(node_count, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        stack.push_back(v);
      }
    }
  }
  return reached == node_count;
}

Graph generate_er_graph(int n_nodes, double p, RngStream& stream) {
  if (n_nodes < 2) throw std::invalid_argument("er graph needs >= 2 nodes");
  if (p < 0.0 || p > 1.0)
    throw std::invalid_argument("edge probability must be in [0, 1]");
  Graph g;
  g.node_count = n_nodes;
  for (int i = 0; i < n_nodes; ++i)
    for (int j = i + 1; j < n_nodes; ++j)
      if (stream.next_double() < p) g.edges.emplace_back(i, j);
  return g;
}

MixingMatrix metropolis_weights(const Graph& g) {
  if (g.node_count < 1) throw std::invalid_argument("empty graph");
  const int n = g.node_count;
  const std::vector<int> deg = g.degrees();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [i, j] : g.edges) {
    const double w = 1.0 / (1.0 + std::max(deg[i], deg[j]));
    a(i, j) = w;
    a(j, i) = w;
  }
  for (int i = 0; i < n; ++i) {
    double off = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) off += a(i, j);
    a(i, i) = 1.0 - off;
  }
  double eta = 1.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (a(i, j) > 0.0) eta = std::min(eta, a(i, j));
  return MixingMatrix{std::move(a), eta};
}

MixingSchedule MixingSchedule::fixed_er(int n_nodes, double p,
                                        std::uint64_t seed) {
  MixingSchedule s;
  s.mode_ = Mode::fixed;
  s.node_count_ = n_nodes;
  s.edge_probability_ = p;
  s.seed_ = seed;
  // A fixed schedule must mix, so insist on a connected draw.
  for (int attempt = 0; attempt < 100; ++attempt) {
    RngStream stream(seed, "graph", 0, static_cast<std::uint64_t>(attempt));
    Graph g = generate_er_graph(n_nodes, p, stream);
    if (g.connected()) {
      s.fixed_graph_ = std::move(g);
      s.fixed_matrix_ = metropolis_weights(s.fixed_graph_);
      return s;
    }
  }
  throw std::runtime_error(
      "no connected graph in 100 attempts; raise p or the node count");
}

MixingSchedule MixingSchedule::resample_er(int n_nodes, double p,
                                           std::uint64_t seed,
                                           int intercomm_bound) {
  if (intercomm_bound < 1)
    throw std::invalid_argument("intercommunication bound must be >= 1");
  MixingSchedule s;
  s.mode_ = Mode::resample;
  s.node_count_ = n_nodes;
  s.edge_probability_ = p;
  s.seed_ = seed;
  s.intercomm_bound_ = intercomm_bound;
  return s;
}

MixingSchedule MixingSchedule::from_matrix(MixingMatrix a) {
  const long n = a.weights.rows();
  if (n < 1 || a.weights.cols() != n)
    throw std::invalid_argument("mixing matrix must be square");
  MixingSchedule s;
  s.mode_ = Mode::fixed;
  s.node_count_ = static_cast<int>(n);
  s.explicit_matrix_ = true;
  s.fixed_matrix_ = std::move(a);
  // Recover the support graph so graph_at stays meaningful.
  s.fixed_graph_.node_count = static_cast<int>(n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (s.fixed_matrix_.weights(i, j) != 0.0 ||
          s.fixed_matrix_.weights(j, i) != 0.0)
        s.fixed_graph_.edges.emplace_back(i, j);
  return s;
}

MixingMatrix MixingSchedule::matrix_at(long k) const {
  if (mode_ == Mode::fixed) return fixed_matrix_;
  return metropolis_weights(graph_at(k));
}

Graph MixingSchedule::graph_at(long k) const {
  if (mode_ == Mode::fixed) return fixed_graph_;
  RngStream stream(seed_, "graph", 0, static_cast<std::uint64_t>(k));
  return generate_er_graph(node_count_, edge_probability_, stream);
}

AssumptionReport check_assumptions(const MixingSchedule& schedule,
                                   int horizon) {
  const int n = schedule.node_count();
  AssumptionReport report;
  report.eta_min = 1.0;
  report.diagonal_positive = true;

  std::vector<Graph> graphs;
  graphs.reserve(horizon);
  for (int k = 0; k < horizon; ++k) {
    const MixingMatrix a = schedule.matrix_at(k);
    graphs.push_back(schedule.graph_at(k));
    for (int i = 0; i < n; ++i) {
      double row = 0.0, col = 0.0;
      for (int j = 0; j < n; ++j) {
        row += a.weights(i, j);
        col += a.weights(j, i);
        if (a.weights(i, j) > 0.0)
          report.eta_min = std::min(report.eta_min, a.weights(i, j));
      }
      report.max_row_dev = std::max(report.max_row_dev, std::abs(row - 1.0));
      report.max_col_dev = std::max(report.max_col_dev, std::abs(col - 1.0));
      if (!(a.weights(i, i) > 0.0)) report.diagonal_positive = false;
    }
  }

  // Union connectivity over every window of B consecutive rounds.
  const int b = schedule.intercomm_bound();
  report.union_connected = true;
  for (int start = 0; start + b <= horizon; ++start) {
    Graph window;
    window.node_count = n;
    for (int k = start; k < start + b; ++k)
      for (const auto& e : graphs[k].edges) window.edges.push_back(e);
    if (!window.connected()) {
      report.union_connected = false;
      break;
    }
  }
  return report;
}

double operator_norm(const Eigen::MatrixXd& m, double tol, int budget) {
  const long n = m.cols();
  if (n == 0) return 0.0;
  // Power iteration on the PSD matrix M^T M; ||M||_2 = sqrt(lambda_max).
  RngStream stream(0xA11CE5EEDull, "power", static_cast<std::uint64_t>(n), 0);
  Eigen::VectorXd v(n);
  for (long i = 0; i < n; ++i) v(i) = stream.next_normal();
  v.normalize();
  for (int it = 0; it < budget; ++it) {
    const Eigen::VectorXd w = m.transpose() * (m * v);  // S v
    const double norm_w = w.norm();
    if (norm_w <= 1e-300) return 0.0;  // M^T M annihilates v: norm is zero
    const double lambda = v.dot(w);    // Rayleigh quotient of the unit vector v
    // Residual bound for symmetric S: |lambda - lambda_max| <= ||S v - lambda v||.
    // The test must stay relative to lambda itself, or matrices with tiny norm
    // would accept the initial random quotient before any amplification.
    if ((w - lambda * v).norm() <= tol * lambda) return std::sqrt(lambda);
    v = w / norm_w;
  }
  throw std::runtime_error("operator norm power iteration did not converge");
}

double second_singular_value(const MixingMatrix& a) {
  const long n = a.weights.rows();
  const Eigen::MatrixXd j = Eigen::MatrixXd::Constant(n, n, 1.0 / n);
  return operator_norm(a.weights - j);
}

TransitionProduct transition_product(const MixingSchedule& schedule, long s,
                                     long k) {
  TransitionProduct result;
  result.s = s;
  result.k = k;
  const int n = schedule.node_count();
  if (k < s) {
    result.phi = Eigen::MatrixXd::Identity(n, n);
    return result;
  }
  result.phi = schedule.matrix_at(s).weights;
  for (long t = s + 1; t <= k; ++t)
    result.phi = result.phi * schedule.matrix_at(t).weights;
  return result;
}

std::vector<double> consensus_decay_trace(const MixingSchedule& schedule,
                                          int horizon) {
  if (horizon < 2) throw std::invalid_argument("horizon must be >= 2");
  const int n = schedule.node_count();
  const Eigen::MatrixXd j = Eigen::MatrixXd::Constant(n, n, 1.0 / n);
  std::vector<double> trace;
  trace.reserve(horizon);
  Eigen::MatrixXd phi;
  for (int k = 0; k < horizon; ++k) {
    if (k == 0)
      phi = schedule.matrix_at(0).weights;
    else
      phi = phi * schedule.matrix_at(k).weights;
    trace.push_back(operator_norm(phi - j, 1e-8));
  }
  return trace;
}

}  // namespace dpsm
