#include "dpsm/objective.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace dpsm {
namespace {

double sgn0(double r) { return r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0); }

Eigen::VectorXd per_datum_subgradient(const PhaseRetrievalInstance& inst,
                                      int agent, int datum,
                                      const Eigen::VectorXd& x) {
  const auto w = inst.w[agent].row(datum);
  const double ip = w.dot(x);
  const double r = ip * ip - inst.y(agent, datum);
  return (sgn0(r) * 2.0 * ip) * w.transpose();
}

}  // namespace

double ObjectiveOracle::global_value(const Eigen::VectorXd& x) const {
  double total = 0.0;
  for (int i = 0; i < agent_count(); ++i) total += value(i, x);
  return total / agent_count();
}

Eigen::VectorXd ObjectiveOracle::global_subgradient(
    const Eigen::VectorXd& x) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dimension());
  for (int i = 0; i < agent_count(); ++i) g += subgradient(i, x);
  return g / agent_count();
}

PhaseRetrievalInstance generate_instance(int n, int N, int m,
                                         std::uint64_t seed) {
  if (n < 1 || N < 1 || m < 1)
    throw std::invalid_argument("instance dimensions must be positive");
  RngStream signal_stream(seed, "signal", 0, 0);
  Eigen::VectorXd signal(n);
  for (int i = 0; i < n; ++i) signal(i) = signal_stream.next_normal();
  return generate_from_signal(signal, N, m, seed);
}

PhaseRetrievalInstance generate_from_signal(const Eigen::VectorXd& signal,
                                            int N, int m,
                                            std::uint64_t seed) {
  const int n = static_cast<int>(signal.size());
  if (n < 1 || N < 1 || m < 1)
    throw std::invalid_argument("instance dimensions must be positive");
  PhaseRetrievalInstance inst;
  inst.n = n;
  inst.N = N;
  inst.m = m;
  inst.seed = seed;
  inst.ground_truth = signal;
  inst.w.reserve(N);
  inst.y.resize(N, m);
  for (int i = 0; i < N; ++i) {
    Eigen::MatrixXd wi(m, n);
    for (int j = 0; j < m; ++j) {
      RngStream stream(seed, "measurement", static_cast<std::uint64_t>(i),
                       static_cast<std::uint64_t>(j));
      for (int c = 0; c < n; ++c) wi(j, c) = stream.next_normal();
      const double ip = wi.row(j).dot(signal);
      inst.y(i, j) = ip * ip;
    }
    inst.w.push_back(std::move(wi));
  }
  return inst;
}

double value(const PhaseRetrievalInstance& inst, int agent,
             const Eigen::VectorXd& x) {
  if (x.size() != inst.n) throw std::invalid_argument("dimension mismatch");
  const Eigen::VectorXd ip = inst.w[agent] * x;
  return (ip.array().square() - inst.y.row(agent).transpose().array())
             .abs()
             .sum() /
         inst.m;
}

Eigen::VectorXd subgradient(const PhaseRetrievalInstance& inst, int agent,
                            const Eigen::VectorXd& x) {
  if (x.size() != inst.n) throw std::invalid_argument("dimension mismatch");
  const Eigen::VectorXd ip = inst.w[agent] * x;
  Eigen::VectorXd coeff(inst.m);
  for (int j = 0; j < inst.m; ++j)
    coeff(j) = sgn0(ip(j) * ip(j) - inst.y(agent, j)) * 2.0 * ip(j);
  return (inst.w[agent].transpose() * coeff) / inst.m;
}

Eigen::VectorXd stochastic_subgradient(const PhaseRetrievalInstance& inst,
                                       int agent, const Eigen::VectorXd& x,
                                       int batch, RngStream& stream) {
  if (batch == kFullBatch) return subgradient(inst, agent, x);
  if (batch < 1 || batch > inst.m)
    throw std::invalid_argument("batch size must be in [1, m] or full");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(inst.n);
  for (int l = 0; l < batch; ++l) {
    const int j = static_cast<int>(
        stream.next_below(static_cast<std::uint64_t>(inst.m)));
    g += per_datum_subgradient(inst, agent, j, x);
  }
  return g / batch;
}

PhaseRetrievalOracle::PhaseRetrievalOracle(const PhaseRetrievalInstance& inst)
    : inst_(&inst) {
  rho_hat_ = estimate_rho_and_l(inst, {}).rho_hat;
}

double PhaseRetrievalOracle::value(int agent, const Eigen::VectorXd& x) const {
  return dpsm::value(*inst_, agent, x);
}

Eigen::VectorXd PhaseRetrievalOracle::subgradient(
    int agent, const Eigen::VectorXd& x) const {
  return dpsm::subgradient(*inst_, agent, x);
}

Eigen::VectorXd PhaseRetrievalOracle::stochastic_subgradient(
    int agent, const Eigen::VectorXd& x, int batch, RngStream& stream) const {
  return dpsm::stochastic_subgradient(*inst_, agent, x, batch, stream);
}

Eigen::VectorXd spectral_initialization(const PhaseRetrievalInstance& inst) {
  const double mean_y = inst.y.mean();
  if (mean_y <= 0.0) return Eigen::VectorXd::Zero(inst.n);
  const double r = std::sqrt(mean_y);

  // Matrix-free power iteration on D = (1/(Nm)) sum y_{ij} w w^T:
  // D v = (1/(Nm)) sum_i W_i^T (y_i .* (W_i v)).
  const auto apply = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(inst.n);
    for (int i = 0; i < inst.N; ++i) {
      const Eigen::VectorXd proj = inst.w[i] * v;
      out += inst.w[i].transpose() *
             (inst.y.row(i).transpose().array() * proj.array()).matrix();
    }
    return Eigen::VectorXd(out / (static_cast<double>(inst.N) * inst.m));
  };

  RngStream stream(inst.seed, "spectral", 0, 0);
  Eigen::VectorXd v(inst.n);
  for (int i = 0; i < inst.n; ++i) v(i) = stream.next_normal();
  v.normalize();
  bool converged = false;
  for (int it = 0; it < 10000 && !converged; ++it) {
    const Eigen::VectorXd dv = apply(v);
    const double norm_dv = dv.norm();
    if (norm_dv <= 1e-300) break;  // degenerate: treat as converged at zero
    const double lambda = v.dot(dv);
    // For symmetric D the Rayleigh residual bounds the eigenvalue error.
    if ((dv - lambda * v).norm() <= 1e-12 * std::max(1.0, lambda))
      converged = true;
    v = dv / norm_dv;
  }
  if (!converged)
    throw std::runtime_error("spectral initialization did not converge");
  // Deterministic sign: first nonzero coordinate positive.
  for (int i = 0; i < inst.n; ++i) {
    if (v(i) != 0.0) {
      if (v(i) < 0.0) v = -v;
      break;
    }
  }
  return r * v;
}

SignedDistance signed_distance(const PhaseRetrievalInstance& inst,
                               const Eigen::VectorXd& x) {
  const double dplus = (x - inst.ground_truth).norm();
  const double dminus = (x + inst.ground_truth).norm();
  if (dplus <= dminus) return SignedDistance{dplus, +1};
  return SignedDistance{dminus, -1};
}

SharpnessEstimate estimate_sharpness(const PhaseRetrievalInstance& inst,
                                     int probe_count, double radius,
                                     RngStream& stream) {
  if (probe_count < 1 || radius <= 0.0)
    throw std::invalid_argument("need probe_count >= 1 and radius > 0");
  PhaseRetrievalOracle oracle(inst);
  double kappa = std::numeric_limits<double>::infinity();
  int used = 0;
  for (int p = 0; p < probe_count; ++p) {
    Eigen::VectorXd direction(inst.n);
    for (int i = 0; i < inst.n; ++i) direction(i) = stream.next_normal();
    const double norm_dir = direction.norm();
    if (norm_dir == 0.0) continue;
    const Eigen::VectorXd center =
        (p % 2 == 0) ? inst.ground_truth
                     : Eigen::VectorXd(-inst.ground_truth);
    const Eigen::VectorXd x = center + (radius / norm_dir) * direction;
    const double dplus = (x - inst.ground_truth).norm();
    const double dminus = (x + inst.ground_truth).norm();
    if (dplus == 0.0 || dminus == 0.0) continue;  // exact center: excluded
    kappa = std::min(kappa, oracle.global_value(x) / (dplus * dminus));
    ++used;
  }
  if (used == 0) kappa = 0.0;
  return SharpnessEstimate{kappa, used, radius};
}

CurvatureEstimate estimate_rho_and_l(
    const PhaseRetrievalInstance& inst,
    const std::vector<Eigen::VectorXd>& sample_points) {
  CurvatureEstimate est;
  for (int i = 0; i < inst.N; ++i)
    est.rho_hat =
        std::max(est.rho_hat, 2.0 * inst.w[i].rowwise().squaredNorm().maxCoeff());
  for (const auto& x : sample_points)
    for (int i = 0; i < inst.N; ++i)
      est.l_hat = std::max(est.l_hat, subgradient(inst, i, x).norm());
  return est;
}

namespace {

constexpr char kMagic[8] = {'W', 'C', 'X', 'P', 'R', '0', '0', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

double get_f64(std::istream& in) {
  const std::uint64_t bits = get_u64(in);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace

void save_instance(const PhaseRetrievalInstance& inst,
                   const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(kMagic, 8);
  put_u64(out, static_cast<std::uint64_t>(inst.n));
  put_u64(out, static_cast<std::uint64_t>(inst.N));
  put_u64(out, static_cast<std::uint64_t>(inst.m));
  put_u64(out, inst.seed);
  for (int i = 0; i < inst.n; ++i) put_f64(out, inst.ground_truth(i));
  for (int i = 0; i < inst.N; ++i)
    for (int j = 0; j < inst.m; ++j) put_f64(out, inst.y(i, j));
  for (int i = 0; i < inst.N; ++i)
    for (int j = 0; j < inst.m; ++j)
      for (int c = 0; c < inst.n; ++c) put_f64(out, inst.w[i](j, c));
  if (!out) throw std::runtime_error("write failed for " + path);
}

PhaseRetrievalInstance load_instance(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("bad instance magic in " + path);
  PhaseRetrievalInstance inst;
  inst.n = static_cast<int>(get_u64(in));
  inst.N = static_cast<int>(get_u64(in));
  inst.m = static_cast<int>(get_u64(in));
  inst.seed = get_u64(in);
  if (!in || inst.n < 1 || inst.N < 1 || inst.m < 1)
    throw std::runtime_error("corrupt instance header in " + path);
  inst.ground_truth.resize(inst.n);
  for (int i = 0; i < inst.n; ++i) inst.ground_truth(i) = get_f64(in);
  inst.y.resize(inst.N, inst.m);
  for (int i = 0; i < inst.N; ++i)
    for (int j = 0; j < inst.m; ++j) inst.y(i, j) = get_f64(in);
  inst.w.assign(inst.N, Eigen::MatrixXd(inst.m, inst.n));
  for (int i = 0; i < inst.N; ++i)
    for (int j = 0; j < inst.m; ++j)
      for (int c = 0; c < inst.n; ++c) inst.w[i](j, c) = get_f64(in);
  if (!in) throw std::runtime_error("truncated instance file " + path);
  return inst;
}

}  // namespace dpsm
