#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "dpsm/rng.hpp"

namespace dpsm {

/// Marker for "use the whole local dataset" in stochastic oracles.
inline constexpr int kFullBatch = -1;

/// A sum-structured weakly convex objective f(x) = (1/N) sum_i f_i(x),
/// where agent i can evaluate only its own f_i.
class ObjectiveOracle {
 public:
  virtual ~ObjectiveOracle() = default;

  virtual int dimension() const = 0;
  virtual int agent_count() const = 0;

  /// Data points held by each agent (uniform across agents).
  virtual int local_data_count() const = 0;

  /// Local objective value f_i(x).
  virtual double value(int agent, const Eigen::VectorXd& x) const = 0;

  /// A subgradient of f_i at x (a fixed measurable selection).
  virtual Eigen::VectorXd subgradient(int agent,
                                      const Eigen::VectorXd& x) const = 0;

  /// Mini-batch stochastic subgradient: the average of `batch` per-datum
  /// subgradients drawn uniformly with replacement from agent i's data.
  /// batch == kFullBatch short-circuits to the deterministic subgradient.
  virtual Eigen::VectorXd stochastic_subgradient(int agent,
                                                 const Eigen::VectorXd& x,
                                                 int batch,
                                                 RngStream& stream) const = 0;

  /// A weak-convexity modulus valid for every f_i.
  virtual double rho() const = 0;

  double global_value(const Eigen::VectorXd& x) const;
  Eigen::VectorXd global_subgradient(const Eigen::VectorXd& x) const;
};

/// Robust phase retrieval data: agent i holds measurements w_{i,j} (rows of
/// w[i]) and observations y(i, j) = <w_{i,j}, ground_truth>^2 (noiseless).
struct PhaseRetrievalInstance {
  int n = 0;  // signal dimension
  int N = 0;  // agents
  int m = 0;  // measurements per agent
  std::uint64_t seed = 0;
  std::vector<Eigen::MatrixXd> w;  // N matrices, each m x n
  Eigen::MatrixXd y;               // N x m
  Eigen::VectorXd ground_truth;    // dimension n
};

/// Fully synthetic instance: ground truth and measurements are i.i.d.
/// standard normal, observations are exact squared inner products.
PhaseRetrievalInstance generate_instance(int n, int N, int m,
                                         std::uint64_t seed);

/// Same measurement model around a caller-supplied signal (e.g. an image).
PhaseRetrievalInstance generate_from_signal(const Eigen::VectorXd& signal,
                                            int N, int m, std::uint64_t seed);

/// f_i(x) = (1/m) sum_j |<w_{i,j}, x>^2 - y_{i,j}|.
double value(const PhaseRetrievalInstance& inst, int agent,
             const Eigen::VectorXd& x);

/// (1/m) sum_j sgn(<w,x>^2 - y) * 2 <w,x> * w, with sgn(0) := 0.
Eigen::VectorXd subgradient(const PhaseRetrievalInstance& inst, int agent,
                            const Eigen::VectorXd& x);

Eigen::VectorXd stochastic_subgradient(const PhaseRetrievalInstance& inst,
                                       int agent, const Eigen::VectorXd& x,
                                       int batch, RngStream& stream);

/// ObjectiveOracle view over a PhaseRetrievalInstance (not owned; keep the
/// instance alive for the oracle's lifetime).
class PhaseRetrievalOracle final : public ObjectiveOracle {
 public:
  explicit PhaseRetrievalOracle(const PhaseRetrievalInstance& inst);

  int dimension() const override { return inst_->n; }
  int agent_count() const override { return inst_->N; }
  int local_data_count() const override { return inst_->m; }
  double value(int agent, const Eigen::VectorXd& x) const override;
  Eigen::VectorXd subgradient(int agent,
                              const Eigen::VectorXd& x) const override;
  Eigen::VectorXd stochastic_subgradient(int agent, const Eigen::VectorXd& x,
                                         int batch,
                                         RngStream& stream) const override;
  double rho() const override { return rho_hat_; }

  const PhaseRetrievalInstance& instance() const { return *inst_; }

 private:
  const PhaseRetrievalInstance* inst_;
  double rho_hat_;
};

/// x0 = r * v with r = sqrt(mean y) and v the unit top eigenvector of the
/// observation-weighted covariance (1/(Nm)) sum y w w^T, sign fixed so the
/// first nonzero coordinate is positive.  Throws on eigen-iteration failure.
Eigen::VectorXd spectral_initialization(const PhaseRetrievalInstance& inst);

/// min(||x - g||, ||x + g||) against the ground truth, plus the achieving
/// sign (+1 / -1; ties break toward +1).
struct SignedDistance {
  double distance = 0.0;
  int sign = +1;
};
SignedDistance signed_distance(const PhaseRetrievalInstance& inst,
                               const Eigen::VectorXd& x);

/// Empirical lower estimate of the sharpness modulus kappa in
/// f(x) - min f >= kappa ||x - g|| ||x + g||, probed on spheres around
/// both signed ground truths.
struct SharpnessEstimate {
  double kappa_hat = 0.0;
  int sample_count = 0;
  double probe_radius = 0.0;
};
SharpnessEstimate estimate_sharpness(const PhaseRetrievalInstance& inst,
                                     int probe_count, double radius,
                                     RngStream& stream);

/// rho_hat = 2 max_{i,j} ||w_{i,j}||^2 (curvature bound of each |quadratic|
/// term); l_hat = the largest per-agent subgradient norm over the supplied
/// sample points (the objective has unbounded subgradients globally, so the
/// Lipschitz constant is meaningful only along trajectories).
struct CurvatureEstimate {
  double rho_hat = 0.0;
  double l_hat = 0.0;
};
CurvatureEstimate estimate_rho_and_l(
    const PhaseRetrievalInstance& inst,
    const std::vector<Eigen::VectorXd>& sample_points);

/// Little-endian binary dump (8-byte magic "WCXPR001") for cross-run reuse.
void save_instance(const PhaseRetrievalInstance& inst,
                   const std::string& path);
PhaseRetrievalInstance load_instance(const std::string& path);

}  // namespace dpsm
