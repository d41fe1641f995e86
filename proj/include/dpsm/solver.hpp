#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "dpsm/dataio.hpp"
#include "dpsm/geometry.hpp"
#include "dpsm/network.hpp"
#include "dpsm/objective.hpp"

namespace dpsm {

/// Stepsize schedule alpha_k.  Config validation requires strictly positive
/// scales; the factories additionally accept a zero scale so tests can drive
/// pure-consensus rounds (alpha identically zero).
class StepsizePolicy {
 public:
  /// alpha_k = a / (k+1)^q, q in (0, 1]: diminishing, non-summable, with
  /// alpha_{k+1}/alpha_k -> 1.
  static StepsizePolicy polynomial(double a, double q);

  /// alpha_k = mu0 * gamma^k, gamma in (0, 1).
  static StepsizePolicy geometric(double mu0, double gamma);

  /// alpha_k = a / (K+1)^q with K = floor(k / epoch_length): the polynomial
  /// schedule held constant within each epoch.
  static StepsizePolicy epoch_polynomial(double a, double q,
                                         long epoch_length);

  /// Build from a validated config (epoch_length 0 resolves to problem.m:
  /// one pass of local data per epoch).
  static StepsizePolicy from_config(const RunConfig& config);

  double alpha(long k) const;

 private:
  StepsizePolicy() = default;

  StepsizeVariant variant_ = StepsizeVariant::geometric;
  double a_ = 0.0;
  double q_ = 0.0;
  double mu0_ = 0.0;
  double gamma_ = 0.0;
  long epoch_length_ = 1;
};

/// The N agent iterates, one column each, plus the round counter.
struct AgentStates {
  Eigen::MatrixXd iterates;  // n x N
  long k = 0;

  Eigen::VectorXd mean() const { return iterates.rowwise().mean(); }

  /// Frobenius norm of the stacked deviations from the mean.
  double consensus_error() const;
};

/// One synchronous round: mix (v_i = sum_j a_ij(k) x_j), step along the
/// local subgradient at v_i, project.  Per-agent subgradient evaluations may
/// run on up to `threads` threads; results are bitwise independent of the
/// thread count (each agent writes its own column, reductions are ordered).
void dpsm_round(AgentStates& states, const MixingSchedule& schedule,
                const ObjectiveOracle& oracle, const FeasibleSet& set,
                const StepsizePolicy& policy, int threads = 1);

/// Stochastic variant: the subgradient is replaced by a mini-batch average
/// drawn from the agent's own data using that agent's stream (one stream per
/// agent, pre-derived by the caller).  batch == kFullBatch reproduces
/// dpsm_round exactly (no stream is consumed).
void stodpsm_round(AgentStates& states, const MixingSchedule& schedule,
                   const ObjectiveOracle& oracle, const FeasibleSet& set,
                   const StepsizePolicy& policy, int batch,
                   std::vector<RngStream>& streams, int threads = 1);

enum class CentralMode { deterministic, stochastic };

/// Centralized baseline step x' = Proj(x - alpha_k g).  Deterministic mode
/// takes g = the full subgradient of f; stochastic mode averages `batch`
/// per-datum subgradients drawn uniformly across all N*m data (agent first,
/// then datum).  batch == kFullBatch, or batch >= N*m, degenerates to the
/// deterministic step.
Eigen::VectorXd centralized_round(const Eigen::VectorXd& x, long k,
                                  const ObjectiveOracle& oracle,
                                  const FeasibleSet& set,
                                  const StepsizePolicy& policy,
                                  CentralMode mode, int batch,
                                  RngStream& stream);

/// One sampled metrics row.  sigma2 is present when the schedule resamples
/// (it is constant otherwise); env_grad is present on envelope-stride rounds.
struct MetricRow {
  long k = 0;
  double alpha = 0.0;
  double mean_sq_dist = 0.0;  // (1/N) sum_i ||x_i - x*||^2
  double consensus = 0.0;     // ||Delta_k||
  double objective = 0.0;     // f(mean iterate)
  std::optional<double> sigma2;
  std::optional<double> env_grad;  // ||grad of the Moreau envelope at mean||
};

enum class RunStatus { completed, reached_tolerance, diverged };

/// Everything a run produces: the (canonicalized) config it executed,
/// instance-derived diagnostics, and the sampled rows.
struct RunRecord {
  RunConfig config;
  double rho_hat = 0.0;
  double l_hat = 0.0;
  double kappa_hat = 0.0;
  double signal_norm = 0.0;  // ||ground truth||
  int sign = +1;             // frozen at k=0: x* = sign * ground truth
  RunStatus status = RunStatus::completed;
  std::vector<MetricRow> rows;

  /// CSV with a "# key = value" header block (config echo plus the derived
  /// diagnostics above), then column names, then one row per sample with
  /// %.17g reals and empty cells for absent optionals.  Byte-identical for
  /// identical configs regardless of thread count.
  std::string to_csv() const;
  void write_csv(const std::string& path) const;
};

/// Execute a full experiment described by the config: build the instance
/// (synthetic or image-based), fix x* = sign * ground truth from the initial
/// point, and iterate the selected method for max_iterations rounds or until
/// mean_sq_dist < stop_tol, sampling metrics every metric_stride rounds and
/// the envelope gradient every envelope_stride rounds.  Iterates above norm
/// 1e8 (or non-finite) abort the run with a final diagnostic row and status
/// diverged.  `initial` overrides the spectral initialization.
///
/// Canonicalizations (reflected in the echoed config): stodpsm with a full
/// batch IS dpsm, stocsub with a full batch IS csub, and an epoch length of
/// zero resolves to m.
RunRecord run(const RunConfig& config, int threads = 1,
              const std::optional<Eigen::VectorXd>& initial = std::nullopt);

/// Least-squares exponential fit of the distance decay.
struct RateFit {
  double rate_hat = 0.0;
  double r_squared = 0.0;
  bool flagged = false;  // a post-burn-in distance was exactly zero
};

/// Fit log(mean_sq_dist) ~ intercept + slope * k over rows with k >= burn_in
/// and report rate_hat = exp(slope / 2) (the per-round distance ratio).
/// Throws unless >= 10 usable rows remain.
RateFit fit_linear_rate(const RunRecord& record, long burn_in);

/// The constants of the geometric-stepsize convergence guarantee, evaluated
/// on a concrete instance + schedule + initialization, with the consensus
/// decay pair (c, lambda) fitted empirically from the schedule.
struct RateConstants {
  double lambda = 0.0;    // fitted consensus decay ratio
  double c = 0.0;         // fitted consensus decay prefactor
  double beta = 0.0;      // sharpness modulus * signal norm
  double B_sharp = 0.0;   // sharpness region radius 2*beta/rho
  double e0 = 0.0;
  double a = 0.0;         // 2(L+beta)L / lambda^2
  double q_const = 0.0;   // the linear term coefficient; guarantee needs > 0
  double mu0_bound = 0.0; // largest mu0 the guarantee admits
  double gamma = 0.0;     // lambda^delta
  double Gamma = 0.0;
  double Lambda = 0.0;
  double delta = 0.0;
  bool init_sum_ok = false;        // mean-square distance small enough
  bool init_spread_ok = false;     // no iterate much farther than the mean
  bool init_consensus_ok = false;  // ||Delta_0|| under the admissible bound
  bool beta_le_l = false;          // consistency: beta <= L must hold
  bool vacuous = false;            // q_const <= 0 (or no usable decay fit):
                                   // the constants certify nothing here
};

/// Evaluate the rate constants at the given initialization (n x N columns).
/// Requires Gamma >= sqrt(2) and Lambda in (lambda, 1); delta > 0 sets the
/// reported gamma = lambda^delta.
RateConstants compute_rate_constants(const PhaseRetrievalInstance& inst,
                                     const MixingSchedule& schedule,
                                     const Eigen::MatrixXd& initial_states,
                                     double Gamma, double Lambda,
                                     double delta = 1.0);

}  // namespace dpsm
