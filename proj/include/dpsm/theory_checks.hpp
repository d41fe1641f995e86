#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dpsm/geometry.hpp"
#include "dpsm/rng.hpp"

namespace dpsm {

/// Outcome of one executable inequality check.
struct CheckReport {
  std::string name;
  long trials = 0;
  double worst_slack = 0.0;  // most negative margin seen (>= 0 means clean)
  double tolerance = 0.0;    // pass iff worst_slack >= -tolerance
  bool pass = false;
};

/// The 1-D weakly convex test function f(y) = |y^2 - 1| (modulus 2), used
/// throughout the checks; subgradient selection sgn(0) := 0.
double one_d_test_value(const Eigen::VectorXd& y);
Eigen::VectorXd one_d_test_subgradient(const Eigen::VectorXd& y);

/// Slack of the weakly convex combination inequality
///   f(sum a_i x_i) <= sum a_i f(x_i)
///                     + (rho/2) sum_{i<j} a_i a_j ||x_i - x_j||^2
/// (slack = RHS - LHS; nonnegative when the inequality holds).
double weak_combination_slack(const ScalarFn& f, double rho,
                              const std::vector<Eigen::VectorXd>& points,
                              const Eigen::VectorXd& weights);

/// Slack of the strongly convex combination inequality
///   g(sum a_i x_i) <= sum a_i g(x_i)
///                     - (tau/2) sum_{i<j} a_i a_j ||x_i - x_j||^2.
double strong_combination_slack(const ScalarFn& g, double tau,
                                const std::vector<Eigen::VectorXd>& points,
                                const Eigen::VectorXd& weights);

/// Single-combination checks (pass tolerance 1e-9).
CheckReport check_weakly_convex_combination(
    const ScalarFn& f, double rho, const std::vector<Eigen::VectorXd>& points,
    const Eigen::VectorXd& weights);
CheckReport check_strongly_convex_combination(
    const ScalarFn& g, double tau, const std::vector<Eigen::VectorXd>& points,
    const Eigen::VectorXd& weights);

/// Convolution partial sum S = sum_{k=0}^{T-1} lambda^k gamma_{T-k-1} and
/// the normalized ratio S (1 - lambda) / gamma_{T-1}, which stays bounded
/// for any diminishing non-summable stepsize sequence.
struct ConvolutionBound {
  double sum = 0.0;
  double ratio = 0.0;
};
ConvolutionBound convolution_bound(double lambda,
                                   const std::vector<double>& gamma_sequence,
                                   long T);

/// Closed-form lower bound -N a^2 / 2 + N b a / c for the minimum of
/// -1/2 sum (x_i^2 - 2 b x_i) over {sum x_i^2 <= N a^2, 0 <= x_i <= c a}.
/// Preconditions: a > 0, 0 < 2b <= a, c >= 1, N >= 1 (throws otherwise).
double qp_lower_bound(int N, double a, double b, double c);

/// Grid minimum of the same program for N <= 3.  The innermost coordinate
/// is resolved exactly by concavity (the 1-D restriction is concave, so its
/// minimum over any grid interval is attained at an endpoint), which keeps
/// fine resolutions tractable; the result is identical to a full scan.
double qp_brute_force(int N, double a, double b, double c, double resolution);

/// Reference full grid scan (test oracle; exponential in N — coarse grids
/// only).
double qp_brute_force_reference(int N, double a, double b, double c,
                                double resolution);

/// Log-linear least squares fit trace_k ~ c * lambda^k over the positive
/// entries.  flagged is set when the trace has no usable entries.
struct PhiDecayFit {
  double c_hat = 0.0;
  double lambda_hat = 0.0;
  bool flagged = false;
};
PhiDecayFit fit_phi_decay(const std::vector<double>& trace);

/// Worst prox-map expansion ratio over random pairs, compared against the
/// theoretical Lipschitz constant 1/(1 - t rho) plus an inner-solver
/// allowance.
CheckReport check_prox_lipschitz(const ScalarFn& value, const VectorFn& subgrad,
                                 double rho, double t, int pair_count,
                                 RngStream& stream);

/// The full named check suite (the `check` CLI subcommand and acceptance
/// criterion run exactly this).  `filter` keeps checks whose name contains
/// the substring; empty keeps all.
std::vector<CheckReport> run_check_suite(const std::string& filter);

}  // namespace dpsm
