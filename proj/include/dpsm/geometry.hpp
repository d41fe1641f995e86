#pragma once

#include <Eigen/Dense>
#include <functional>

#include "dpsm/objective.hpp"

namespace dpsm {

/// Closed convex feasible set: the whole space, a Euclidean ball, or a box.
struct FeasibleSet {
  enum class Kind { whole_space, ball, box };

  Kind kind = Kind::whole_space;
  Eigen::VectorXd center;  // ball
  double radius = 0.0;     // ball
  Eigen::VectorXd lower;   // box
  Eigen::VectorXd upper;   // box

  static FeasibleSet whole_space();
  static FeasibleSet make_ball(Eigen::VectorXd center, double radius);
  static FeasibleSet make_box(Eigen::VectorXd lower, Eigen::VectorXd upper);
};

/// Euclidean projection onto the set (identity for the whole space, radial
/// clip for the ball, componentwise clamp for the box).
Eigen::VectorXd project(const FeasibleSet& set, const Eigen::VectorXd& x);

/// Output of a proximal evaluation of a rho-weakly convex function.
struct ProxResult {
  Eigen::VectorXd prox_point;         // approximate minimizer x_hat
  double envelope_value = 0.0;        // f(x_hat) + ||x_hat - x||^2 / (2t)
  Eigen::VectorXd envelope_gradient;  // (x - x_hat) / t
  int inner_iterations = 0;
  double inner_gap_estimate = 0.0;  // sigma/2 * ||last inner step||^2
};

using ScalarFn = std::function<double(const Eigen::VectorXd&)>;
using VectorFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Proximal point of f (+ the set's indicator) at x with parameter t < 1/rho:
/// approximately minimize f(z) + ||z - x||^2/(2t) over the set.
///
/// Two stages share the same subgradient oracle.  Stage one is the textbook
/// projected subgradient method for (1/t - rho)-strongly convex objectives —
/// stepsize 2/(sigma (j+2)), iterates averaged with weights j+1, warm start
/// at x — which is dimension-free but only O(1/j) accurate.  A refinement
/// stage then runs fixed-step projected subgradient descent from the average
/// with geometrically halved steps, keeping the best inner objective value
/// seen; at points where the minimizer sits inside a smooth piece this
/// converges linearly, and near kinks the halving bounds the oscillation
/// radius by the current step, so the refined point is orders of magnitude
/// more accurate at small extra cost.  `budget` is the stage-one iteration
/// count; refinement adds 12 stages of 40 steps.
ProxResult prox(const ScalarFn& value, const VectorFn& subgrad, double rho,
                const FeasibleSet& set, const Eigen::VectorXd& x, double t,
                int budget);

/// Convenience overload over the global objective (1/N) sum_i f_i.
ProxResult prox(const ObjectiveOracle& oracle, const FeasibleSet& set,
                const Eigen::VectorXd& x, double t, int budget);

/// ||x - x_hat|| / t: the Moreau-envelope near-stationarity measure.
double moreau_gradient_norm(const ObjectiveOracle& oracle,
                            const FeasibleSet& set, const Eigen::VectorXd& x,
                            double t, int budget);

}  // namespace dpsm
