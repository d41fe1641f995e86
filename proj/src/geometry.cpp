#include "dpsm/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace dpsm {

FeasibleSet FeasibleSet::whole_space() { return FeasibleSet{}; }

FeasibleSet FeasibleSet::make_ball(Eigen::VectorXd center, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("ball radius must be > 0");
  FeasibleSet s;
  s.kind = Kind::ball;
  s.center = std::move(center);
  s.radius = radius;
  return s;
}

FeasibleSet FeasibleSet::make_box(Eigen::VectorXd lower,
                                  Eigen::VectorXd upper) {
  if (lower.size() != upper.size() || (lower.array() > upper.array()).any())
    throw std::invalid_argument("box needs lower <= upper componentwise");
  FeasibleSet s;
  s.kind = Kind::box;
  s.lower = std::move(lower);
  s.upper = std::move(upper);
  return s;
}

Eigen::VectorXd project(const FeasibleSet& set, const Eigen::VectorXd& x) {
  switch (set.kind) {
    case FeasibleSet::Kind::whole_space:
      return x;
    case FeasibleSet::Kind::ball: {
      const Eigen::VectorXd d = x - set.center;
      const double norm_d = d.norm();
      if (norm_d <= set.radius) return x;
      return set.center + (set.radius / norm_d) * d;
    }
    case FeasibleSet::Kind::box:
      return x.cwiseMax(set.lower).cwiseMin(set.upper);
  }
  throw std::logic_error("unreachable");
}

ProxResult prox(const ScalarFn& value, const VectorFn& subgrad, double rho,
                const FeasibleSet& set, const Eigen::VectorXd& x, double t,
                int budget) {
  if (!(t > 0.0)) throw std::invalid_argument("prox parameter t must be > 0");
  if (rho > 0.0 && t >= 1.0 / rho)
    throw std::invalid_argument("prox needs t < 1/rho for a unique minimizer");
  if (budget < 1) throw std::invalid_argument("prox budget must be >= 1");

  const double sigma = 1.0 / t - rho;  // strong convexity of the inner problem
  const auto inner_value = [&](const Eigen::VectorXd& z) {
    return value(z) + (z - x).squaredNorm() / (2.0 * t);
  };
  const auto inner_subgrad = [&](const Eigen::VectorXd& z) {
    return Eigen::VectorXd(subgrad(z) + (z - x) / t);
  };

  // Stage one: strongly convex projected subgradient with weighted averaging.
  Eigen::VectorXd z = project(set, x);
  Eigen::VectorXd weighted_sum = Eigen::VectorXd::Zero(x.size());
  double weight_total = 0.0;
  double last_step_sq = 0.0;
  for (int j = 0; j < budget; ++j) {
    const double step = 2.0 / (sigma * (j + 2));
    const Eigen::VectorXd next = project(set, z - step * inner_subgrad(z));
    last_step_sq = (next - z).squaredNorm();
    z = next;
    const double weight = j + 1;
    weighted_sum += weight * z;
    weight_total += weight;
  }
  Eigen::VectorXd averaged = weighted_sum / weight_total;

  // Refinement: halving fixed steps, keep the best feasible value seen.
  Eigen::VectorXd best = averaged;
  double best_value = inner_value(best);
  {
    const double z_value = inner_value(z);
    if (z_value < best_value) {
      best_value = z_value;
      best = z;
    }
  }
  constexpr int kStages = 12;
  constexpr int kStepsPerStage = 40;
  Eigen::VectorXd current = best;
  double step = t / 2.0;
  for (int stage = 0; stage < kStages; ++stage) {
    for (int j = 0; j < kStepsPerStage; ++j) {
      const Eigen::VectorXd next =
          project(set, current - step * inner_subgrad(current));
      last_step_sq = (next - current).squaredNorm();
      current = next;
      const double v = inner_value(current);
      if (v < best_value) {
        best_value = v;
        best = current;
      }
    }
    current = best;
    step *= 0.5;
  }

  ProxResult result;
  result.prox_point = best;
  result.envelope_value = best_value;
  result.envelope_gradient = (x - best) / t;
  result.inner_iterations = budget + kStages * kStepsPerStage;
  result.inner_gap_estimate = 0.5 * sigma * last_step_sq;
  return result;
}

ProxResult prox(const ObjectiveOracle& oracle, const FeasibleSet& set,
                const Eigen::VectorXd& x, double t, int budget) {
  return prox([&](const Eigen::VectorXd& z) { return oracle.global_value(z); },
              [&](const Eigen::VectorXd& z) {
                return oracle.global_subgradient(z);
              },
              oracle.rho(), set, x, t, budget);
}

double moreau_gradient_norm(const ObjectiveOracle& oracle,
                            const FeasibleSet& set, const Eigen::VectorXd& x,
                            double t, int budget) {
  return (x - prox(oracle, set, x, t, budget).prox_point).norm() / t;
}

}  // namespace dpsm
