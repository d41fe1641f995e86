#include "dpsm/theory_checks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dpsm/objective.hpp"

namespace dpsm {

double one_d_test_value(const Eigen::VectorXd& y) {
  const double v = y(0);
  return std::abs(v * v - 1.0);
}

Eigen::VectorXd one_d_test_subgradient(const Eigen::VectorXd& y) {
  const double v = y(0);
  const double r = v * v - 1.0;
  const double s = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
  Eigen::VectorXd g(1);
  g(0) = s * 2.0 * v;
  return g;
}

namespace {

void validate_combination(const std::vector<Eigen::VectorXd>& points,
                          const Eigen::VectorXd& weights) {
  if (points.size() < 2) throw std::invalid_argument("need >= 2 points");
  if (static_cast<std::size_t>(weights.size()) != points.size())
    throw std::invalid_argument("one weight per point required");
  if ((weights.array() < 0.0).any() ||
      std::abs(weights.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("weights must be a simplex vector");
}

double pairwise_term(const std::vector<Eigen::VectorXd>& points,
                     const Eigen::VectorXd& weights) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j)
      total += weights(i) * weights(j) * (points[i] - points[j]).squaredNorm();
  return total;
}

Eigen::VectorXd combination(const std::vector<Eigen::VectorXd>& points,
                            const Eigen::VectorXd& weights) {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(points[0].size());
  for (std::size_t i = 0; i < points.size(); ++i) z += weights(i) * points[i];
  return z;
}

}  // namespace

double weak_combination_slack(const ScalarFn& f, double rho,
                              const std::vector<Eigen::VectorXd>& points,
                              const Eigen::VectorXd& weights) {
  validate_combination(points, weights);
  double rhs = 0.5 * rho * pairwise_term(points, weights);
  for (std::size_t i = 0; i < points.size(); ++i)
    rhs += weights(i) * f(points[i]);
  return rhs - f(combination(points, weights));
}

double strong_combination_slack(const ScalarFn& g, double tau,
                                const std::vector<Eigen::VectorXd>& points,
                                const Eigen::VectorXd& weights) {
  validate_combination(points, weights);
  double rhs = -0.5 * tau * pairwise_term(points, weights);
  for (std::size_t i = 0; i < points.size(); ++i)
    rhs += weights(i) * g(points[i]);
  return rhs - g(combination(points, weights));
}

CheckReport check_weakly_convex_combination(
    const ScalarFn& f, double rho, const std::vector<Eigen::VectorXd>& points,
    const Eigen::VectorXd& weights) {
  const double slack = weak_combination_slack(f, rho, points, weights);
  return CheckReport{"weak_combination", 1, slack, 1e-9, slack >= -1e-9};
}

CheckReport check_strongly_convex_combination(
    const ScalarFn& g, double tau, const std::vector<Eigen::VectorXd>& points,
    const Eigen::VectorXd& weights) {
  const double slack = strong_combination_slack(g, tau, points, weights);
  return CheckReport{"strong_combination", 1, slack, 1e-9, slack >= -1e-9};
}

ConvolutionBound convolution_bound(double lambda,
                                   const std::vector<double>& gamma_sequence,
                                   long T) {
  if (!(lambda > 0.0 && lambda < 1.0))
    throw std::invalid_argument("lambda must be in (0, 1)");
  if (T < 1 || static_cast<long>(gamma_sequence.size()) < T)
    throw std::invalid_argument("need T >= 1 entries of the stepsize");
  double sum = 0.0;
  double power = 1.0;
  for (long k = 0; k < T; ++k) {
    sum += power * gamma_sequence[T - k - 1];
    power *= lambda;
  }
  return ConvolutionBound{sum, sum * (1.0 - lambda) / gamma_sequence[T - 1]};
}

namespace {

void validate_qp(int N, double a, double b, double c) {
  if (N < 1 || !(a > 0.0) || !(b > 0.0) || !(2.0 * b <= a) || !(c >= 1.0))
    throw std::invalid_argument(
        "qp bound needs N >= 1, a > 0, 0 < 2b <= a, c >= 1");
}

double qp_objective_1d(double x, double b) { return -0.5 * (x * x - 2.0 * b * x); }

}  // namespace

double qp_lower_bound(int N, double a, double b, double c) {
  validate_qp(N, a, b, c);
  return -0.5 * N * a * a + N * b * a / c;
}

double qp_brute_force(int N, double a, double b, double c, double resolution) {
  validate_qp(N, a, b, c);
  if (N > 3) throw std::invalid_argument("brute force supports N <= 3 only");
  if (!(resolution > 0.0)) throw std::invalid_argument("resolution > 0");
  const double cap = c * a;              // box upper bound per coordinate
  const double budget = N * a * a;       // norm-ball budget
  const auto axis_count = [&](double limit) {
    return static_cast<long>(std::floor(limit / resolution + 1e-12));
  };

  // The 1-D restriction is concave, so over any admissible segment the
  // minimum sits at an endpoint: evaluate x = 0 and the largest grid point.
  const auto innermost_min = [&](double remaining) {
    const double limit = std::min(cap, std::sqrt(std::max(0.0, remaining)));
    const double top = static_cast<double>(axis_count(limit)) * resolution;
    return std::min(qp_objective_1d(0.0, b), qp_objective_1d(top, b));
  };

  if (N == 1) return innermost_min(budget);

  double best = std::numeric_limits<double>::infinity();
  const long n1 = axis_count(std::min(cap, std::sqrt(budget)));
  for (long i = 0; i <= n1; ++i) {
    const double x1 = static_cast<double>(i) * resolution;
    const double rem1 = budget - x1 * x1;
    if (rem1 < 0.0) break;
    const double f1 = qp_objective_1d(x1, b);
    if (N == 2) {
      best = std::min(best, f1 + innermost_min(rem1));
      continue;
    }
    const long n2 = axis_count(std::min(cap, std::sqrt(rem1)));
    for (long j = 0; j <= n2; ++j) {
      const double x2 = static_cast<double>(j) * resolution;
      const double rem2 = rem1 - x2 * x2;
      if (rem2 < 0.0) break;
      best = std::min(best, f1 + qp_objective_1d(x2, b) + innermost_min(rem2));
    }
  }
  return best;
}

double qp_brute_force_reference(int N, double a, double b, double c,
                                double resolution) {
  validate_qp(N, a, b, c);
  if (N > 3) throw std::invalid_argument("reference scan supports N <= 3");
  const double cap = c * a;
  const double budget = N * a * a;
  const long axis = static_cast<long>(std::floor(cap / resolution + 1e-12));
  double best = std::numeric_limits<double>::infinity();
  std::vector<long> idx(N, 0);
  while (true) {
    double norm_sq = 0.0, value = 0.0;
    for (int d = 0; d < N; ++d) {
      const double x = static_cast<double>(idx[d]) * resolution;
      norm_sq += x * x;
      value += qp_objective_1d(x, b);
    }
    if (norm_sq <= budget) best = std::min(best, value);
    int d = N - 1;
    while (d >= 0 && ++idx[d] > axis) idx[d--] = 0;
    if (d < 0) break;
  }
  return best;
}

PhiDecayFit fit_phi_decay(const std::vector<double>& trace) {
  // Accumulated matrix products bottom out at a rounding-noise floor (entries
  // of the deviation become pure cancellation error around 1e-16 of the
  // leading scale); entries that far below the peak would bend the fitted
  // slope, so only the clean decaying head participates.
  // The absolute guard of 1e-14 handles traces that are noise from the start
  // (a schedule that reaches exact consensus in one step): matrix products of
  // doubly stochastic matrices have unit-scale entries, so values that far
  // down carry no signal and the fit reports itself as flagged instead.
  double peak = 0.0;
  for (const double value : trace) peak = std::max(peak, value);
  const double floor_cutoff = std::max(peak * 1e-13, 1e-14);
  std::vector<std::pair<double, double>> pts;  // (k, log trace_k)
  for (std::size_t k = 0; k < trace.size(); ++k)
    if (trace[k] > floor_cutoff) pts.emplace_back(static_cast<double>(k),
                                                  std::log(trace[k]));
  if (pts.size() < 2) return PhiDecayFit{0.0, 0.0, true};
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [x, y] : pts) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double count = static_cast<double>(pts.size());
  const double denom = count * sxx - sx * sx;
  if (denom == 0.0) return PhiDecayFit{0.0, 0.0, true};
  const double slope = (count * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / count;
  return PhiDecayFit{std::exp(intercept), std::exp(slope), false};
}

CheckReport check_prox_lipschitz(const ScalarFn& value, const VectorFn& subgrad,
                                 double rho, double t, int pair_count,
                                 RngStream& stream) {
  if (rho > 0.0 && !(t < 1.0 / rho))
    throw std::invalid_argument("need t < 1/rho");
  const FeasibleSet whole = FeasibleSet::whole_space();
  const double bound = 1.0 / (1.0 - t * rho);
  constexpr double kAllowance = 0.01;  // inner-solver slack on the ratio
  double worst_ratio = 0.0;
  long used = 0;
  for (int p = 0; p < pair_count; ++p) {
    Eigen::VectorXd x1(1), x2(1);
    x1(0) = 6.0 * stream.next_double() - 3.0;
    x2(0) = 6.0 * stream.next_double() - 3.0;
    const double gap = (x1 - x2).norm();
    if (gap < 1e-8) continue;  // 0/0 guard: coincident pair carries no ratio
    const Eigen::VectorXd p1 = prox(value, subgrad, rho, whole, x1, t, 2000)
                                   .prox_point;
    const Eigen::VectorXd p2 = prox(value, subgrad, rho, whole, x2, t, 2000)
                                   .prox_point;
    worst_ratio = std::max(worst_ratio, (p1 - p2).norm() / gap);
    ++used;
  }
  const double slack = bound + kAllowance - worst_ratio;
  return CheckReport{"prox_lipschitz", used, slack, 0.0, slack >= 0.0};
}

namespace {

constexpr std::uint64_t kCheckSeed = 0x5EEDC0DE;

Eigen::VectorXd simplex_weights(int count, RngStream& stream) {
  Eigen::VectorXd w(count);
  for (int i = 0; i < count; ++i) w(i) = stream.next_double() + 1e-9;
  return w / w.sum();
}

std::vector<Eigen::VectorXd> box_points(int count, int dim, double half_width,
                                        RngStream& stream) {
  std::vector<Eigen::VectorXd> pts(count);
  for (int i = 0; i < count; ++i) {
    pts[i].resize(dim);
    for (int d = 0; d < dim; ++d)
      pts[i](d) = half_width * (2.0 * stream.next_double() - 1.0);
  }
  return pts;
}

CheckReport combination_trials(const std::string& name, bool strong,
                               const ScalarFn& fn, double modulus, int dim,
                               double half_width, long trials) {
  double worst = std::numeric_limits<double>::infinity();
  for (long trial = 0; trial < trials; ++trial) {
    RngStream stream(kCheckSeed, name.c_str(), static_cast<std::uint64_t>(trial),
                     0);
    const int count = 2 + static_cast<int>(stream.next_below(4));
    const auto pts = box_points(count, dim, half_width, stream);
    const Eigen::VectorXd w = simplex_weights(count, stream);
    const double slack = strong
                             ? strong_combination_slack(fn, modulus, pts, w)
                             : weak_combination_slack(fn, modulus, pts, w);
    worst = std::min(worst, slack);
  }
  return CheckReport{name, trials, worst, 1e-9, worst >= -1e-9};
}

CheckReport projection_trials(const std::string& name, const FeasibleSet& set,
                              int dim, long pairs) {
  double worst = std::numeric_limits<double>::infinity();
  for (long trial = 0; trial < pairs; ++trial) {
    RngStream stream(kCheckSeed, name.c_str(), static_cast<std::uint64_t>(trial),
                     0);
    const auto pts = box_points(2, dim, 4.0, stream);
    const double before = (pts[0] - pts[1]).norm();
    const double after = (project(set, pts[0]) - project(set, pts[1])).norm();
    worst = std::min(worst, before - after);
  }
  return CheckReport{name, pairs, worst, 1e-10, worst >= -1e-10};
}

CheckReport qp_bound_trials(long trials) {
  double worst = std::numeric_limits<double>::infinity();
  for (long trial = 0; trial < trials; ++trial) {
    RngStream stream(kCheckSeed, "qp_bound_vs_brute",
                     static_cast<std::uint64_t>(trial), 0);
    const int N = 1 + static_cast<int>(trial % 3);
    const double a = 0.5 + 1.5 * stream.next_double();
    const double b = 0.5 * a * (0.05 + 0.95 * stream.next_double());
    const double c = 1.0 + 2.0 * stream.next_double();
    const double brute = qp_brute_force(N, a, b, c, 1e-3 * a);
    // The grid is a subset of the feasible set, so its minimum can never
    // undercut a valid lower bound for the exact program: slack >= 0 exactly.
    worst = std::min(worst, brute - qp_lower_bound(N, a, b, c));
  }
  return CheckReport{"qp_bound_vs_brute", trials, worst, 0.0, worst >= 0.0};
}

CheckReport convolution_trials() {
  // For every stepsize gamma_k = 1/(k+1)^q in the diminishing non-summable
  // family, the normalized convolution ratio stays uniformly bounded in T.
  constexpr double kRatioCap = 10.0;
  const double qs[] = {0.5, 0.75, 1.0};
  const double lambdas[] = {0.3, 0.6, 0.9};
  constexpr long kHorizon = 100000;
  double worst = std::numeric_limits<double>::infinity();
  long trials = 0;
  for (const double q : qs) {
    for (const double lambda : lambdas) {
      double sum = 0.0;  // S_T = lambda * S_{T-1} + gamma_{T-1}
      double max_ratio = 0.0;
      for (long T = 1; T <= kHorizon; ++T) {
        const double gamma = std::pow(static_cast<double>(T), -q);
        sum = lambda * sum + gamma;
        max_ratio = std::max(max_ratio, sum * (1.0 - lambda) / gamma);
      }
      worst = std::min(worst, kRatioCap - max_ratio);
      ++trials;
    }
  }
  return CheckReport{"convolution_ratio", trials, worst, 0.0, worst >= 0.0};
}

}  // namespace

std::vector<CheckReport> run_check_suite(const std::string& filter) {
  const auto wanted = [&filter](const char* name) {
    return filter.empty() || std::string(name).find(filter) != std::string::npos;
  };
  std::vector<CheckReport> reports;

  if (wanted("weak_combination_1d"))
    reports.push_back(combination_trials("weak_combination_1d", false,
                                         one_d_test_value, 2.0, 1, 3.0, 1000));

  if (wanted("weak_combination_jensen"))
    reports.push_back(combination_trials(
        "weak_combination_jensen", false,
        [](const Eigen::VectorXd& x) { return x.norm(); }, 0.0, 3, 3.0, 1000));

  if (wanted("weak_combination_phase")) {
    const PhaseRetrievalInstance inst =
        generate_instance(5, 2, 8, kCheckSeed);
    const PhaseRetrievalOracle oracle(inst);
    reports.push_back(combination_trials(
        "weak_combination_phase", false,
        [&oracle](const Eigen::VectorXd& x) { return oracle.value(0, x); },
        oracle.rho(), 5, 2.0, 1000));
  }

  if (wanted("strong_combination_sqnorm"))
    reports.push_back(combination_trials(
        "strong_combination_sqnorm", true,
        [](const Eigen::VectorXd& x) { return x.squaredNorm(); }, 2.0, 3, 3.0,
        1000));

  if (wanted("strong_combination_quadratic")) {
    double worst = std::numeric_limits<double>::infinity();
    constexpr long kTrials = 1000;
    for (long trial = 0; trial < kTrials; ++trial) {
      RngStream stream(kCheckSeed, "strong_combination_quadratic",
                       static_cast<std::uint64_t>(trial), 0);
      const int dim = 3;
      Eigen::MatrixXd M(dim, dim);
      for (int r = 0; r < dim; ++r)
        for (int col = 0; col < dim; ++col)
          M(r, col) = 2.0 * stream.next_double() - 1.0;
      const double tau = 0.5 + 2.5 * stream.next_double();
      const auto g = [&M, tau](const Eigen::VectorXd& x) {
        return 0.5 * (M * x).squaredNorm() + 0.5 * tau * x.squaredNorm();
      };
      const int count = 2 + static_cast<int>(stream.next_below(4));
      const auto pts = box_points(count, dim, 3.0, stream);
      const Eigen::VectorXd w = simplex_weights(count, stream);
      worst = std::min(worst, strong_combination_slack(g, tau, pts, w));
    }
    reports.push_back(CheckReport{"strong_combination_quadratic", kTrials,
                                  worst, 1e-9, worst >= -1e-9});
  }

  if (wanted("projection_whole"))
    reports.push_back(projection_trials("projection_whole",
                                        FeasibleSet::whole_space(), 5, 10000));

  if (wanted("projection_ball")) {
    Eigen::VectorXd center(5);
    center << 0.3, -0.2, 0.5, 0.0, -0.7;
    reports.push_back(projection_trials(
        "projection_ball", FeasibleSet::make_ball(center, 1.5), 5, 10000));
  }

  if (wanted("projection_box")) {
    Eigen::VectorXd lower = Eigen::VectorXd::Constant(5, -1.0);
    Eigen::VectorXd upper(5);
    upper << 0.5, 1.0, 2.0, 0.25, 1.5;
    reports.push_back(projection_trials(
        "projection_box", FeasibleSet::make_box(lower, upper), 5, 10000));
  }

  if (wanted("prox_lipschitz_1d")) {
    RngStream stream(kCheckSeed, "prox_lipschitz_1d", 0, 0);
    CheckReport report = check_prox_lipschitz(
        one_d_test_value, one_d_test_subgradient, 2.0, 0.1, 200, stream);
    report.name = "prox_lipschitz_1d";
    reports.push_back(report);
  }

  if (wanted("prox_nonexpansive_quadratic")) {
    RngStream stream(kCheckSeed, "prox_nonexpansive_quadratic", 0, 0);
    CheckReport report = check_prox_lipschitz(
        [](const Eigen::VectorXd& y) {
          const double d = y(0) - 1.0;
          return 0.5 * d * d;
        },
        [](const Eigen::VectorXd& y) {
          Eigen::VectorXd g(1);
          g(0) = y(0) - 1.0;
          return g;
        },
        0.0, 0.5, 200, stream);
    report.name = "prox_nonexpansive_quadratic";
    reports.push_back(report);
  }

  if (wanted("qp_bound_vs_brute")) reports.push_back(qp_bound_trials(100));

  if (wanted("convolution_ratio")) reports.push_back(convolution_trials());

  return reports;
}

}  // namespace dpsm
