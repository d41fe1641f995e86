// Acceptance gate: one line per criterion, exit code = number of failures.
//
// Each criterion exercises the library end to end the way a user would, with
// tolerances fixed up front.  Temporary artifacts go to a fresh directory
// under /tmp that is removed on exit.

#include <unistd.h>

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dpsm/dataio.hpp"
#include "dpsm/geometry.hpp"
#include "dpsm/network.hpp"
#include "dpsm/objective.hpp"
#include "dpsm/rng.hpp"
#include "dpsm/solver.hpp"
#include "dpsm/theory_checks.hpp"

using namespace dpsm;

namespace {

int failures = 0;

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void report(int id, bool ok, const std::string& detail) {
  std::cout << "criterion " << id << ": " << (ok ? "PASS" : "FAIL") << " ("
            << detail << ")\n";
  if (!ok) ++failures;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream out;
  out.precision(digits);
  out << v;
  return out.str();
}

Eigen::VectorXd random_point(int n, RngStream& s, double scale) {
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x(i) = scale * s.next_normal();
  return x;
}

RunConfig base_linear_config() {
  RunConfig cfg = parse_config(
      "problem.n = 20\nproblem.N = 10\nproblem.m = 6\n"
      "problem.seed = 1\nnetwork.seed = 1\nnetwork.p = 0.5\n"
      "control.max_iterations = 5000\ncontrol.metric_stride = 1\n");
  return cfg;
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_ring_idx(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  write_be32(out, 0x00000803u);
  write_be32(out, 1u);
  write_be32(out, 28u);
  write_be32(out, 28u);
  for (int r = 0; r < 28; ++r)
    for (int c = 0; c < 28; ++c) {
      const double d = std::hypot(r - 13.5, c - 13.5);
      const double v = std::max(0.0, 1.0 - std::abs(d - 7.5) / 3.0);
      const unsigned char b =
          static_cast<unsigned char>(std::lround(v * 255.0));
      out.write(reinterpret_cast<const char*>(&b), 1);
    }
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------
// 1. Every executable theory check passes.

void criterion_1() {
  Timer timer;
  const std::vector<CheckReport> reports = run_check_suite("");
  bool ok = !reports.empty();
  std::string first_fail;
  for (const CheckReport& r : reports)
    if (!r.pass && first_fail.empty()) first_fail = r.name;
  ok = ok && first_fail.empty() && timer.seconds() < 60.0;
  std::string detail = std::to_string(reports.size()) + " checks, " +
                       fmt(timer.seconds(), 2) + "s";
  if (!first_fail.empty()) detail += ", first failure: " + first_fail;
  report(1, ok, detail);
}

// ---------------------------------------------------------------------------
// 2. Consensus geometry: exact spectral gap on the 3-node path; fitted decay
//    rate near 0.28 on fixed 400-node graphs with edge probability 0.3.

void criterion_2() {
  Timer timer;
  Graph p3{3, {{0, 1}, {1, 2}}};
  const double sigma2_path =
      second_singular_value(metropolis_weights(p3));
  const bool path_ok = std::abs(sigma2_path - 2.0 / 3) <= 1e-10;

  bool er_ok = true;
  double worst_dev = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto sched = MixingSchedule::fixed_er(400, 0.3, seed);
    PhiDecayFit fit = fit_phi_decay(consensus_decay_trace(sched, 30));
    const double dev = std::abs(fit.lambda_hat - 0.28);
    worst_dev = std::max(worst_dev, dev);
    er_ok = er_ok && !fit.flagged && dev <= 0.05;
  }
  const bool ok = path_ok && er_ok && timer.seconds() < 120.0;
  report(2, ok,
         "path gap dev " + fmt(std::abs(sigma2_path - 2.0 / 3), 2) +
             ", worst |lambda_hat - 0.28| = " + fmt(worst_dev) + " over 5 seeds, " +
             fmt(timer.seconds(), 2) + "s");
}

// ---------------------------------------------------------------------------
// 3. Oracle correctness: subgradients match finite differences away from
//    kinks; both signed signals evaluate to zero; the smoothed envelope's
//    gradient matches finite differences of the envelope everywhere tested.

void criterion_3() {
  Timer timer;
  PhaseRetrievalInstance inst = generate_instance(10, 4, 8, 11);
  RngStream s(101, "signal", 0, 0);
  const double h = 1e-6;
  int accepted = 0;
  double worst_rel = 0.0;
  for (int attempt = 0; attempt < 30000 && accepted < 1000; ++attempt) {
    Eigen::VectorXd x = random_point(10, s, 1.5);
    const int agent = attempt % inst.N;
    double min_residual = 1e300;
    for (int j = 0; j < inst.m; ++j) {
      const double t = inst.w[agent].row(j).dot(x);
      min_residual = std::min(min_residual, std::abs(t * t - inst.y(agent, j)));
    }
    if (min_residual < 1e-3) continue;
    Eigen::VectorXd d = random_point(10, s, 1.0);
    d.normalize();
    const double fd =
        (value(inst, agent, x + h * d) - value(inst, agent, x - h * d)) /
        (2 * h);
    const double analytic = subgradient(inst, agent, x).dot(d);
    worst_rel = std::max(worst_rel, std::abs(fd - analytic) /
                                        std::max(1.0, std::abs(analytic)));
    ++accepted;
  }
  const bool fd_ok = accepted == 1000 && worst_rel <= 1e-5;

  double worst_value = 0.0;
  for (int i = 0; i < inst.N; ++i) {
    worst_value = std::max(worst_value, value(inst, i, inst.ground_truth));
    worst_value = std::max(worst_value, value(inst, i, -inst.ground_truth));
  }
  const bool min_ok = worst_value <= 1e-12;

  PhaseRetrievalInstance env_inst = generate_instance(10, 4, 8, 13);
  PhaseRetrievalOracle oracle(env_inst);
  const double t = 0.25 / oracle.rho();
  const FeasibleSet whole = FeasibleSet::whole_space();
  RngStream se(103, "signal", 0, 0);
  double worst_env = 0.0;
  const double he = 1e-4;
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd x = random_point(10, se, 1.0);
    Eigen::VectorXd d = random_point(10, se, 1.0);
    d.normalize();
    ProxResult r = prox(oracle, whole, x, t, 2000);
    const double plus = prox(oracle, whole, x + he * d, t, 2000).envelope_value;
    const double minus =
        prox(oracle, whole, x - he * d, t, 2000).envelope_value;
    const double fd = (plus - minus) / (2 * he);
    const double analytic = r.envelope_gradient.dot(d);
    worst_env = std::max(worst_env, std::abs(fd - analytic) /
                                        std::max(1.0, std::abs(analytic)));
  }
  const bool env_ok = worst_env <= 1e-3;

  report(3, fd_ok && min_ok && env_ok,
         "1000 subgradient probes worst rel " + fmt(worst_rel) +
             ", minimizer value " + fmt(worst_value) +
             ", 50 envelope probes worst rel " + fmt(worst_env) + ", " +
             fmt(timer.seconds(), 2) + "s");
}

// ---------------------------------------------------------------------------
// 4. Linear convergence under a tuned geometric stepsize: on the scaled
//    instance (60 = 3*20 total measurements; 10-node fixed graph), at least
//    one grid cell reaches a mean relative distance of 1e-6 within 5000
//    rounds and its fitted per-round rate lies in [gamma - 0.02, 1).

std::optional<RunConfig> winner_config;  // shared with criteria 5, 7, 9
double winner_gamma = 0.0;
double grid_sigma2 = 0.0;

void criterion_4() {
  Timer timer;
  RunConfig base = base_linear_config();
  grid_sigma2 = second_singular_value(
      MixingSchedule::fixed_er(base.N, base.p, base.network_seed).matrix_at(0));

  RunConfig probe = base;
  probe.max_iterations = 0;
  const double signal = run(probe).signal_norm;
  const double tol = std::pow(1e-6 * signal, 2);

  bool grid_above_gap = true;
  std::string winner_note = "no grid cell reached the tolerance";
  for (double gamma : {0.97, 0.98, 0.99}) {
    grid_above_gap = grid_above_gap && gamma >= grid_sigma2;
    for (double mu0 : {0.03, 0.1, 0.3}) {
      RunConfig cfg = base;
      cfg.gamma = gamma;
      cfg.mu0 = mu0;
      cfg.stop_tol = tol;
      RunRecord record = run(cfg);
      if (record.status != RunStatus::reached_tolerance) continue;
      RateFit fit = fit_linear_rate(record, 200);
      if (fit.flagged) continue;
      if (fit.rate_hat >= gamma - 0.02 && fit.rate_hat < 1.0 &&
          !winner_config) {
        winner_config = cfg;
        winner_gamma = gamma;
        winner_note = "winner gamma=" + fmt(gamma, 3) + " mu0=" + fmt(mu0, 3) +
                      " reached at k=" + std::to_string(record.rows.back().k) +
                      " rate_hat=" + fmt(fit.rate_hat) +
                      " r2=" + fmt(fit.r_squared, 6);
      }
    }
  }
  const bool ok =
      grid_above_gap && winner_config.has_value() && timer.seconds() < 120.0;
  report(4, ok,
         "sigma2=" + fmt(grid_sigma2) + ", " + winner_note + ", " +
             fmt(timer.seconds(), 2) + "s");
}

// ---------------------------------------------------------------------------
// 5. Stepsize decay slower than consensus mixing is needed: a ratio well
//    below the spectral gap fails for every scale in the grid, while a ratio
//    above the gap (the criterion-4 winner) succeeds.

void criterion_5() {
  Timer timer;
  if (!winner_config) {
    report(5, false, "skipped: criterion 4 produced no winner");
    return;
  }
  RunConfig base = base_linear_config();
  RunConfig probe = base;
  probe.max_iterations = 0;
  const double signal = run(probe).signal_norm;
  const double tol = std::pow(1e-6 * signal, 2);

  const double gamma_fail = std::max(grid_sigma2 - 0.2, 0.05);
  bool all_failed = true;
  for (double mu0 : {0.03, 0.1, 0.3}) {
    RunConfig cfg = base;
    cfg.gamma = gamma_fail;
    cfg.mu0 = mu0;
    cfg.stop_tol = tol;
    RunRecord record = run(cfg);
    all_failed = all_failed && record.status != RunStatus::reached_tolerance;
  }
  const bool success_leg = winner_gamma >= grid_sigma2 + 0.05;
  report(5, all_failed && success_leg,
         "gamma=" + fmt(gamma_fail) + " failed for all 3 scales; gamma=" +
             fmt(winner_gamma, 3) + " >= sigma2+0.05 = " +
             fmt(grid_sigma2 + 0.05) + " succeeded, " + fmt(timer.seconds(), 2) +
             "s");
}

// ---------------------------------------------------------------------------
// 6. Stochastic single-sample runs keep making progress: the best envelope
//    gradient seen by round 10000 improves on the best by round 2500 by at
//    least 40%, for each of three problem seeds.

void criterion_6() {
  Timer timer;
  bool ok = true;
  std::string ratios;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    RunConfig cfg = parse_config(
        "problem.n = 50\nproblem.N = 10\nproblem.m = 100\n"
        "network.seed = 1\nnetwork.p = 0.5\n"
        "method.name = stodpsm\nmethod.batch_size = 1\n"
        "stepsize.variant = epoch_polynomial\nstepsize.a = 7e-4\n"
        "stepsize.q = 0.5\nstepsize.epoch_length = 100\n"
        "control.max_iterations = 10000\ncontrol.metric_stride = 100\n"
        "control.envelope_stride = 500\n");
    cfg.seed = seed;
    RunRecord record = run(cfg);
    double best_early = 1e300;
    double best_all = 1e300;
    for (const MetricRow& row : record.rows) {
      if (!row.env_grad) continue;
      const double sq = (*row.env_grad) * (*row.env_grad);
      if (row.k <= 2500) best_early = std::min(best_early, sq);
      best_all = std::min(best_all, sq);
    }
    const double ratio = best_all / best_early;
    if (!ratios.empty()) ratios += " ";
    ratios += fmt(ratio, 3);
    ok = ok && record.status == RunStatus::completed && ratio <= 0.6;
  }
  report(6, ok,
         "best-envelope ratios (10000 vs 2500 rounds): " + ratios + ", " +
             fmt(timer.seconds(), 2) + "s");
}

// ---------------------------------------------------------------------------
// 7. A full-batch stochastic run is byte-identical to the deterministic run
//    it canonicalizes to.

void criterion_7() {
  Timer timer;
  if (!winner_config) {
    report(7, false, "skipped: criterion 4 produced no winner");
    return;
  }
  RunConfig det = *winner_config;
  det.method = Method::dpsm;
  RunConfig sto = *winner_config;
  sto.method = Method::stodpsm;
  sto.batch_size = kFullBatch;
  const std::string a = run(det).to_csv();
  const std::string b = run(sto).to_csv();
  report(7, a == b,
         std::string("csv bytes ") + (a == b ? "identical" : "DIFFER") + ", " +
             fmt(timer.seconds(), 2) + "s");
}

// ---------------------------------------------------------------------------
// 8. Image recovery end to end: a 14x14 downsampled synthetic digit is
//    recovered to 1e-4 relative distance and the rendered image matches a
//    direct rendering of the input pixels to within one gray level.

void criterion_8() {
  Timer timer;
  char tmpl[] = "/tmp/dpsm_acceptance_XXXXXX";
  const char* dir = mkdtemp(tmpl);
  if (!dir) {
    report(8, false, "could not create a temporary directory");
    return;
  }
  const std::string idx = std::string(dir) + "/ring.idx";
  const std::string pgm = std::string(dir) + "/recovered.pgm";
  const std::string ref_pgm = std::string(dir) + "/reference.pgm";
  write_ring_idx(idx);

  RunConfig cfg = parse_config(
      "problem.source = mnist\nproblem.mnist_path = " + idx +
      "\nproblem.mnist_downsample = 2\n"
      "problem.n = 196\nproblem.N = 14\nproblem.m = 42\n"
      "problem.seed = 1\nnetwork.seed = 1\nnetwork.p = 0.5\n"
      "stepsize.mu0 = 0.03\nstepsize.gamma = 0.99\n"
      "control.max_iterations = 5000\ncontrol.metric_stride = 10\n");
  RunConfig probe = cfg;
  probe.max_iterations = 0;
  const double signal = run(probe).signal_norm;
  cfg.stop_tol = std::pow(1e-4 * signal, 2);
  cfg.image_path = pgm;
  RunRecord record = run(cfg);
  const double rel =
      std::sqrt(record.rows.back().mean_sq_dist) / signal;
  const bool reached = record.status == RunStatus::reached_tolerance;

  MnistImage img = load_mnist_image(idx, 0, 2);
  write_image_pgm(img.pixels, img.rows, img.cols, ref_pgm);
  const std::string got = slurp(pgm);
  const std::string want = slurp(ref_pgm);
  const std::string header = "P5\n14 14\n255\n";
  bool image_ok = got.size() == want.size() &&
                  got.size() == header.size() + 196 &&
                  got.substr(0, header.size()) == header;
  int worst_pixel = 0;
  if (image_ok)
    for (std::size_t i = header.size(); i < got.size(); ++i) {
      const int diff = std::abs(int(static_cast<unsigned char>(got[i])) -
                                int(static_cast<unsigned char>(want[i])));
      worst_pixel = std::max(worst_pixel, diff);
    }
  image_ok = image_ok && worst_pixel <= 1;

  std::remove(idx.c_str());
  std::remove(pgm.c_str());
  std::remove(ref_pgm.c_str());
  rmdir(dir);

  const bool ok = reached && rel <= 1e-4 && image_ok && timer.seconds() < 300.0;
  report(8, ok,
         "relative distance " + fmt(rel) + " at k=" +
             std::to_string(record.rows.back().k) + ", worst pixel delta " +
             std::to_string(worst_pixel) + ", " + fmt(timer.seconds(), 2) + "s");
}

// ---------------------------------------------------------------------------
// 9. Thread-count independence: the same run on 1, 4, and again 1 worker
//    threads produces byte-identical serialized records.

void criterion_9() {
  Timer timer;
  if (!winner_config) {
    report(9, false, "skipped: criterion 4 produced no winner");
    return;
  }
  const std::string one = run(*winner_config, 1).to_csv();
  const std::string four = run(*winner_config, 4).to_csv();
  const std::string one_again = run(*winner_config, 1).to_csv();
  const bool ok = one == four && one == one_again;
  report(9, ok,
         std::string("1 vs 4 vs 1 threads ") + (ok ? "identical" : "DIFFER") +
             ", " + fmt(timer.seconds(), 2) + "s");
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  return failures;
}
