#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "dpsm/objective.hpp"
#include "dpsm/rng.hpp"

using namespace dpsm;

namespace {

// Smallest possible instance with unit measurement: f(x) = |x^2 - 1|.
PhaseRetrievalInstance unit_instance() {
  PhaseRetrievalInstance inst;
  inst.n = 1;
  inst.N = 1;
  inst.m = 1;
  inst.w = {Eigen::MatrixXd::Ones(1, 1)};
  inst.y = Eigen::MatrixXd::Ones(1, 1);
  inst.ground_truth = Eigen::VectorXd::Ones(1);
  return inst;
}

Eigen::VectorXd random_point(int n, RngStream& s, double scale) {
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x(i) = scale * s.next_normal();
  return x;
}

}  // namespace

TEST_CASE("hand-checkable scalar objective and subgradient") {
  PhaseRetrievalInstance inst = unit_instance();
  Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 2.0);
  // f(2) = |4 - 1| = 3; g = sgn(3) * 2*2*1 = 4
  CHECK(value(inst, 0, x) == 3.0);
  CHECK(subgradient(inst, 0, x)(0) == 4.0);
}

TEST_CASE("observations are exact squared inner products") {
  PhaseRetrievalInstance inst = generate_instance(1, 1, 1, 1);
  const double ip = inst.w[0].row(0).dot(inst.ground_truth);
  CHECK(inst.y(0, 0) == ip * ip);

  PhaseRetrievalInstance big = generate_instance(7, 3, 5, 2);
  for (int i = 0; i < big.N; ++i)
    for (int j = 0; j < big.m; ++j) {
      const double t = big.w[i].row(j).dot(big.ground_truth);
      CHECK(big.y(i, j) == doctest::Approx(t * t).epsilon(1e-12));
    }
}

TEST_CASE("generated dimensions follow the requested shape") {
  PhaseRetrievalInstance inst = generate_instance(100, 10, 1000, 5);
  CHECK(inst.n == 100);
  CHECK(inst.N == 10);
  CHECK(inst.m == 1000);
  REQUIRE(inst.w.size() == 10);
  for (const auto& wi : inst.w) {
    CHECK(wi.rows() == 1000);
    CHECK(wi.cols() == 100);
  }
  CHECK(inst.y.rows() == 10);
  CHECK(inst.y.cols() == 1000);
  CHECK(inst.ground_truth.size() == 100);
}

TEST_CASE("instance generation replays bit for bit") {
  PhaseRetrievalInstance a = generate_instance(9, 3, 4, 42);
  PhaseRetrievalInstance b = generate_instance(9, 3, 4, 42);
  CHECK((a.ground_truth - b.ground_truth).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.y - b.y).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < 3; ++i)
    CHECK((a.w[i] - b.w[i]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("both signed ground truths are global minimizers") {
  PhaseRetrievalInstance inst = generate_instance(20, 4, 30, 7);
  for (int i = 0; i < inst.N; ++i) {
    CHECK(value(inst, i, inst.ground_truth) <= 1e-12);
    CHECK(value(inst, i, -inst.ground_truth) <= 1e-12);
  }
}

TEST_CASE("the objective is even and nonnegative") {
  PhaseRetrievalInstance inst = generate_instance(8, 3, 12, 13);
  RngStream s(99, "signal", 0, 0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd x = random_point(8, s, 2.0);
    const int agent = trial % inst.N;
    const double fx = value(inst, agent, x);
    CHECK(fx >= 0.0);
    CHECK(value(inst, agent, -x) == fx);  // exact: only signs flip inside
  }
}

TEST_CASE("evaluation rejects points of the wrong dimension") {
  PhaseRetrievalInstance inst = generate_instance(5, 2, 3, 1);
  Eigen::VectorXd bad = Eigen::VectorXd::Zero(6);
  CHECK_THROWS_AS(value(inst, 0, bad), std::invalid_argument);
  CHECK_THROWS_AS(subgradient(inst, 0, bad), std::invalid_argument);
}

TEST_CASE("the subgradient selection vanishes at the ground truth") {
  PhaseRetrievalInstance inst = generate_instance(12, 3, 9, 21);
  for (int i = 0; i < inst.N; ++i)
    CHECK(subgradient(inst, i, inst.ground_truth).norm() == 0.0);
}

TEST_CASE("subgradient matches finite differences away from kinks") {
  PhaseRetrievalInstance inst = generate_instance(6, 2, 10, 3);
  RngStream s(4, "signal", 1, 0);
  const double h = 1e-6;
  int accepted = 0;
  for (int attempt = 0; attempt < 5000 && accepted < 200; ++attempt) {
    Eigen::VectorXd x = random_point(6, s, 1.5);
    const int agent = attempt % inst.N;
    // keep clear of the absolute-value kinks so f is smooth near x
    double min_residual = 1e300;
    for (int j = 0; j < inst.m; ++j) {
      const double t = inst.w[agent].row(j).dot(x);
      min_residual = std::min(min_residual, std::abs(t * t - inst.y(agent, j)));
    }
    if (min_residual < 1e-3) continue;
    Eigen::VectorXd d = random_point(6, s, 1.0);
    d.normalize();
    const double fd = (value(inst, agent, x + h * d) -
                       value(inst, agent, x - h * d)) /
                      (2 * h);
    const double analytic = subgradient(inst, agent, x).dot(d);
    CHECK(std::abs(fd - analytic) <= 1e-5 * std::max(1.0, std::abs(analytic)));
    ++accepted;
  }
  CHECK(accepted == 200);
}

TEST_CASE("weak convexity holds with the oracle's modulus") {
  PhaseRetrievalInstance inst = generate_instance(5, 2, 6, 17);
  PhaseRetrievalOracle oracle(inst);
  const double rho = oracle.rho();
  RngStream s(31, "signal", 0, 0);
  double worst = 1e300;
  for (int trial = 0; trial < 10000; ++trial) {
    Eigen::VectorXd x = random_point(5, s, 2.0);
    Eigen::VectorXd y = random_point(5, s, 2.0);
    const double theta = s.next_double();
    const int agent = trial % inst.N;
    const double lhs = value(inst, agent, theta * x + (1 - theta) * y);
    const double rhs = theta * value(inst, agent, x) +
                       (1 - theta) * value(inst, agent, y) +
                       0.5 * rho * theta * (1 - theta) * (x - y).squaredNorm();
    worst = std::min(worst, rhs - lhs);
  }
  CHECK(worst >= -1e-9);
}

TEST_CASE("a single-datum agent makes batch one deterministic") {
  PhaseRetrievalInstance inst = generate_instance(4, 2, 1, 9);
  RngStream s(6, "batch", 0, 0);
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(4, -1.0, 2.0);
  Eigen::VectorXd st = stochastic_subgradient(inst, 1, x, 1, s);
  Eigen::VectorXd det = subgradient(inst, 1, x);
  CHECK((st - det).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("full-batch mode is deterministic and leaves the stream untouched") {
  PhaseRetrievalInstance inst = generate_instance(4, 2, 7, 9);
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(4, -1.0, 2.0);
  RngStream used(6, "batch", 0, 0);
  Eigen::VectorXd st = stochastic_subgradient(inst, 0, x, kFullBatch, used);
  Eigen::VectorXd det = subgradient(inst, 0, x);
  CHECK((st - det).cwiseAbs().maxCoeff() == 0.0);

  RngStream fresh(6, "batch", 0, 0);
  CHECK(used.next_u64() == fresh.next_u64());
}

TEST_CASE("single-sample draws average to the deterministic subgradient") {
  PhaseRetrievalInstance inst = generate_instance(3, 1, 5, 23);
  Eigen::VectorXd x(3);
  x << 0.7, -1.1, 0.4;
  Eigen::VectorXd det = subgradient(inst, 0, x);

  // exact per-datum subgradients give the exact sampling variance
  Eigen::VectorXd second_moment = Eigen::VectorXd::Zero(3);
  for (int j = 0; j < inst.m; ++j) {
    const double t = inst.w[0].row(j).dot(x);
    const double r = t * t - inst.y(0, j);
    const double sgn = r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0);
    Eigen::VectorXd gj = sgn * 2.0 * t * inst.w[0].row(j).transpose();
    second_moment += gj.cwiseProduct(gj);
  }
  second_moment /= inst.m;

  const int reps = 100000;
  RngStream s(8, "batch", 0, 0);
  Eigen::VectorXd avg = Eigen::VectorXd::Zero(3);
  for (int r = 0; r < reps; ++r)
    avg += stochastic_subgradient(inst, 0, x, 1, s);
  avg /= reps;

  for (int c = 0; c < 3; ++c) {
    const double var = second_moment(c) - det(c) * det(c);
    const double se = std::sqrt(std::max(var, 0.0) / reps);
    CHECK(std::abs(avg(c) - det(c)) <= 4 * se + 1e-12);
  }
}

TEST_CASE("stochastic draws replay exactly on identical streams") {
  PhaseRetrievalInstance inst = generate_instance(5, 3, 11, 2);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(5, 0.3);
  RngStream s1(3, "batch", 2, 17);
  RngStream s2(3, "batch", 2, 17);
  for (int k = 0; k < 20; ++k) {
    Eigen::VectorXd a = stochastic_subgradient(inst, 1, x, 4, s1);
    Eigen::VectorXd b = stochastic_subgradient(inst, 1, x, 4, s2);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("batch sizes outside the local dataset are rejected") {
  PhaseRetrievalInstance inst = generate_instance(4, 2, 6, 9);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(4);
  RngStream s(1, "batch", 0, 0);
  CHECK_THROWS_AS(stochastic_subgradient(inst, 0, x, 0, s),
                  std::invalid_argument);
  CHECK_THROWS_AS(stochastic_subgradient(inst, 0, x, 7, s),
                  std::invalid_argument);
}

TEST_CASE("scalar spectral initialization recovers the signal magnitude") {
  PhaseRetrievalInstance inst = unit_instance();
  inst.ground_truth(0) = -3.0;
  inst.y(0, 0) = 9.0;
  Eigen::VectorXd x0 = spectral_initialization(inst);
  REQUIRE(x0.size() == 1);
  CHECK(std::abs(x0(0) - 3.0) <= 1e-12);
}

TEST_CASE("zero observations give a zero initialization") {
  PhaseRetrievalInstance inst =
      generate_from_signal(Eigen::VectorXd::Zero(5), 2, 4, 3);
  CHECK(spectral_initialization(inst).norm() == 0.0);
}

TEST_CASE("spectral initialization lands near the signed signal pair") {
  // With 3n total measurements the start lands in the attraction basin
  // (relative distance below the signal scale); with 10n it is well inside.
  auto median_rel = [](int m_per_agent) {
    std::vector<double> rels;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      PhaseRetrievalInstance inst =
          generate_instance(100, 10, m_per_agent, seed);
      Eigen::VectorXd x0 = spectral_initialization(inst);
      rels.push_back(signed_distance(inst, x0).distance /
                     inst.ground_truth.norm());
    }
    std::sort(rels.begin(), rels.end());
    return 0.5 * (rels[9] + rels[10]);
  };
  CHECK(median_rel(30) < 1.0);
  CHECK(median_rel(100) < 0.7);
}

TEST_CASE("spectral initialization is deterministic") {
  PhaseRetrievalInstance inst = generate_instance(30, 4, 25, 11);
  Eigen::VectorXd a = spectral_initialization(inst);
  Eigen::VectorXd b = spectral_initialization(inst);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("signed distance reports the closer signed copy") {
  PhaseRetrievalInstance inst = generate_instance(7, 2, 5, 5);
  SignedDistance at_truth = signed_distance(inst, inst.ground_truth);
  CHECK(at_truth.distance == 0.0);
  CHECK(at_truth.sign == +1);

  SignedDistance at_neg = signed_distance(inst, -inst.ground_truth);
  CHECK(at_neg.distance == 0.0);
  CHECK(at_neg.sign == -1);

  SignedDistance at_zero =
      signed_distance(inst, Eigen::VectorXd::Zero(7));
  CHECK(at_zero.distance ==
        doctest::Approx(inst.ground_truth.norm()).epsilon(1e-14));
  CHECK(at_zero.sign == +1);  // ties break toward +1
}

TEST_CASE("sharpness probes report a positive modulus") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    PhaseRetrievalInstance inst = generate_instance(100, 10, 30, seed);
    RngStream s(seed, "sharpness", 0, 0);
    const double radius = 0.1 * inst.ground_truth.norm();
    SharpnessEstimate est = estimate_sharpness(inst, 50, radius, s);
    CHECK(est.kappa_hat > 0.0);
    CHECK(std::isfinite(est.kappa_hat));
    CHECK(est.sample_count > 0);
    CHECK(est.probe_radius == radius);
  }
}

TEST_CASE("the sharpness ratio along the signal ray is finite and positive") {
  PhaseRetrievalInstance inst = generate_instance(40, 5, 20, 6);
  PhaseRetrievalOracle oracle(inst);
  const Eigen::VectorXd g = inst.ground_truth;
  const Eigen::VectorXd x = 1.1 * g;
  const double denom = (x - g).norm() * (x + g).norm();
  const double ratio = oracle.global_value(x) / denom;
  CHECK(std::isfinite(ratio));
  CHECK(ratio > 0.0);
  // analytic value of the ratio on the ray: mean(y) / ||g||^2
  const double expected = inst.y.mean() / g.squaredNorm();
  CHECK(ratio == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("curvature bound on the scalar instance is exactly 2") {
  PhaseRetrievalInstance inst = unit_instance();
  CurvatureEstimate est = estimate_rho_and_l(inst, {});
  CHECK(est.rho_hat == 2.0);
  CHECK(est.l_hat == 0.0);  // no sample points, no trajectory bound
}

TEST_CASE("trajectory Lipschitz estimate equals the largest subgradient") {
  PhaseRetrievalInstance inst = generate_instance(6, 3, 8, 12);
  RngStream s(2, "signal", 0, 0);
  std::vector<Eigen::VectorXd> pts;
  for (int k = 0; k < 15; ++k) pts.push_back(random_point(6, s, 1.0));
  CurvatureEstimate est = estimate_rho_and_l(inst, pts);

  double expected_rho = 0.0;
  for (int i = 0; i < inst.N; ++i)
    for (int j = 0; j < inst.m; ++j)
      expected_rho =
          std::max(expected_rho, 2.0 * inst.w[i].row(j).squaredNorm());
  CHECK(est.rho_hat == doctest::Approx(expected_rho).epsilon(1e-14));

  double expected_l = 0.0;
  for (int i = 0; i < inst.N; ++i)
    for (const auto& x : pts)
      expected_l = std::max(expected_l, subgradient(inst, i, x).norm());
  CHECK(est.l_hat == doctest::Approx(expected_l).epsilon(1e-14));
}

TEST_CASE("the oracle view delegates to the free functions") {
  PhaseRetrievalInstance inst = generate_instance(6, 4, 9, 14);
  PhaseRetrievalOracle oracle(inst);
  CHECK(oracle.dimension() == 6);
  CHECK(oracle.agent_count() == 4);
  CHECK(oracle.local_data_count() == 9);

  RngStream s(5, "signal", 0, 0);
  Eigen::VectorXd x = random_point(6, s, 1.0);
  double mean = 0.0;
  for (int i = 0; i < 4; ++i) {
    CHECK(oracle.value(i, x) == value(inst, i, x));
    CHECK((oracle.subgradient(i, x) - subgradient(inst, i, x))
              .cwiseAbs()
              .maxCoeff() == 0.0);
    mean += value(inst, i, x);
  }
  mean /= 4;
  CHECK(oracle.global_value(x) == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("instances survive a save/load round trip byte for byte") {
  PhaseRetrievalInstance inst = generate_instance(7, 3, 5, 99);
  const std::string path = "/tmp/dpsm_test_objective_roundtrip.bin";
  save_instance(inst, path);
  PhaseRetrievalInstance back = load_instance(path);
  std::remove(path.c_str());

  CHECK(back.n == inst.n);
  CHECK(back.N == inst.N);
  CHECK(back.m == inst.m);
  CHECK(back.seed == inst.seed);
  CHECK((back.ground_truth - inst.ground_truth).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.y - inst.y).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < 3; ++i)
    CHECK((back.w[i] - inst.w[i]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("loading rejects foreign or missing files") {
  const std::string bad = "/tmp/dpsm_test_objective_badmagic.bin";
  {
    std::ofstream out(bad, std::ios::binary);
    out << "NOTMAGIC" << std::string(64, '\0');
  }
  CHECK_THROWS(load_instance(bad));
  std::remove(bad.c_str());
  CHECK_THROWS(load_instance("/tmp/dpsm_test_objective_missing.bin"));
}
