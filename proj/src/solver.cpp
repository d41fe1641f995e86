#include "dpsm/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dpsm/theory_checks.hpp"

namespace dpsm {

namespace {

constexpr double kDivergenceGuard = 1e8;

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Run body(0..count-1) on up to `threads` threads.  Each index writes only
/// its own slot, so the schedule cannot affect results.
void parallel_for(int count, int threads, const std::function<void(int)>& body) {
  const int used = std::min(std::max(threads, 1), count);
  if (used <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(used);
  for (int t = 0; t < used; ++t)
    pool.emplace_back([&body, t, used, count] {
      for (int i = t; i < count; i += used) body(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace

StepsizePolicy StepsizePolicy::polynomial(double a, double q) {
  if (!(a >= 0.0)) throw std::invalid_argument("stepsize scale must be >= 0");
  if (!(q > 0.0 && q <= 1.0))
    throw std::invalid_argument("stepsize exponent must be in (0, 1]");
  StepsizePolicy p;
  p.variant_ = StepsizeVariant::polynomial;
  p.a_ = a;
  p.q_ = q;
  return p;
}

StepsizePolicy StepsizePolicy::geometric(double mu0, double gamma) {
  if (!(mu0 >= 0.0)) throw std::invalid_argument("stepsize scale must be >= 0");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("stepsize ratio must be in (0, 1)");
  StepsizePolicy p;
  p.variant_ = StepsizeVariant::geometric;
  p.mu0_ = mu0;
  p.gamma_ = gamma;
  return p;
}

StepsizePolicy StepsizePolicy::epoch_polynomial(double a, double q,
                                                long epoch_length) {
  StepsizePolicy p = polynomial(a, q);
  if (epoch_length < 1)
    throw std::invalid_argument("epoch length must be >= 1");
  p.variant_ = StepsizeVariant::epoch_polynomial;
  p.epoch_length_ = epoch_length;
  return p;
}

StepsizePolicy StepsizePolicy::from_config(const RunConfig& config) {
  switch (config.variant) {
    case StepsizeVariant::polynomial:
      return polynomial(config.a, config.q);
    case StepsizeVariant::geometric:
      return geometric(config.mu0, config.gamma);
    case StepsizeVariant::epoch_polynomial:
      return epoch_polynomial(
          config.a, config.q,
          config.epoch_length == 0 ? config.m : config.epoch_length);
  }
  throw std::logic_error("unreachable stepsize variant");
}

double StepsizePolicy::alpha(long k) const {
  if (k < 0) throw std::invalid_argument("round index must be >= 0");
  switch (variant_) {
    case StepsizeVariant::polynomial:
      return a_ / std::pow(static_cast<double>(k + 1), q_);
    case StepsizeVariant::geometric:
      return mu0_ * std::pow(gamma_, static_cast<double>(k));
    case StepsizeVariant::epoch_polynomial:
      return a_ /
             std::pow(static_cast<double>(k / epoch_length_ + 1), q_);
  }
  throw std::logic_error("unreachable stepsize variant");
}

double AgentStates::consensus_error() const {
  const Eigen::VectorXd mean_vec = iterates.rowwise().mean();
  return (iterates.colwise() - mean_vec).norm();
}

namespace {

void check_round_inputs(const AgentStates& states,
                        const MixingSchedule& schedule,
                        const ObjectiveOracle& oracle) {
  if (states.iterates.rows() != oracle.dimension())
    throw std::invalid_argument("iterate dimension does not match the oracle");
  if (states.iterates.cols() != oracle.agent_count())
    throw std::invalid_argument("agent count does not match the oracle");
  if (schedule.node_count() != oracle.agent_count())
    throw std::invalid_argument("schedule node count does not match the oracle");
}

/// Shared mix-step-project body; grad_at(i, v) supplies agent i's direction.
void mixed_round(AgentStates& states, const MixingSchedule& schedule,
                 const FeasibleSet& set, const StepsizePolicy& policy,
                 int threads,
                 const std::function<Eigen::VectorXd(int, const Eigen::VectorXd&)>&
                     grad_at) {
  const double alpha = policy.alpha(states.k);
  const MixingMatrix a = schedule.matrix_at(states.k);
  const Eigen::MatrixXd mixed = states.iterates * a.weights.transpose();
  Eigen::MatrixXd next(states.iterates.rows(), states.iterates.cols());
  parallel_for(static_cast<int>(states.iterates.cols()), threads, [&](int i) {
    const Eigen::VectorXd v = mixed.col(i);
    next.col(i) = project(set, v - alpha * grad_at(i, v));
  });
  states.iterates = std::move(next);
  ++states.k;
}

}  // namespace

void dpsm_round(AgentStates& states, const MixingSchedule& schedule,
                const ObjectiveOracle& oracle, const FeasibleSet& set,
                const StepsizePolicy& policy, int threads) {
  check_round_inputs(states, schedule, oracle);
  mixed_round(states, schedule, set, policy, threads,
              [&oracle](int i, const Eigen::VectorXd& v) {
                return oracle.subgradient(i, v);
              });
}

void stodpsm_round(AgentStates& states, const MixingSchedule& schedule,
                   const ObjectiveOracle& oracle, const FeasibleSet& set,
                   const StepsizePolicy& policy, int batch,
                   std::vector<RngStream>& streams, int threads) {
  check_round_inputs(states, schedule, oracle);
  if (batch == kFullBatch) {
    dpsm_round(states, schedule, oracle, set, policy, threads);
    return;
  }
  if (batch < 1) throw std::invalid_argument("batch must be >= 1 or full");
  if (streams.size() != static_cast<std::size_t>(oracle.agent_count()))
    throw std::invalid_argument("need exactly one stream per agent");
  mixed_round(states, schedule, set, policy, threads,
              [&oracle, batch, &streams](int i, const Eigen::VectorXd& v) {
                return oracle.stochastic_subgradient(i, v, batch, streams[i]);
              });
}

Eigen::VectorXd centralized_round(const Eigen::VectorXd& x, long k,
                                  const ObjectiveOracle& oracle,
                                  const FeasibleSet& set,
                                  const StepsizePolicy& policy,
                                  CentralMode mode, int batch,
                                  RngStream& stream) {
  if (x.size() != oracle.dimension())
    throw std::invalid_argument("iterate dimension does not match the oracle");
  const double alpha = policy.alpha(k);
  const long total = static_cast<long>(oracle.agent_count()) *
                     oracle.local_data_count();
  Eigen::VectorXd g;
  if (mode == CentralMode::deterministic || batch == kFullBatch ||
      static_cast<long>(batch) >= total) {
    g = oracle.global_subgradient(x);
  } else {
    if (batch < 1) throw std::invalid_argument("batch must be >= 1 or full");
    g = Eigen::VectorXd::Zero(x.size());
    for (int b = 0; b < batch; ++b) {
      const int agent = static_cast<int>(
          stream.next_below(static_cast<std::uint64_t>(oracle.agent_count())));
      g += oracle.stochastic_subgradient(agent, x, 1, stream);
    }
    g /= static_cast<double>(batch);
  }
  return project(set, x - alpha * g);
}

std::string RunRecord::to_csv() const {
  std::ostringstream out;
  std::istringstream cfg_lines(render_config(config));
  std::string line;
  while (std::getline(cfg_lines, line)) out << "# " << line << '\n';
  out << "# rho_hat = " << fmt_real(rho_hat) << '\n'
      << "# l_hat = " << fmt_real(l_hat) << '\n'
      << "# kappa_hat = " << fmt_real(kappa_hat) << '\n'
      << "# signal_norm = " << fmt_real(signal_norm) << '\n'
      << "# sign = " << sign << '\n'
      << "# status = ";
  switch (status) {
    case RunStatus::completed: out << "completed"; break;
    case RunStatus::reached_tolerance: out << "reached_tolerance"; break;
    case RunStatus::diverged: out << "diverged"; break;
  }
  out << '\n' << "k,alpha,mean_sq_dist,consensus,objective,sigma2,env_grad\n";
  for (const MetricRow& row : rows) {
    out << row.k << ',' << fmt_real(row.alpha) << ','
        << fmt_real(row.mean_sq_dist) << ',' << fmt_real(row.consensus) << ','
        << fmt_real(row.objective) << ',';
    if (row.sigma2) out << fmt_real(*row.sigma2);
    out << ',';
    if (row.env_grad) out << fmt_real(*row.env_grad);
    out << '\n';
  }
  return out.str();
}

void RunRecord::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  const std::string text = to_csv();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("I/O failure writing '" + path + "'");
}

RunRecord run(const RunConfig& config, int threads,
              const std::optional<Eigen::VectorXd>& initial) {
  validate_config(config);
  RunConfig cfg = config;
  // A full batch makes the stochastic methods coincide with their
  // deterministic counterparts; canonicalize so equal behavior means equal
  // output bytes.
  if (cfg.method == Method::stodpsm && cfg.batch_size == kFullBatch)
    cfg.method = Method::dpsm;
  if (cfg.method == Method::stocsub && cfg.batch_size == kFullBatch)
    cfg.method = Method::csub;
  if (cfg.variant == StepsizeVariant::epoch_polynomial && cfg.epoch_length == 0)
    cfg.epoch_length = cfg.m;

  PhaseRetrievalInstance inst;
  if (cfg.source == ProblemSource::synthetic) {
    inst = generate_instance(cfg.n, cfg.N, cfg.m, cfg.seed);
  } else {
    const MnistImage img =
        load_mnist_image(cfg.mnist_path, cfg.mnist_index, cfg.mnist_downsample);
    const long pixel_count = static_cast<long>(img.rows) * img.cols;
    if (pixel_count != cfg.n)
      throw std::runtime_error(
          "problem.n = " + std::to_string(cfg.n) + " but the image provides " +
          std::to_string(pixel_count) + " pixels after downsampling");
    const Eigen::VectorXd signal = Eigen::Map<const Eigen::VectorXd>(
        img.pixels.data(), static_cast<Eigen::Index>(pixel_count));
    inst = generate_from_signal(signal, cfg.N, cfg.m, cfg.seed);
  }
  const PhaseRetrievalOracle oracle(inst);
  const FeasibleSet set = FeasibleSet::whole_space();
  const StepsizePolicy policy = StepsizePolicy::from_config(cfg);

  const bool centralized =
      cfg.method == Method::csub || cfg.method == Method::stocsub;
  std::optional<MixingSchedule> schedule;
  if (!centralized)
    schedule = cfg.mode == NetworkMode::fixed
                   ? MixingSchedule::fixed_er(cfg.N, cfg.p, cfg.network_seed)
                   : MixingSchedule::resample_er(cfg.N, cfg.p, cfg.network_seed,
                                                 cfg.B);

  Eigen::VectorXd x0 = initial ? *initial : spectral_initialization(inst);
  if (x0.size() != inst.n)
    throw std::invalid_argument("initial point dimension does not match");
  const SignedDistance sd = signed_distance(inst, x0);
  const Eigen::VectorXd target = sd.sign * inst.ground_truth;

  RunRecord record;
  record.config = cfg;
  record.rho_hat = oracle.rho();
  {
    std::vector<Eigen::VectorXd> pts{x0, inst.ground_truth,
                                     -inst.ground_truth};
    record.l_hat = estimate_rho_and_l(inst, pts).l_hat;
  }
  {
    RngStream sharp_stream(cfg.seed, "sharpness", 0, 0);
    record.kappa_hat =
        estimate_sharpness(inst, 200, 0.1 * inst.ground_truth.norm(),
                           sharp_stream)
            .kappa_hat;
  }
  record.signal_norm = inst.ground_truth.norm();
  record.sign = sd.sign;

  const double t = cfg.t_factor / record.rho_hat;
  const bool resample = !centralized && cfg.mode == NetworkMode::resample;

  AgentStates states;
  states.iterates = x0.replicate(1, centralized ? 1 : cfg.N);
  states.k = 0;

  const auto mean_sq_dist = [&states, &target]() {
    double total = 0.0;
    for (Eigen::Index i = 0; i < states.iterates.cols(); ++i)
      total += (states.iterates.col(i) - target).squaredNorm();
    return total / static_cast<double>(states.iterates.cols());
  };

  for (long k = 0;; ++k) {
    const double msd = mean_sq_dist();
    const bool diverged =
        !states.iterates.allFinite() ||
        states.iterates.colwise().norm().maxCoeff() > kDivergenceGuard;
    const bool reached = cfg.stop_tol > 0.0 && msd < cfg.stop_tol;
    const bool final_round = k == cfg.max_iterations;
    const bool env_due = !diverged && cfg.envelope_stride > 0 &&
                         k % cfg.envelope_stride == 0;
    if (k % cfg.metric_stride == 0 || env_due || final_round || diverged ||
        reached) {
      MetricRow row;
      row.k = k;
      row.alpha = policy.alpha(k);
      row.mean_sq_dist = msd;
      row.consensus = centralized ? 0.0 : states.consensus_error();
      const Eigen::VectorXd mean_iterate = states.mean();
      row.objective = oracle.global_value(mean_iterate);
      if (resample) row.sigma2 = second_singular_value(schedule->matrix_at(k));
      if (env_due)
        row.env_grad =
            moreau_gradient_norm(oracle, set, mean_iterate, t, cfg.inner_budget);
      record.rows.push_back(std::move(row));
    }
    if (diverged) {
      record.status = RunStatus::diverged;
      break;
    }
    if (reached) {
      record.status = RunStatus::reached_tolerance;
      break;
    }
    if (final_round) {
      record.status = RunStatus::completed;
      break;
    }

    switch (cfg.method) {
      case Method::dpsm:
        dpsm_round(states, *schedule, oracle, set, policy, threads);
        break;
      case Method::stodpsm: {
        std::vector<RngStream> streams;
        streams.reserve(static_cast<std::size_t>(cfg.N));
        for (int i = 0; i < cfg.N; ++i)
          streams.push_back(derive_stream(cfg.seed, "batch",
                                          static_cast<std::uint64_t>(i),
                                          static_cast<std::uint64_t>(k)));
        stodpsm_round(states, *schedule, oracle, set, policy, cfg.batch_size,
                      streams, threads);
        break;
      }
      case Method::csub:
      case Method::stocsub: {
        RngStream stream =
            derive_stream(cfg.seed, "batch", 0, static_cast<std::uint64_t>(k));
        const CentralMode mode = cfg.method == Method::csub
                                     ? CentralMode::deterministic
                                     : CentralMode::stochastic;
        states.iterates.col(0) =
            centralized_round(states.iterates.col(0), k, oracle, set, policy,
                              mode, cfg.batch_size, stream);
        states.k = k + 1;
        break;
      }
    }
  }
  if (!cfg.csv_path.empty()) record.write_csv(cfg.csv_path);
  if (!cfg.image_path.empty() && cfg.source == ProblemSource::mnist) {
    const Eigen::VectorXd mean_iterate = states.mean();
    std::vector<double> pixels(mean_iterate.data(),
                               mean_iterate.data() + mean_iterate.size());
    const int out_rows = static_cast<int>(std::lround(
        std::sqrt(static_cast<double>(cfg.n))));
    // Images are square throughout (28x28 or its downsamples); fall back to
    // a single row if the dimension is not a perfect square.
    if (out_rows * out_rows == cfg.n)
      write_image_pgm(pixels, out_rows, out_rows, cfg.image_path);
    else
      write_image_pgm(pixels, 1, cfg.n, cfg.image_path);
  }
  return record;
}

RateFit fit_linear_rate(const RunRecord& record, long burn_in) {
  std::vector<std::pair<double, double>> pts;
  for (const MetricRow& row : record.rows) {
    if (row.k < burn_in) continue;
    if (row.mean_sq_dist == 0.0) return RateFit{0.0, 0.0, true};
    if (!std::isfinite(row.mean_sq_dist) || row.mean_sq_dist < 0.0) continue;
    pts.emplace_back(static_cast<double>(row.k), std::log(row.mean_sq_dist));
  }
  if (pts.size() < 10)
    throw std::invalid_argument(
        "need at least 10 post-burn-in rows with positive distances");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [x, y] : pts) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double count = static_cast<double>(pts.size());
  const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / count;
  double ss_res = 0, ss_tot = 0;
  const double y_mean = sy / count;
  for (const auto& [x, y] : pts) {
    const double fitted = intercept + slope * x;
    ss_res += (y - fitted) * (y - fitted);
    ss_tot += (y - y_mean) * (y - y_mean);
  }
  RateFit fit;
  fit.rate_hat = std::exp(slope / 2.0);
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

RateConstants compute_rate_constants(const PhaseRetrievalInstance& inst,
                                     const MixingSchedule& schedule,
                                     const Eigen::MatrixXd& initial_states,
                                     double Gamma, double Lambda,
                                     double delta) {
  if (initial_states.rows() != inst.n || initial_states.cols() != inst.N)
    throw std::invalid_argument("initial states must be n x N");
  if (!(Gamma >= std::sqrt(2.0)))
    throw std::invalid_argument("Gamma must be >= sqrt(2)");
  if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");

  RateConstants rc;
  rc.Gamma = Gamma;
  rc.Lambda = Lambda;
  rc.delta = delta;

  const PhiDecayFit fit = fit_phi_decay(consensus_decay_trace(schedule, 60));
  rc.c = fit.c_hat;
  rc.lambda = fit.lambda_hat;
  if (fit.flagged || !(rc.lambda > 0.0) || rc.lambda >= 1.0) {
    rc.vacuous = true;  // one-step or non-contracting consensus: nothing to certify
    return rc;
  }
  if (!(Lambda > rc.lambda && Lambda < 1.0))
    throw std::invalid_argument("Lambda must lie in (lambda, 1)");

  std::vector<Eigen::VectorXd> pts;
  for (Eigen::Index i = 0; i < initial_states.cols(); ++i)
    pts.push_back(initial_states.col(i));
  pts.push_back(inst.ground_truth);
  pts.push_back(-inst.ground_truth);
  const CurvatureEstimate curv = estimate_rho_and_l(inst, pts);
  const double rho = curv.rho_hat;
  const double L = curv.l_hat;

  RngStream sharp_stream(inst.seed, "sharpness", 0, 0);
  const double kappa =
      estimate_sharpness(inst, 200, 0.1 * inst.ground_truth.norm(),
                         sharp_stream)
          .kappa_hat;
  rc.beta = kappa * inst.ground_truth.norm();
  rc.B_sharp = 2.0 * rc.beta / rho;
  rc.beta_le_l = rc.beta <= L;
  rc.gamma = std::pow(rc.lambda, delta);

  const Eigen::VectorXd mean0 = initial_states.rowwise().mean();
  const SignedDistance sd = signed_distance(inst, mean0);
  const Eigen::VectorXd target = sd.sign * inst.ground_truth;
  const double N = static_cast<double>(inst.N);
  double sum_sq = 0.0, max_sq = 0.0;
  for (Eigen::Index i = 0; i < initial_states.cols(); ++i) {
    const double d2 = (initial_states.col(i) - target).squaredNorm();
    sum_sq += d2;
    max_sq = std::max(max_sq, d2);
  }
  const double rms0 = std::sqrt(sum_sq / N);
  const double delta0 = (initial_states.colwise() - mean0).norm();

  rc.e0 = std::min(std::max(rc.beta / (rho * Gamma), rms0), rc.B_sharp / Gamma);
  rc.a = 2.0 * (L + rc.beta) * L / (rc.lambda * rc.lambda);
  rc.q_const = (2.0 * rc.beta / Gamma) * rc.e0 - rho * rc.e0 * rc.e0 -
               (2.0 * (L + rc.beta) * rc.c / (std::sqrt(N) * rc.lambda)) *
                   delta0;

  rc.init_sum_ok =
      sum_sq <= (N / (Gamma * Gamma)) *
                    std::min(std::pow(2.0 * rc.beta / rho, 2),
                             rc.B_sharp * rc.B_sharp);
  rc.init_spread_ok = max_sq <= (Gamma * Gamma / N) * sum_sq;
  rc.init_consensus_ok =
      delta0 < ((2.0 * rc.beta / Gamma) * rc.e0 - rho * rc.e0 * rc.e0) *
                   rc.lambda / (2.0 * (L + rc.beta) * rc.c);

  if (rc.q_const > 0.0) {
    const double denom =
        10.0 * std::sqrt(N) *
        (rc.a * rc.lambda + L * L + rc.a * rc.c * Lambda / (1.0 - Lambda));
    rc.mu0_bound =
        std::min(rc.e0 / (2.0 * rc.beta - rho * rc.e0), rc.q_const / denom);
  } else {
    rc.vacuous = true;
  }
  return rc;
}

}  // namespace dpsm
