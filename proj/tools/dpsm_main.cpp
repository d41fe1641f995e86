#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dpsm/dataio.hpp"
#include "dpsm/network.hpp"
#include "dpsm/solver.hpp"
#include "dpsm/theory_checks.hpp"

namespace {

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

const char* status_name(dpsm::RunStatus status) {
  switch (status) {
    case dpsm::RunStatus::completed: return "completed";
    case dpsm::RunStatus::reached_tolerance: return "reached_tolerance";
    case dpsm::RunStatus::diverged: return "diverged";
  }
  return "unknown";
}

/// Execute a prepared config, print the one-line summary, map the status to
/// the exit code (0 ok, 2 diverged).  The summary's mean_sq_dist and
/// objective are printed with the CSV's own formatting.
int execute(const dpsm::RunConfig& config, int threads) {
  const auto start = std::chrono::steady_clock::now();
  const dpsm::RunRecord record = dpsm::run(config, threads);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  const dpsm::MetricRow& last = record.rows.back();
  std::string rate = "n/a";
  try {
    rate = fmt_real(dpsm::fit_linear_rate(record, last.k / 2).rate_hat);
  } catch (const std::exception&) {
    // too few rows for a fit; the summary simply omits it
  }
  std::cout << "status=" << status_name(record.status) << " k=" << last.k
            << " mean_sq_dist=" << fmt_real(last.mean_sq_dist)
            << " objective=" << fmt_real(last.objective) << " rate_hat=" << rate
            << " sign=" << record.sign << " wall_s=";
  char wall_buf[32];
  std::snprintf(wall_buf, sizeof wall_buf, "%.2f", wall);
  std::cout << wall_buf << '\n';
  return record.status == dpsm::RunStatus::diverged ? 2 : 0;
}

int probe_consensus(int nodes, double p, const std::string& mode,
                    std::uint64_t seed, int window, int horizon,
                    const std::string& out_path) {
  const dpsm::MixingSchedule schedule =
      mode == "fixed" ? dpsm::MixingSchedule::fixed_er(nodes, p, seed)
                      : dpsm::MixingSchedule::resample_er(nodes, p, seed, window);
  const std::vector<double> trace =
      dpsm::consensus_decay_trace(schedule, horizon);
  const dpsm::PhiDecayFit fit = dpsm::fit_phi_decay(trace);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + out_path + "'");
  out << "# nodes = " << nodes << '\n'
      << "# p = " << fmt_real(p) << '\n'
      << "# mode = " << mode << '\n'
      << "# seed = " << seed << '\n'
      << "# B = " << window << '\n'
      << "# c_hat = " << fmt_real(fit.c_hat) << '\n'
      << "# lambda_hat = " << fmt_real(fit.lambda_hat) << '\n'
      << "k,decay\n";
  for (std::size_t k = 0; k < trace.size(); ++k)
    out << k << ',' << fmt_real(trace[k]) << '\n';
  std::cout << "c_hat=" << fmt_real(fit.c_hat)
            << " lambda_hat=" << fmt_real(fit.lambda_hat)
            << " flagged=" << (fit.flagged ? 1 : 0) << '\n';
  return 0;
}

int run_checks(const std::string& filter) {
  const std::vector<dpsm::CheckReport> reports = dpsm::run_check_suite(filter);
  bool all_pass = true;
  for (const dpsm::CheckReport& report : reports) {
    std::cout << report.name << " trials=" << report.trials
              << " worst_slack=" << fmt_real(report.worst_slack)
              << " tolerance=" << fmt_real(report.tolerance) << ' '
              << (report.pass ? "pass" : "FAIL") << '\n';
    all_pass = all_pass && report.pass;
  }
  if (reports.empty()) {
    std::cerr << "no checks match filter '" << filter << "'\n";
    return 3;
  }
  return all_pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed projected subgradient laboratory"};
  app.require_subcommand(1);

  auto* run_cmd =
      app.add_subcommand("run", "Execute an experiment from a config file");
  std::string config_path;
  std::vector<std::string> run_overrides;
  int run_threads = 1;
  run_cmd->add_option("config", config_path, "flat key=value config file")
      ->required();
  run_cmd->add_option("overrides", run_overrides,
                      "dotted key=value overrides applied after the file");
  run_cmd->add_option("--threads", run_threads,
                      "worker threads for per-agent evaluations")
      ->check(CLI::PositiveNumber);

  auto* probe_cmd = app.add_subcommand(
      "consensus-probe", "Measure a schedule's consensus decay and fit it");
  int probe_nodes = 10;
  double probe_p = 0.5;
  std::string probe_mode = "fixed";
  std::uint64_t probe_seed = 1;
  int probe_window = 1;
  int probe_horizon = 50;
  std::string probe_out = "consensus.csv";
  probe_cmd->add_option("--nodes", probe_nodes, "agent count")
      ->check(CLI::PositiveNumber);
  probe_cmd->add_option("--p", probe_p, "edge probability");
  probe_cmd->add_option("--mode", probe_mode, "fixed or resample")
      ->check(CLI::IsMember({"fixed", "resample"}));
  probe_cmd->add_option("--seed", probe_seed, "graph seed");
  probe_cmd->add_option("--window", probe_window,
                        "union-connectivity window (resample mode)")
      ->check(CLI::PositiveNumber);
  probe_cmd->add_option("--horizon", probe_horizon, "trace length")
      ->check(CLI::PositiveNumber);
  probe_cmd->add_option("--out", probe_out, "output CSV path");

  auto* check_cmd =
      app.add_subcommand("check", "Run the executable theory-check suite");
  std::string check_filter;
  check_cmd->add_option("filter", check_filter,
                        "keep checks whose name contains this substring");

  auto* mnist_cmd = app.add_subcommand(
      "mnist", "Image-recovery preset (n=784, N=28, m=84) over an IDX file");
  std::string mnist_data;
  std::vector<std::string> mnist_overrides;
  int mnist_threads = 1;
  mnist_cmd->add_option("--data", mnist_data, "IDX image file")->required();
  mnist_cmd->add_option("overrides", mnist_overrides,
                        "dotted key=value overrides applied after the preset");
  mnist_cmd->add_option("--threads", mnist_threads,
                        "worker threads for per-agent evaluations")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (run_cmd->parsed()) {
      dpsm::RunConfig config = dpsm::parse_config(read_file(config_path));
      for (const std::string& assignment : run_overrides)
        dpsm::apply_override(config, assignment);
      dpsm::validate_config(config);
      return execute(config, run_threads);
    }
    if (probe_cmd->parsed())
      return probe_consensus(probe_nodes, probe_p, probe_mode, probe_seed,
                             probe_window, probe_horizon, probe_out);
    if (check_cmd->parsed()) return run_checks(check_filter);
    if (mnist_cmd->parsed()) {
      dpsm::RunConfig config;
      config.source = dpsm::ProblemSource::mnist;
      config.n = 784;
      config.N = 28;
      config.m = 84;
      config.mnist_path = mnist_data;
      config.method = dpsm::Method::dpsm;
      config.variant = dpsm::StepsizeVariant::geometric;
      config.mu0 = 0.05;
      config.gamma = 0.995;
      config.max_iterations = 3000;
      config.metric_stride = 10;
      config.csv_path = "mnist_dpsm.csv";
      config.image_path = "mnist_dpsm.pgm";
      for (const std::string& assignment : mnist_overrides)
        dpsm::apply_override(config, assignment);
      dpsm::validate_config(config);
      return execute(config, mnist_threads);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
