#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "retden/retden.hpp"

namespace fs = std::filesystem;
using namespace retden;

namespace {

DensityParams make_params(ModelKind kind, const std::vector<double>& v) {
  const auto need = static_cast<std::size_t>(dimension(kind));
  if (v.size() != need)
    throw std::invalid_argument(std::string(to_string(kind)) + " takes " + std::to_string(need) + " parameters");
  switch (kind) {
    case ModelKind::gaussian: return GaussianParams(v[0], v[1]);
    case ModelKind::laplace: return LaplaceParams(v[0], v[1]);
    case ModelKind::skewed_laplace: break;
  }
  return SkewedLaplaceParams(v[0], v[1], v[2]);
}

std::vector<double> default_params(ModelKind kind) {
  if (kind == ModelKind::skewed_laplace) return {0.0, 1.0, 0.7};
  return {0.0, 1.0};
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

struct RunArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  std::optional<std::int64_t> steps;
  std::string out;
  std::size_t workers = 1;
};

int cmd_run(const RunArgs& a) {
  ExperimentConfig cfg = load_config(a.config);
  if (a.seed) cfg.master_seed = *a.seed;
  if (a.trials) cfg.n_trials = *a.trials;
  if (a.steps) cfg.set_total_steps(*a.steps);
  cfg.validate();
  const fs::path out = a.out.empty() ? fs::path("runs") / cfg.name : fs::path(a.out);

  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentResult result = run_experiment(cfg, a.workers);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::ostringstream results, trials, paths, manifest;
  write_results_csv(results, result);
  write_trials_csv(trials, result);
  write_paths_csv(paths, result);
  write_config(manifest, cfg);
  manifest << "\n[manifest]\n"
           << "config_path = " << a.config << '\n'
           << "output_dir = " << out.string() << '\n'
           << "tool_version = " << RETDEN_VERSION << '\n'
           << "timestamp = " << timestamp() << '\n';
  if (!result.trials.empty() && result.trials.front().stats.reward_truncation)
    manifest << "note = stochastic rewards; horizon " << result.trials.front().stats.horizon
             << " bounds only the deterministic-reward truncation\n";

  fs::create_directories(out);
  write_file(out / "results.csv", results.str());
  write_file(out / "trials.csv", trials.str());
  write_file(out / "paths.csv", paths.str());
  write_file(out / "manifest.ini", manifest.str());

  std::cout << results.str();
  std::cerr << cfg.name << ": " << cfg.n_trials << " trials in " << std::fixed << std::setprecision(1) << secs
            << " s, outputs in " << out.string() << '\n';
  return 0;
}

struct CurveArgs {
  std::string model = "gaussian";
  std::vector<double> params;
  std::vector<double> target;
  double discount = 0.95;
  double delta_min = -3.0;
  double delta_max = 3.0;
  std::size_t points = 61;
  std::string out;
};

int cmd_ng_curve(const CurveArgs& a) {
  const ModelKind kind = parse_model_kind(a.model);
  const DensityParams current = make_params(kind, a.params.empty() ? default_params(kind) : a.params);
  const DensityParams target = make_params(kind, a.target.empty() ? default_params(kind) : a.target);
  if (a.points < 2 || !(a.delta_max > a.delta_min)) throw std::invalid_argument("need delta-min < delta-max and points >= 2");
  std::vector<double> deltas(a.points);
  for (std::size_t i = 0; i < a.points; ++i)
    deltas[i] = a.delta_min + (a.delta_max - a.delta_min) * static_cast<double>(i) / static_cast<double>(a.points - 1);

  std::ostringstream os;
  os.precision(17);
  os << "delta";
  for (const auto& n : parameter_names(kind)) os << ',' << n;
  os << '\n';
  for (const auto& row : ng_curve(current, target, a.discount, deltas)) {
    os << row.delta;
    for (Eigen::Index i = 0; i < row.gradient.size(); ++i) os << ',' << row.gradient[i];
    os << '\n';
  }
  if (a.out.empty()) std::cout << os.str();
  else write_file(a.out, os.str());
  return 0;
}

int cmd_oracle_check(std::size_t cases, std::uint64_t seed, const std::vector<std::string>& faults) {
  OracleCheckOptions opt;
  opt.n_cases = cases;
  opt.seed = seed;
  UpdateRules rules;
  for (const auto& f : faults) {
    if (f != "laplace") throw std::invalid_argument("unknown fault '" + f + "'");
    // halves the scale increment
    rules.laplace = [](const TdContext& c) -> DensityParams {
      const auto cur = std::get<LaplaceParams>(c.current);
      auto next = ng_update_laplace(c);
      next.b = cur.b + 0.5 * (next.b - cur.b);
      return next;
    };
  }
  const OracleReport report = run_oracle_check(opt, rules);
  print_oracle_report(std::cout, report);
  return report.ok() ? 0 : 1;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<ReportRow> rows;
  for (const auto& path : inputs) {
    fs::path p(path);
    if (fs::is_directory(p)) p /= "trials.csv";
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    auto part = aggregate_trials_csv(in);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  std::ostringstream os;
  write_report_csv(os, rows);
  if (out.empty()) std::cout << os.str();
  else write_file(out, os.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tabular return-density learning on the cliff walk"};
  app.set_version_flag("--version", std::string(RETDEN_VERSION));
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Train and evaluate a configuration over several trials");
  run_cmd->add_option("--config", run.config, "Preset name or INI file")->required();
  run_cmd->add_option("--seed", run.seed, "Master seed override");
  run_cmd->add_option("--trials", run.trials, "Number of trials")->check(CLI::PositiveNumber);
  run_cmd->add_option("--steps", run.steps, "Training steps per trial")->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--out", run.out, "Output directory (default runs/<name>)");
  run_cmd->add_option("--workers", run.workers, "Concurrent trials")->check(CLI::PositiveNumber);

  CurveArgs curve;
  auto* curve_cmd = app.add_subcommand("ng-curve", "Natural-gradient direction as a function of the TD error");
  curve_cmd->add_option("--model", curve.model, "gaussian | laplace | skewed_laplace")
      ->check(CLI::IsMember({"gaussian", "laplace", "skewed_laplace"}));
  curve_cmd->add_option("--params", curve.params, "Current parameters");
  curve_cmd->add_option("--target", curve.target, "Successor parameters");
  curve_cmd->add_option("--discount", curve.discount);
  curve_cmd->add_option("--delta-min", curve.delta_min);
  curve_cmd->add_option("--delta-max", curve.delta_max);
  curve_cmd->add_option("--points", curve.points);
  curve_cmd->add_option("--out", curve.out, "Output file (default stdout)");

  std::size_t cases = 100;
  std::uint64_t check_seed = 1;
  std::vector<std::string> faults;
  auto* check_cmd = app.add_subcommand("oracle-check", "Compare closed-form updates and fixed points with quadrature");
  check_cmd->add_option("--cases", cases, "Random contexts per model")->check(CLI::PositiveNumber);
  check_cmd->add_option("--seed", check_seed);
  check_cmd->add_option("--inject-fault", faults)->group("");

  std::vector<std::string> inputs;
  std::string report_out;
  auto* report_cmd = app.add_subcommand("report", "Re-aggregate trial files into a results table");
  report_cmd->add_option("inputs", inputs, "trials.csv files or run directories")->required();
  report_cmd->add_option("--out", report_out, "Output file (default stdout)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return cmd_run(run);
    if (*curve_cmd) return cmd_ng_curve(curve);
    if (*check_cmd) return cmd_oracle_check(cases, check_seed, faults);
    if (*report_cmd) return cmd_report(inputs, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
