// lindyn: single runs, phase-diagram sweeps, stopping-time predictions and
// invariant verification for shallow linear-network training dynamics.
//
// Exit codes: 0 success, 1 verification failure, 2 config error, 3 divergence.

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "lindyn/lindyn.hpp"

namespace fs = std::filesystem;
using namespace lindyn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted.store(true); }

struct RunFlags {
  std::string config;
  std::optional<Index> d;
  std::optional<Index> rank;
  std::optional<std::uint64_t> seed;
  std::vector<double> a_list;
  std::optional<double> gw;
  std::optional<double> gs2;
  std::optional<double> c_lr;
  std::optional<std::string> mode;
  std::optional<std::string> backend;
  std::optional<long long> max_steps;
  std::optional<double> stop_tol;
  std::optional<std::size_t> extras;
  std::optional<std::string> out_dir;
  std::optional<std::string> prefix;
  bool dump_task = false;
};

RunConfigFile merge(const RunFlags& f) {
  RunConfigFile cfg = f.config.empty() ? RunConfigFile{} : load_run_config(f.config);
  if (f.d) cfg.d = *f.d;
  if (f.rank) cfg.rank = *f.rank;
  if (f.seed) cfg.seed = *f.seed;
  if (!f.a_list.empty()) {
    cfg.a_list = f.a_list;
    if (!f.rank) cfg.rank = static_cast<Index>(f.a_list.size());
  }
  if (f.gw) cfg.gamma_w = *f.gw;
  if (f.gs2) cfg.gamma_sigma2 = *f.gs2;
  if (f.c_lr) cfg.c_lr = *f.c_lr;
  if (f.mode) cfg.mode = *f.mode;
  if (f.backend) cfg.backend = *f.backend;
  if (f.max_steps) {
    require(*f.max_steps >= 1, ErrorCode::ConfigError, "--max-steps must be >= 1");
    cfg.max_steps = static_cast<std::size_t>(*f.max_steps);
  }
  if (f.stop_tol) cfg.stop_tol = *f.stop_tol;
  if (f.extras) cfg.record_extras = *f.extras;
  if (f.out_dir) cfg.directory = *f.out_dir;
  if (f.prefix) cfg.prefix = *f.prefix;
  validate(cfg);
  return cfg;
}

nlohmann::ordered_json summarize(const TrajectoryRecord& rec, const ScalingPoint& scaling,
                                 const Task& task) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(rec.mode);
  j["stop_reason"] = to_string(rec.stop);
  j["final_step"] = rec.final_step();
  if (!rec.rows.empty()) {
    j["argmin_step"] = rec.argmin_step();
    j["min_test_err"] = rec.min_test();
    j["test_err_0"] = rec.rows.front().test;
  }
  j["sigma2w"] = scaling.sigma2w;
  auto crossings = threshold_crossings(rec, scaling);
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  std::size_t before_argmin = 0;
  for (const auto& c : crossings) {
    list.push_back({{"index", c.index + 1}, {"step", c.step}});
    if (!rec.rows.empty() && c.step <= rec.argmin_step()) ++before_argmin;
  }
  j["crossings"] = list;
  j["crossings_before_argmin"] = before_argmin;
  try {
    const auto a = task.a_values();
    const TstarPrediction p = predict_tstar(scaling, a, rec.eta);
    j["tstar_steps"] = p.steps;
  } catch (const Error&) {
    j["tstar_steps"] = nullptr;
  }
  return j;
}

int cmd_run(const RunFlags& flags) {
  const RunConfigFile cfg = merge(flags);
  const Task task = cfg.a_list.empty() ? make_task(*cfg.d, *cfg.rank, cfg.seed)
                                       : make_task_from_a(*cfg.d, cfg.a_list, cfg.seed);
  const ScalingPoint scaling =
      scaling_point(*cfg.d, *cfg.gamma_w, *cfg.gamma_sigma2, cfg.c_lr, task.a_star_op());

  RunConfig run;
  run.mode = parse_mode(cfg.mode);
  run.backend = parse_backend(cfg.backend);
  run.stop_tol = cfg.stop_tol;
  run.extra_svals = cfg.record_extras;
  run.init_seed = cfg.seed;
  run.max_steps = cfg.max_steps.value_or(default_max_steps(task, scaling, scaling.eta));

  fs::create_directories(cfg.directory);
  const fs::path base = fs::path(cfg.directory) / cfg.prefix;
  if (flags.dump_task) write_task_csv(task, base.string() + "_task.csv");

  TrajectoryRecord record;
  int code = kExitOk;
  try {
    record = run_trajectory(task, scaling, run);
  } catch (const DivergedError& e) {
    record = e.partial();
    code = kExitDiverged;
  }
  write_trajectory_csv(record, base.string() + "_trajectory.csv");
  auto manifest = run_manifest(task, scaling, run, record, cfg.a_list);
  manifest["config"] = to_json(cfg);
  std::ofstream(base.string() + "_manifest.json") << manifest.dump(2) << '\n';

  auto summary = summarize(record, scaling, task);
  summary["diverged"] = code == kExitDiverged;
  if (code == kExitDiverged) summary["failure"] = record.failure;
  summary["trajectory_csv"] = base.string() + "_trajectory.csv";
  std::cout << summary.dump() << std::endl;
  return code;
}

struct SweepFlags {
  SweepConfig cfg;
  std::string out_dir = ".";
  std::string prefix = "sweep";
  bool strict = false;
};

int cmd_sweep(const SweepFlags& flags) {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const SweepResult result = run_sweep(flags.cfg, &g_interrupted);
  const SweepFiles files = export_sweep(result, flags.out_dir, flags.prefix);
  std::size_t diverged = 0;
  for (const auto& c : result.cells) diverged += c.diverged;
  nlohmann::ordered_json j;
  j["cells"] = result.cells.size();
  j["diverged"] = diverged;
  j["interrupted"] = result.interrupted;
  j["lazy_floor"] = result.lazy_floor();
  j["csv"] = files.csv;
  j["manifest"] = files.manifest;
  std::cout << j.dump() << std::endl;
  if (flags.strict && diverged > 0) return kExitDiverged;
  return kExitOk;
}

struct PredictFlags {
  Index d = 200;
  std::optional<Index> rank;
  std::uint64_t seed = 0;
  std::vector<double> a_list;
  double gw = 2.25;
  double gs2 = -1.85;
  double c_lr = kDefaultLearningRateConstant;
  std::optional<double> eta;
};

int cmd_predict(const PredictFlags& f) {
  std::vector<double> a = f.a_list;
  double a_star_op = 0.0;
  std::string source = "a_list";
  if (a.empty()) {
    require(f.rank.has_value(), ErrorCode::ConfigError, "predict needs --a-list or --K");
    const Task task = make_task(f.d, *f.rank, f.seed);
    a = task.a_values();
    a_star_op = task.a_star_op();
    source = "measured";
  } else {
    a_star_op = static_cast<double>(f.d) * a.front();
  }
  const ScalingPoint scaling = scaling_point(f.d, f.gw, f.gs2, f.c_lr, a_star_op);
  const double eta = f.eta.value_or(scaling.eta);

  nlohmann::ordered_json j;
  j["d"] = f.d;
  j["gamma_w"] = f.gw;
  j["gamma_sigma2"] = f.gs2;
  j["delta"] = 1.0 - f.gs2 - f.gw;
  j["a"] = a;
  j["a_source"] = source;
  j["eta"] = eta;
  j["w"] = scaling.w;
  j["sigma2w"] = scaling.sigma2w;
  j["region"] = to_string(scaling.region());
  j["flags"] = {{"lazy", scaling.lazy()},
                {"active", scaling.active()},
                {"boundary", scaling.boundary()},
                {"finite_variance", scaling.finite_variance()},
                {"overparametrized", scaling.overparametrized()},
                {"degenerate", scaling.degenerate()}};
  try {
    j["c"] = c_constant(a);
  } catch (const Error&) {
    j["c"] = nullptr;
  }
  int code = kExitOk;
  try {
    const TstarPrediction p = predict_tstar(scaling, a, eta);
    j["tstar_steps"] = p.steps;
    j["terms"] = {{"alignment", p.alignment_term},
                  {"separation", p.separation_term},
                  {"fitting", p.fitting_term}};
  } catch (const Error& e) {
    j["tstar_steps"] = nullptr;
    j["error"] = e.what();
    code = kExitConfig;
  }
  j["note"] = "leading term only; eta^-1 O(d log log d) remainder omitted";
  std::cout << j.dump() << std::endl;
  return code;
}

int cmd_verify(const std::string& suite, const verify::Options& opt) {
  const auto checks = verify::run(suite, opt);
  bool ok = true;
  for (const auto& c : checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.suite << " | " << c.name << " | " << c.detail
              << '\n';
    ok = ok && c.passed;
  }
  std::cout << (ok ? "all checks passed" : "verification failed") << std::endl;
  return ok ? kExitOk : kExitVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shallow linear-network training dynamics simulator"};
  app.require_subcommand(1);

  RunFlags run;
  auto* run_cmd = app.add_subcommand("run", "Run one trajectory and write CSV + manifest");
  run_cmd->add_option("--config", run.config, "JSON run configuration");
  run_cmd->add_option("--d", run.d, "Dimension");
  run_cmd->add_option("--K", run.rank, "Target rank");
  run_cmd->add_option("--seed", run.seed, "Task and initialization seed");
  run_cmd->add_option("--a-list", run.a_list, "Explicit target values a_i (s_i = d a_i)");
  run_cmd->add_option("--gw", run.gw, "Width exponent gamma_w");
  run_cmd->add_option("--gs2", run.gs2, "Variance exponent gamma_sigma2");
  run_cmd->add_option("--c-lr", run.c_lr, "Learning-rate constant c");
  run_cmd->add_option("--mode", run.mode, "gd | self_consistent | lazy | balanced");
  run_cmd->add_option("--backend", run.backend, "GD backend: auto | factors | gram");
  run_cmd->add_option("--max-steps", run.max_steps, "Step cap");
  run_cmd->add_option("--stop-tol", run.stop_tol, "Plateau tolerance");
  run_cmd->add_option("--extras", run.extras, "Extra singular values tracked beyond K");
  run_cmd->add_option("--out-dir", run.out_dir, "Output directory");
  run_cmd->add_option("--prefix", run.prefix, "Output file prefix");
  run_cmd->add_flag("--dump-task", run.dump_task, "Also write the task matrices as CSV");

  SweepFlags sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a (gamma_sigma2, gamma_w) grid");
  sweep_cmd->add_option("--d", sweep.cfg.d, "Dimension");
  sweep_cmd->add_option("--K", sweep.cfg.rank, "Target rank");
  sweep_cmd->add_option("--seed", sweep.cfg.seed, "Task seed");
  sweep_cmd->add_option("--gs2-min", sweep.cfg.gs2_min);
  sweep_cmd->add_option("--gs2-max", sweep.cfg.gs2_max);
  sweep_cmd->add_option("--gs2-count", sweep.cfg.gs2_count);
  sweep_cmd->add_option("--gw-min", sweep.cfg.gw_min);
  sweep_cmd->add_option("--gw-max", sweep.cfg.gw_max);
  sweep_cmd->add_option("--gw-count", sweep.cfg.gw_count);
  sweep_cmd->add_option("--c-lr", sweep.cfg.c_lr);
  sweep_cmd->add_flag("--with-sc", sweep.cfg.with_self_consistent, "Also run the self-consistent dynamics");
  sweep_cmd->add_option("--max-steps", sweep.cfg.max_steps);
  sweep_cmd->add_option("--stop-tol", sweep.cfg.stop_tol);
  sweep_cmd->add_option("--workers", sweep.cfg.workers, "Worker threads (default LINDYN_THREADS)");
  sweep_cmd->add_option("--out-dir", sweep.out_dir);
  sweep_cmd->add_option("--prefix", sweep.prefix);
  sweep_cmd->add_flag("--strict", sweep.strict, "Exit 3 if any cell diverged");

  PredictFlags predict;
  auto* predict_cmd = app.add_subcommand("predict", "Print T*, c(a), Delta and region flags");
  predict_cmd->add_option("--d", predict.d);
  predict_cmd->add_option("--K", predict.rank, "Measure a_i from a random task of this rank");
  predict_cmd->add_option("--seed", predict.seed);
  predict_cmd->add_option("--a-list", predict.a_list);
  predict_cmd->add_option("--gw", predict.gw);
  predict_cmd->add_option("--gs2", predict.gs2);
  predict_cmd->add_option("--c-lr", predict.c_lr);
  predict_cmd->add_option("--eta", predict.eta);

  std::string suite = "all";
  verify::Options vopt;
  auto* verify_cmd = app.add_subcommand("verify", "Run invariant suites");
  verify_cmd->add_option("--suite", suite,
                         "all | linalg | gradient | conservation | init-spectrum | lazy-oracle | "
                         "limits | effective-lr | theorem1-gap | alignment | constants");
  verify_cmd->add_option("--d", vopt.d);
  verify_cmd->add_option("--seed", vopt.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*sweep_cmd) return cmd_sweep(sweep);
    if (*predict_cmd) return cmd_predict(predict);
    if (*verify_cmd) return cmd_verify(suite, vopt);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (e.code() == ErrorCode::Diverged) return kExitDiverged;
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}
