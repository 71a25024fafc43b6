#pragma once

// Phase-diagram sweep over (gamma_sigma2, gamma_w). Every cell shares one
// task; weight initialization is seeded per cell from the grid index.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "lindyn/error.hpp"
#include "lindyn/task.hpp"
#include "lindyn/trajectory.hpp"

namespace lindyn {

struct SweepConfig {
  Index d = 200;
  Index rank = 5;
  double gs2_min = -3.0;
  double gs2_max = 0.0;
  std::size_t gs2_count = 35;
  double gw_min = 0.0;
  double gw_max = 2.8;
  std::size_t gw_count = 35;
  std::uint64_t seed = 0;
  double c_lr = kDefaultLearningRateConstant;
  bool with_self_consistent = false;
  std::size_t max_steps = 200'000;
  double stop_tol = 1e-9;
  std::size_t snapshot_target = 30;
  std::size_t workers = 0;  // 0: LINDYN_THREADS, else hardware concurrency

  std::size_t cell_count() const { return gs2_count * gw_count; }

  void validate() const {
    require(gs2_count >= 1 && gw_count >= 1, ErrorCode::ConfigError, "empty sweep grid");
    require(std::isfinite(gs2_min) && std::isfinite(gs2_max) && std::isfinite(gw_min) &&
                std::isfinite(gw_max),
            ErrorCode::ConfigError, "sweep ranges must be finite");
    require(d >= 2, ErrorCode::ConfigError, "sweep needs d >= 2");
    require(rank >= 1 && rank <= d, ErrorCode::ConfigError, "sweep needs 1 <= K <= d");
    require(c_lr > 0.0, ErrorCode::ConfigError, "c_lr must be positive");
    require(stop_tol >= 0.0, ErrorCode::ConfigError, "stop_tol must be nonnegative");
  }
};

/// Inclusive linear grid; a single point sits at `lo`.
inline double grid_value(double lo, double hi, std::size_t count, std::size_t i) {
  if (count <= 1) return lo;
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
}

struct SweepCell {
  std::size_t index = 0;
  double gamma_sigma2 = 0.0;
  double gamma_w = 0.0;
  double min_test = std::numeric_limits<double>::quiet_NaN();
  double stable_rank = std::numeric_limits<double>::quiet_NaN();
  std::size_t steps_to_min = 0;
  std::optional<double> ln_gd_sc_distance;
  bool lazy = false;
  bool active = false;
  bool degenerate = false;
  bool diverged = false;
  bool truncated = false;  // hit max_steps before the plateau
};

struct SweepResult {
  SweepConfig config;
  double a_star_fro_sq = 0.0;
  double noise_fro_sq = 0.0;
  std::vector<SweepCell> cells;  // ordered by grid index
  bool interrupted = false;

  /// 0.3 d^{-2} min(||A*||_F^2, ||E||_F^2).
  double lazy_floor() const {
    const double d2 = static_cast<double>(config.d) * static_cast<double>(config.d);
    return 0.3 * std::min(a_star_fro_sq, noise_fro_sq) / d2;
  }
};

/// ln of the mean d^{-2} ||A_gd - A_sc||_F^2 over matched snapshot steps,
/// thinned evenly to at most `checkpoints` entries and floored at ln(1e-300).
inline double gd_vs_sc_distance(const TrajectoryRecord& gd, const TrajectoryRecord& sc,
                                std::size_t checkpoints = 30) {
  require(gd.eta == sc.eta, ErrorCode::ScheduleMismatch, "runs used different learning rates");
  const std::size_t overlap = std::min(gd.rows.size(), sc.rows.size());
  for (std::size_t r = 0; r < overlap; ++r)
    require(gd.rows[r].step == sc.rows[r].step, ErrorCode::ScheduleMismatch,
            "recording schedules differ");

  std::map<std::size_t, const Matrix*> by_step;
  for (const auto& s : sc.snapshots) by_step[s.step] = &s.a;
  std::vector<std::pair<const Matrix*, const Matrix*>> matched;
  for (const auto& s : gd.snapshots) {
    auto it = by_step.find(s.step);
    if (it != by_step.end()) matched.emplace_back(&s.a, it->second);
  }
  require(!matched.empty(), ErrorCode::ScheduleMismatch, "no matched snapshot steps");

  std::vector<std::size_t> chosen;
  const std::size_t n = matched.size();
  const std::size_t k = std::max<std::size_t>(1, std::min(checkpoints, n));
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t idx = k == 1 ? n - 1 : (i * (n - 1) + (k - 1) / 2) / (k - 1);
    if (chosen.empty() || chosen.back() != idx) chosen.push_back(idx);
  }
  double total = 0.0;
  for (std::size_t idx : chosen) {
    const Matrix& a = *matched[idx].first;
    const double d2 = static_cast<double>(a.rows()) * static_cast<double>(a.rows());
    total += (a - *matched[idx].second).squaredNorm() / d2;
  }
  const double mean = total / static_cast<double>(chosen.size());
  return std::log(std::max(mean, 1e-300));
}

inline std::size_t worker_count(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("LINDYN_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Summarizes one grid cell. Never throws for divergence: a diverged cell
/// keeps the minimum test error of its pre-divergence prefix.
inline SweepCell run_cell(const SweepConfig& cfg, const Task& task, std::size_t index) {
  const std::size_t i_gw = index / cfg.gs2_count;
  const std::size_t i_gs2 = index % cfg.gs2_count;
  SweepCell cell;
  cell.index = index;
  cell.gamma_sigma2 = grid_value(cfg.gs2_min, cfg.gs2_max, cfg.gs2_count, i_gs2);
  cell.gamma_w = grid_value(cfg.gw_min, cfg.gw_max, cfg.gw_count, i_gw);
  const ScalingPoint scaling =
      scaling_point(cfg.d, cell.gamma_w, cell.gamma_sigma2, cfg.c_lr, task.a_star_op());
  cell.lazy = scaling.lazy();
  cell.active = scaling.active();
  cell.degenerate = scaling.degenerate();

  RunConfig run;
  run.mode = Mode::Gd;
  run.max_steps = cfg.max_steps;
  run.stop_tol = cfg.stop_tol;
  run.init_seed = derive_seed(cfg.seed, Stream::CellInit, index);
  run.track_theorem1 = false;
  run.snapshot_target = cfg.with_self_consistent ? cfg.snapshot_target : 0;

  TrajectoryRecord gd;
  try {
    gd = run_trajectory(task, scaling, run);
  } catch (const DivergedError& e) {
    gd = e.partial();
    cell.diverged = true;
  }
  if (!gd.rows.empty()) {
    const std::size_t best = gd.argmin_row();
    cell.min_test = gd.rows[best].test;
    cell.stable_rank = gd.rows[best].stable_rank;
    cell.steps_to_min = gd.rows[best].step;
  }
  cell.truncated = !cell.diverged && gd.stop == StopReason::MaxSteps && cfg.max_steps > 0;

  if (cfg.with_self_consistent && !cell.diverged && !gd.snapshots.empty()) {
    RunConfig sc = run;
    sc.mode = Mode::SelfConsistent;
    sc.max_steps = gd.final_step();
    sc.plateau_window = 0;
    sc.snapshot_target = 0;
    for (const auto& s : gd.snapshots) sc.snapshot_steps.push_back(s.step);
    try {
      const TrajectoryRecord sc_rec = run_trajectory(task, scaling, sc);
      cell.ln_gd_sc_distance = gd_vs_sc_distance(gd, sc_rec, cfg.snapshot_target);
    } catch (const DivergedError&) {
      cell.ln_gd_sc_distance.reset();
    }
  }
  return cell;
}

/// Runs every cell on a bounded worker pool. Results are keyed by grid index,
/// so the output does not depend on the worker count or completion order.
/// When `cancel` becomes true, no new cells start and the completed ones are
/// returned with `interrupted` set.
inline SweepResult run_sweep(const SweepConfig& cfg, const std::atomic<bool>* cancel = nullptr) {
  cfg.validate();
  const Task task = make_task(cfg.d, cfg.rank, cfg.seed);
  SweepResult result;
  result.config = cfg;
  result.a_star_fro_sq = task.a_star.squaredNorm();
  result.noise_fro_sq = task.noise.squaredNorm();

  const std::size_t total = cfg.cell_count();
  std::vector<std::optional<SweepCell>> slots(total);
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;

  auto worker = [&] {
    for (;;) {
      if (cancel && cancel->load()) return;
      const std::size_t index = next.fetch_add(1);
      if (index >= total) return;
      try {
        slots[index] = run_cell(cfg, task, index);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::min(worker_count(cfg.workers), total);
  {
    std::vector<std::jthread> pool;
    for (std::size_t i = 1; i < n_workers; ++i) pool.emplace_back(worker);
    worker();
  }
  if (first_error) std::rethrow_exception(first_error);

  for (auto& slot : slots) {
    if (slot) result.cells.push_back(std::move(*slot));
    else result.interrupted = true;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Export

inline void write_sweep_csv(const SweepResult& result, std::ostream& out) {
  out << std::setprecision(17);
  out << "gamma_sigma2,gamma_w,min_test_err,stable_rank,steps_to_min,ln_gd_sc_dist,"
         "lazy_flag,active_flag,degenerate_flag,diverged,truncated\n";
  auto num = [&](double v) {
    if (std::isfinite(v)) out << v;
  };
  for (const auto& c : result.cells) {
    num(c.gamma_sigma2);
    out << ',';
    num(c.gamma_w);
    out << ',';
    num(c.min_test);
    out << ',';
    num(c.stable_rank);
    out << ',' << c.steps_to_min << ',';
    if (c.ln_gd_sc_distance) num(*c.ln_gd_sc_distance);
    out << ',' << int(c.lazy) << ',' << int(c.active) << ',' << int(c.degenerate) << ','
        << int(c.diverged) << ',' << int(c.truncated) << '\n';
  }
}

inline nlohmann::ordered_json sweep_manifest(const SweepResult& result) {
  const SweepConfig& c = result.config;
  nlohmann::ordered_json j;
  j["version"] = kVersion;
  j["config"] = {{"d", c.d},
                 {"K", c.rank},
                 {"gamma_sigma2", {{"min", c.gs2_min}, {"max", c.gs2_max}, {"count", c.gs2_count}}},
                 {"gamma_w", {{"min", c.gw_min}, {"max", c.gw_max}, {"count", c.gw_count}}},
                 {"seed", c.seed},
                 {"c_lr", c.c_lr},
                 {"with_self_consistent", c.with_self_consistent},
                 {"max_steps", c.max_steps},
                 {"stop_tol", c.stop_tol},
                 {"snapshot_target", c.snapshot_target}};
  j["task"] = {{"a_star_fro_sq", result.a_star_fro_sq},
               {"noise_fro_sq", result.noise_fro_sq},
               {"lazy_floor", result.lazy_floor()}};
  j["boundary_lines"] = nlohmann::ordered_json::array(
      {{{"name", "lazy_active"}, {"equation", "gamma_sigma2 + gamma_w = 1"}},
       {{"name", "finite_variance"}, {"equation", "2 gamma_sigma2 + gamma_w = 0"}},
       {{"name", "overparametrized"}, {"equation", "gamma_w = 1"}}});
  j["grid_order"] = "row = gamma_w index * gamma_sigma2 count + gamma_sigma2 index";
  j["rows"] = result.cells.size();
  j["interrupted"] = result.interrupted;
  std::size_t diverged = 0;
  std::size_t truncated = 0;
  for (const auto& cell : result.cells) {
    diverged += cell.diverged;
    truncated += cell.truncated;
  }
  j["diverged_cells"] = diverged;
  j["truncated_cells"] = truncated;
  return j;
}

struct SweepFiles {
  std::string csv;
  std::string manifest;
};

inline SweepFiles export_sweep(const SweepResult& result, const std::string& directory,
                               const std::string& prefix = "sweep") {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  require(!ec, ErrorCode::IoError, "cannot create " + directory);
  SweepFiles files{(std::filesystem::path(directory) / (prefix + ".csv")).string(),
                   (std::filesystem::path(directory) / (prefix + "_manifest.json")).string()};
  {
    std::ofstream out(files.csv);
    require(static_cast<bool>(out), ErrorCode::IoError, "cannot open " + files.csv);
    write_sweep_csv(result, out);
    require(static_cast<bool>(out), ErrorCode::IoError, "write failed for " + files.csv);
  }
  {
    std::ofstream out(files.manifest);
    require(static_cast<bool>(out), ErrorCode::IoError, "cannot open " + files.manifest);
    out << sweep_manifest(result).dump(2) << '\n';
    require(static_cast<bool>(out), ErrorCode::IoError, "write failed for " + files.manifest);
  }
  return files;
}

}  // namespace lindyn
