#pragma once

// Trajectory orchestration: runs one integrator from the seeded
// initialization, records metrics on a dense-then-geometric schedule and
// stops at max_steps or on a train-error plateau.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "lindyn/error.hpp"
#include "lindyn/integrators.hpp"
#include "lindyn/linalg.hpp"
#include "lindyn/metrics.hpp"
#include "lindyn/network.hpp"
#include "lindyn/task.hpp"

namespace lindyn {

inline constexpr const char* kVersion = "1.0.0";

enum class GdBackend { Auto, Factors, Gram };

inline const char* to_string(GdBackend b) noexcept {
  switch (b) {
    case GdBackend::Auto: return "auto";
    case GdBackend::Factors: return "factors";
    case GdBackend::Gram: return "gram";
  }
  return "unknown";
}

inline GdBackend parse_backend(const std::string& name) {
  if (name == "auto") return GdBackend::Auto;
  if (name == "factors") return GdBackend::Factors;
  if (name == "gram") return GdBackend::Gram;
  throw Error(ErrorCode::ConfigError, "unknown GD backend '" + name + "'");
}

/// Factors are used when they are cheaper than the d x d Gram recursion.
inline GdBackend resolve_backend(GdBackend requested, const ScalingPoint& scaling) {
  if (requested != GdBackend::Auto) return requested;
  return scaling.w <= 2 * scaling.d ? GdBackend::Factors : GdBackend::Gram;
}

enum class StopReason { MaxSteps, Plateau, Diverged };

inline const char* to_string(StopReason r) noexcept {
  switch (r) {
    case StopReason::MaxSteps: return "max_steps";
    case StopReason::Plateau: return "plateau";
    case StopReason::Diverged: return "diverged";
  }
  return "unknown";
}

struct RunConfig {
  Mode mode = Mode::Gd;
  GdBackend backend = GdBackend::Auto;
  std::size_t max_steps = 1'000'000;
  /// Plateau: |L(n - window) - L(n)| <= stop_tol * L(0) over recordings.
  double stop_tol = 1e-9;
  std::size_t plateau_window = 50;
  std::size_t extra_svals = 5;
  std::size_t dense_prefix = 200;
  double growth = 1.05;
  std::uint64_t init_seed = 0;
  std::optional<double> eta;  // defaults to scaling.eta
  bool monotone_check = true;  // GD only
  bool track_theorem1 = true;  // GD only
  bool track_alignment = true;
  /// Thinned matrix snapshots: either the explicit steps, or an adaptive
  /// buffer that keeps between snapshot_target and 2 snapshot_target entries.
  std::size_t snapshot_target = 0;
  std::vector<std::size_t> snapshot_steps;
};

/// Next recorded step after `step`: every step up to dense_prefix, then
/// ceil(growth * step).
inline std::size_t next_recording(std::size_t step, const RunConfig& cfg) {
  if (step < cfg.dense_prefix) return step + 1;
  const auto grown = static_cast<std::size_t>(std::ceil(cfg.growth * static_cast<double>(step)));
  return std::max(grown, step + 1);
}

struct TrajectoryRow {
  std::size_t step = 0;
  double train = 0.0;
  double test = 0.0;
  std::vector<double> svals;
  double x_align = std::numeric_limits<double>::quiet_NaN();
  double stable_rank = std::numeric_limits<double>::quiet_NaN();
  std::optional<Theorem1Gap> thm1;
  std::optional<double> inv_drift;
};

struct Snapshot {
  std::size_t step = 0;
  Matrix a;
};

struct TrajectoryRecord {
  Mode mode = Mode::Gd;
  GdBackend backend = GdBackend::Auto;
  double eta = 0.0;
  double sigma2w = 0.0;
  std::size_t tracked = 0;
  std::vector<TrajectoryRow> rows;
  std::vector<Snapshot> snapshots;
  StopReason stop = StopReason::MaxSteps;
  std::string failure;

  std::size_t argmin_row() const {
    require(!rows.empty(), ErrorCode::ScheduleMismatch, "empty trajectory");
    std::size_t best = 0;
    for (std::size_t r = 1; r < rows.size(); ++r)
      if (rows[r].test < rows[best].test) best = r;
    return best;
  }
  std::size_t argmin_step() const { return rows[argmin_row()].step; }
  double min_test() const { return rows[argmin_row()].test; }
  std::size_t final_step() const { return rows.empty() ? 0 : rows.back().step; }

  std::vector<std::size_t> steps() const {
    std::vector<std::size_t> out;
    for (const auto& r : rows) out.push_back(r.step);
    return out;
  }
  std::vector<std::vector<double>> sval_series() const {
    std::vector<std::vector<double>> out;
    for (const auto& r : rows) out.push_back(r.svals);
    return out;
  }
  const TrajectoryRow* row_at(std::size_t step) const {
    auto it = std::lower_bound(rows.begin(), rows.end(), step,
                               [](const TrajectoryRow& r, std::size_t s) { return r.step < s; });
    return (it != rows.end() && it->step == step) ? &*it : nullptr;
  }
};

inline std::vector<Crossing> threshold_crossings(const TrajectoryRecord& record,
                                                 const ScalingPoint& scaling) {
  const auto steps = record.steps();
  const auto svals = record.sval_series();
  return threshold_crossings(std::span<const std::size_t>(steps),
                             std::span<const std::vector<double>>(svals), scaling.sigma2w);
}

/// Raised when a step produces non-finite entries (or GD train error
/// increases); carries everything recorded before the failure.
class DivergedError : public Error {
 public:
  DivergedError(const std::string& message, TrajectoryRecord partial)
      : Error(ErrorCode::Diverged, message),
        partial_(std::make_shared<TrajectoryRecord>(std::move(partial))) {}

  const TrajectoryRecord& partial() const { return *partial_; }

 private:
  std::shared_ptr<TrajectoryRecord> partial_;
};

/// 5 ceil(T*) in the active region when T* is defined, else 10^6.
inline std::size_t default_max_steps(const Task& task, const ScalingPoint& scaling, double eta) {
  constexpr std::size_t kFallback = 1'000'000;
  if (!scaling.active() || !(eta > 0.0)) return kFallback;
  try {
    const auto a = task.a_values();
    const TstarPrediction p = predict_tstar(scaling, a, eta);
    if (!std::isfinite(p.steps)) return kFallback;
    return 5 * static_cast<std::size_t>(std::ceil(p.steps));
  } catch (const Error&) {
    return kFallback;
  }
}

namespace detail {

inline const Matrix& product(const ProductMatrix& pm) { return pm.a; }

class Recorder {
 public:
  Recorder(const Task& task, const ScalingPoint& scaling, const RunConfig& cfg, double eta)
      : task_(task), scaling_(scaling), cfg_(cfg), blocks_(make_signal_blocks(task)) {
    record_.mode = cfg.mode;
    record_.backend = cfg.mode == Mode::Gd ? resolve_backend(cfg.backend, scaling) : cfg.backend;
    record_.eta = eta;
    record_.sigma2w = scaling.sigma2w;
    record_.tracked = std::min<std::size_t>(static_cast<std::size_t>(task.d),
                                            static_cast<std::size_t>(task.rank) + cfg.extra_svals);
    explicit_snapshots_.insert(cfg.snapshot_steps.begin(), cfg.snapshot_steps.end());
  }

  /// Appends one row; returns true when the plateau criterion is met.
  bool record(std::size_t step, const Matrix& a, const GramNetwork* gram, std::optional<double> drift) {
    TrajectoryRow row;
    row.step = step;
    const Errors e = eval_errors(a, task_);
    row.train = e.train;
    row.test = e.test;
    const SvdTriple svd = svd_desc(a);
    row.svals.assign(svd.s.data(), svd.s.data() + record_.tracked);
    if (svd.s(0) > 0.0) row.stable_rank = a.squaredNorm() / (svd.s(0) * svd.s(0));
    if (cfg_.track_alignment) row.x_align = alignment_x(svd, task_, blocks_).x;
    if (gram != nullptr && cfg_.track_theorem1) row.thm1 = theorem1_gap(*gram, scaling_);
    row.inv_drift = drift;

    if (cfg_.mode == Mode::Gd && cfg_.monotone_check && !record_.rows.empty()) {
      const double prev = record_.rows.back().train;
      const double slack = 1e-9 * prev + 1e-12 * record_.rows.front().train;
      if (row.train > prev + slack) {
        record_.rows.push_back(std::move(row));
        record_.stop = StopReason::Diverged;
        const std::string msg = "train error increased at step " + std::to_string(step);
        record_.failure = msg;
        throw DivergedError(msg, record_);
      }
    }
    record_.rows.push_back(std::move(row));
    snapshot(step, a);

    const std::size_t n = record_.rows.size();
    if (cfg_.plateau_window == 0 || n <= cfg_.plateau_window) return false;
    const double scale = std::max(record_.rows.front().train, std::numeric_limits<double>::min());
    const double change = std::abs(record_.rows[n - 1 - cfg_.plateau_window].train -
                                   record_.rows[n - 1].train);
    return change <= cfg_.stop_tol * scale;
  }

  [[noreturn]] void fail(const Error& e) {
    record_.stop = StopReason::Diverged;
    record_.failure = e.what();
    throw DivergedError(e.what(), std::move(record_));
  }

  TrajectoryRecord finish(StopReason reason) {
    record_.stop = reason;
    return std::move(record_);
  }

 private:
  void snapshot(std::size_t step, const Matrix& a) {
    if (!explicit_snapshots_.empty()) {
      if (explicit_snapshots_.count(step)) record_.snapshots.push_back({step, a});
      return;
    }
    if (cfg_.snapshot_target == 0) return;
    const std::size_t index = record_.rows.size() - 1;
    if (index % stride_ != 0) return;
    record_.snapshots.push_back({step, a});
    snapshot_index_.push_back(index);
    if (record_.snapshots.size() > 2 * cfg_.snapshot_target) {
      std::vector<Snapshot> kept;
      std::vector<std::size_t> kept_index;
      for (std::size_t i = 0; i < snapshot_index_.size(); ++i) {
        if ((snapshot_index_[i] / stride_) % 2 == 0) {
          kept.push_back(std::move(record_.snapshots[i]));
          kept_index.push_back(snapshot_index_[i]);
        }
      }
      record_.snapshots = std::move(kept);
      snapshot_index_ = std::move(kept_index);
      stride_ *= 2;
    }
  }

  const Task& task_;
  const ScalingPoint& scaling_;
  const RunConfig& cfg_;
  SignalBlocks blocks_;
  TrajectoryRecord record_;
  std::set<std::size_t> explicit_snapshots_;
  std::vector<std::size_t> snapshot_index_;
  std::size_t stride_ = 1;
};

/// Shared stepping loop. `advance` maps a state to the next one, `observe`
/// records the current state and returns the plateau flag.
template <class State, class Advance, class Observe>
TrajectoryRecord drive(State state, const RunConfig& cfg, Recorder& recorder, Advance advance,
                       Observe observe) {
  try {
    if (observe(state, 0)) return recorder.finish(StopReason::Plateau);
    std::size_t next = next_recording(0, cfg);
    for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
      state = advance(state);
      if (step == next || step == cfg.max_steps) {
        if (observe(state, step)) return recorder.finish(StopReason::Plateau);
        next = next_recording(step, cfg);
      }
    }
  } catch (const DivergedError&) {
    throw;
  } catch (const Error& e) {
    recorder.fail(e);
  }
  return recorder.finish(StopReason::MaxSteps);
}

}  // namespace detail

/// Runs the integrator selected by cfg.mode. Non-GD modes start from
/// A(0) = W2(0) W1(0) drawn with the same seed as the GD run.
inline TrajectoryRecord run_trajectory(const Task& task, const ScalingPoint& scaling,
                                       const RunConfig& cfg) {
  require(scaling.d == task.d, ErrorCode::DimensionMismatch, "scaling and task dimensions differ");
  const double eta = cfg.eta.value_or(scaling.eta);
  require(std::isfinite(eta) && eta >= 0.0, ErrorCode::ConfigError, "learning rate must be finite");
  detail::Recorder recorder(task, scaling, cfg, eta);

  if (cfg.mode == Mode::Gd) {
    if (resolve_backend(cfg.backend, scaling) == GdBackend::Factors) {
      FactorNetwork s0 = init_network(scaling, cfg.init_seed);
      const Matrix q0 = conserved_quantity(s0);
      return detail::drive(
          std::move(s0), cfg, recorder,
          [&](const FactorNetwork& s) { return gd_step(s, task, eta); },
          [&](const FactorNetwork& s, std::size_t step) {
            const GramNetwork g = to_gram(s);
            return recorder.record(step, g.product, &g, sym_op_norm(conserved_quantity(s) - q0));
          });
    }
    return detail::drive(
        init_gram(scaling, cfg.init_seed), cfg, recorder,
        [&](const GramNetwork& s) { return gd_step(s, task, eta); },
        [&](const GramNetwork& s, std::size_t step) {
          return recorder.record(step, s.product, &s, std::nullopt);
        });
  }

  ProductMatrix pm{init_gram(scaling, cfg.init_seed).product, cfg.mode, 0};
  auto observe = [&](const ProductMatrix& p, std::size_t step) {
    return recorder.record(step, p.a, nullptr, std::nullopt);
  };
  if (cfg.mode == Mode::Lazy) {
    return detail::drive(
        std::move(pm), cfg, recorder,
        [&](const ProductMatrix& p) { return lazy_step(p, task, scaling, eta); }, observe);
  }
  return detail::drive(
      std::move(pm), cfg, recorder,
      [&](const ProductMatrix& p) { return sc_step(p, task, scaling, eta); }, observe);
}

// ---------------------------------------------------------------------------
// Export

namespace detail {
inline void write_number(std::ostream& out, double v) {
  if (std::isfinite(v)) out << v;
}
}  // namespace detail

/// One row per recorded step:
/// step,train_err,test_err,sv_1..sv_n,x_align,thm1_gap,inv_drift
/// Fields that do not apply to the run are left empty.
inline void write_trajectory_csv(const TrajectoryRecord& record, std::ostream& out) {
  out << std::setprecision(17);
  out << "step,train_err,test_err";
  for (std::size_t i = 1; i <= record.tracked; ++i) out << ",sv_" << i;
  out << ",x_align,thm1_gap,inv_drift\n";
  for (const auto& row : record.rows) {
    out << row.step << ',' << row.train << ',' << row.test;
    for (std::size_t i = 0; i < record.tracked; ++i) {
      out << ',';
      if (i < row.svals.size()) out << row.svals[i];
    }
    out << ',';
    detail::write_number(out, row.x_align);
    out << ',';
    if (row.thm1) detail::write_number(out, row.thm1->gap1);
    out << ',';
    if (row.inv_drift) detail::write_number(out, *row.inv_drift);
    out << '\n';
  }
}

inline void write_trajectory_csv(const TrajectoryRecord& record, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot open " + path);
  write_trajectory_csv(record, out);
  require(static_cast<bool>(out), ErrorCode::IoError, "write failed for " + path);
}

/// Everything needed to reproduce a run exactly.
inline nlohmann::ordered_json run_manifest(const Task& task, const ScalingPoint& scaling,
                                           const RunConfig& cfg, const TrajectoryRecord& record,
                                           const std::vector<double>& a_list = {}) {
  nlohmann::ordered_json j;
  j["version"] = kVersion;
  j["task"] = {{"d", task.d}, {"K", task.rank}, {"seed", task.seed}};
  if (!a_list.empty()) j["task"]["a_list"] = a_list;
  j["scaling"] = {{"gamma_w", scaling.gamma_w},
                  {"gamma_sigma2", scaling.gamma_sigma2},
                  {"c_lr", scaling.c_lr},
                  {"w", scaling.w},
                  {"sigma2", scaling.sigma2},
                  {"sigma2w", scaling.sigma2w},
                  {"region", to_string(scaling.region())}};
  j["run"] = {{"mode", to_string(cfg.mode)},
              {"backend", to_string(record.backend)},
              {"eta", record.eta},
              {"init_seed", cfg.init_seed},
              {"max_steps", cfg.max_steps},
              {"stop_tol", cfg.stop_tol},
              {"plateau_window", cfg.plateau_window},
              {"record_extras", cfg.extra_svals},
              {"dense_prefix", cfg.dense_prefix},
              {"growth", cfg.growth}};
  j["result"] = {{"stop_reason", to_string(record.stop)},
                 {"final_step", record.final_step()},
                 {"recordings", record.rows.size()}};
  return j;
}

}  // namespace lindyn
