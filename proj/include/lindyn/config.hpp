#pragma once

// JSON run configuration. Sections and keys:
//   task    {d, K, seed, a_list?}
//   scaling {gamma_w, gamma_sigma2, c_lr?}
//   run     {mode?, max_steps?, stop_tol?, record_extras?, backend?}
//   output  {directory?, prefix?}
// d, K, gamma_w and gamma_sigma2 are required; unknown keys are rejected.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "lindyn/error.hpp"
#include "lindyn/integrators.hpp"
#include "lindyn/task.hpp"
#include "lindyn/trajectory.hpp"

namespace lindyn {

struct RunConfigFile {
  std::optional<Index> d;
  std::optional<Index> rank;
  std::uint64_t seed = 0;
  std::vector<double> a_list;
  std::optional<double> gamma_w;
  std::optional<double> gamma_sigma2;
  double c_lr = kDefaultLearningRateConstant;
  std::string mode = "gd";
  std::string backend = "auto";
  std::optional<std::size_t> max_steps;  // unset: default_max_steps
  double stop_tol = 1e-9;
  std::size_t record_extras = 5;
  std::string directory = ".";
  std::string prefix = "run";
};

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::string& where,
                           std::initializer_list<const char*> allowed) {
  require(obj.is_object(), ErrorCode::ConfigError, where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    require(ok.count(key) > 0, ErrorCode::ConfigError, "unknown key '" + where + "." + key + "'");
  }
}

template <class T>
T get_as(const nlohmann::json& obj, const char* key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, "bad value for " + where + "." + key + ": " + e.what());
  }
}

}  // namespace detail

inline RunConfigFile parse_run_config(const nlohmann::json& j) {
  detail::reject_unknown(j, "config", {"task", "scaling", "run", "output"});
  RunConfigFile cfg;
  require(j.contains("task") && j.contains("scaling"), ErrorCode::ConfigError,
          "config needs 'task' and 'scaling' sections");

  const auto& task = j.at("task");
  detail::reject_unknown(task, "task", {"d", "K", "seed", "a_list"});
  require(task.contains("d") && task.contains("K"), ErrorCode::ConfigError,
          "task.d and task.K are required");
  cfg.d = detail::get_as<Index>(task, "d", "task");
  cfg.rank = detail::get_as<Index>(task, "K", "task");
  if (task.contains("seed")) cfg.seed = detail::get_as<std::uint64_t>(task, "seed", "task");
  if (task.contains("a_list")) cfg.a_list = detail::get_as<std::vector<double>>(task, "a_list", "task");

  const auto& scaling = j.at("scaling");
  detail::reject_unknown(scaling, "scaling", {"gamma_w", "gamma_sigma2", "c_lr"});
  require(scaling.contains("gamma_w") && scaling.contains("gamma_sigma2"), ErrorCode::ConfigError,
          "scaling.gamma_w and scaling.gamma_sigma2 are required");
  cfg.gamma_w = detail::get_as<double>(scaling, "gamma_w", "scaling");
  cfg.gamma_sigma2 = detail::get_as<double>(scaling, "gamma_sigma2", "scaling");
  if (scaling.contains("c_lr")) cfg.c_lr = detail::get_as<double>(scaling, "c_lr", "scaling");

  if (j.contains("run")) {
    const auto& run = j.at("run");
    detail::reject_unknown(run, "run", {"mode", "max_steps", "stop_tol", "record_extras", "backend"});
    if (run.contains("mode")) cfg.mode = detail::get_as<std::string>(run, "mode", "run");
    if (run.contains("backend")) cfg.backend = detail::get_as<std::string>(run, "backend", "run");
    if (run.contains("max_steps")) {
      const auto steps = detail::get_as<long long>(run, "max_steps", "run");
      require(steps >= 0, ErrorCode::ConfigError, "run.max_steps must be >= 1");
      cfg.max_steps = static_cast<std::size_t>(steps);
    }
    if (run.contains("stop_tol")) cfg.stop_tol = detail::get_as<double>(run, "stop_tol", "run");
    if (run.contains("record_extras"))
      cfg.record_extras = detail::get_as<std::size_t>(run, "record_extras", "run");
  }
  if (j.contains("output")) {
    const auto& out = j.at("output");
    detail::reject_unknown(out, "output", {"directory", "prefix"});
    if (out.contains("directory")) cfg.directory = detail::get_as<std::string>(out, "directory", "output");
    if (out.contains("prefix")) cfg.prefix = detail::get_as<std::string>(out, "prefix", "output");
  }
  return cfg;
}

inline RunConfigFile load_run_config(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::ConfigError, "cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("invalid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

/// Upper bound on the width the Gram initialization will draw.
inline constexpr double kMaxWidth = 5e7;

/// Range checks that run before any matrix is allocated.
inline void validate(const RunConfigFile& cfg) {
  require(cfg.d.has_value() && cfg.rank.has_value() && cfg.gamma_w.has_value() &&
              cfg.gamma_sigma2.has_value(),
          ErrorCode::ConfigError, "d, K, gamma_w and gamma_sigma2 are required");
  const Index d = *cfg.d;
  require(d >= 2 && d <= 5000, ErrorCode::ConfigError, "d must lie in [2, 5000]");
  require(*cfg.rank >= 1 && *cfg.rank <= d, ErrorCode::ConfigError, "K must lie in [1, d]");
  require(std::isfinite(*cfg.gamma_w) && std::isfinite(*cfg.gamma_sigma2), ErrorCode::ConfigError,
          "exponents must be finite");
  const double width = std::pow(static_cast<double>(d), *cfg.gamma_w);
  require(width <= kMaxWidth, ErrorCode::ConfigError, "width d^gamma_w is too large");
  require(std::isfinite(cfg.c_lr) && cfg.c_lr > 0.0, ErrorCode::ConfigError, "c_lr must be positive");
  require(std::isfinite(cfg.stop_tol) && cfg.stop_tol >= 0.0, ErrorCode::ConfigError,
          "stop_tol must be nonnegative");
  require(!cfg.max_steps || *cfg.max_steps >= 1, ErrorCode::ConfigError, "max_steps must be >= 1");
  require(cfg.record_extras <= static_cast<std::size_t>(d), ErrorCode::ConfigError,
          "record_extras exceeds d");
  if (!cfg.a_list.empty()) {
    require(static_cast<Index>(cfg.a_list.size()) == *cfg.rank, ErrorCode::ConfigError,
            "a_list length must equal K");
    for (std::size_t i = 0; i < cfg.a_list.size(); ++i) {
      require(cfg.a_list[i] > 0.0 && std::isfinite(cfg.a_list[i]), ErrorCode::ConfigError,
              "a_list entries must be positive");
      require(i == 0 || cfg.a_list[i] <= cfg.a_list[i - 1], ErrorCode::ConfigError,
              "a_list must be nonincreasing");
    }
  }
  (void)parse_mode(cfg.mode);
  (void)parse_backend(cfg.backend);
}

inline nlohmann::ordered_json to_json(const RunConfigFile& cfg) {
  nlohmann::ordered_json j;
  j["task"] = {{"d", cfg.d.value_or(0)}, {"K", cfg.rank.value_or(0)}, {"seed", cfg.seed}};
  if (!cfg.a_list.empty()) j["task"]["a_list"] = cfg.a_list;
  j["scaling"] = {{"gamma_w", cfg.gamma_w.value_or(0.0)},
                  {"gamma_sigma2", cfg.gamma_sigma2.value_or(0.0)},
                  {"c_lr", cfg.c_lr}};
  j["run"] = {{"mode", cfg.mode}, {"backend", cfg.backend}, {"stop_tol", cfg.stop_tol},
              {"record_extras", cfg.record_extras}};
  if (cfg.max_steps) j["run"]["max_steps"] = *cfg.max_steps;
  j["output"] = {{"directory", cfg.directory}, {"prefix", cfg.prefix}};
  return j;
}

}  // namespace lindyn
