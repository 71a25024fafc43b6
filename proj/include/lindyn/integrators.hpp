#pragma once

// Product-matrix integrators: the self-consistent dynamics
//   dA/dt = -sqrt(A A^T + (s^2 w)^2 I) G - G sqrt(A^T A + (s^2 w)^2 I),
// its balanced limit (s^2 w = 0) and the lazy limit dA/dt = -2 s^2 w G,
// all discretized by explicit Euler with the GD step size.
//
// Note: one statement of the balanced dynamics in the literature this follows
// writes the first term with a plus sign. That is inconsistent with the
// discrete balanced recursion and with the s^2 w -> 0 limit of the
// self-consistent flow; both terms are negative here.

#include <cmath>
#include <cstddef>

#include "lindyn/error.hpp"
#include "lindyn/linalg.hpp"
#include "lindyn/task.hpp"

namespace lindyn {

enum class Mode { Gd, SelfConsistent, Lazy, Balanced };

inline const char* to_string(Mode m) noexcept {
  switch (m) {
    case Mode::Gd: return "gd";
    case Mode::SelfConsistent: return "self_consistent";
    case Mode::Lazy: return "lazy";
    case Mode::Balanced: return "balanced";
  }
  return "unknown";
}

inline Mode parse_mode(const std::string& name) {
  if (name == "gd") return Mode::Gd;
  if (name == "self_consistent" || name == "sc") return Mode::SelfConsistent;
  if (name == "lazy") return Mode::Lazy;
  if (name == "balanced") return Mode::Balanced;
  throw Error(ErrorCode::ConfigError, "unknown mode '" + name + "'");
}

struct ProductMatrix {
  Matrix a;
  Mode mode = Mode::SelfConsistent;
  std::size_t step = 0;
};

/// sqrt(A A^T + shift^2 I) G + G sqrt(A^T A + shift^2 I).
inline Matrix self_consistent_drive(const Matrix& a, const Matrix& g, double shift_sq) {
  Matrix left = a * a.transpose();
  left.diagonal().array() += shift_sq;
  Matrix right = a.transpose() * a;
  right.diagonal().array() += shift_sq;
  Matrix out = psd_sqrt(left) * g;
  out.noalias() += g * psd_sqrt(right);
  return out;
}

/// One Euler step of the self-consistent dynamics, or of the balanced
/// dynamics when pm.mode is Balanced (same code path with the shift at 0).
inline ProductMatrix sc_step(const ProductMatrix& pm, const Task& task,
                             const ScalingPoint& scaling, double eta) {
  require(pm.mode == Mode::SelfConsistent || pm.mode == Mode::Balanced,
          ErrorCode::ModeMismatch, "sc_step needs self_consistent or balanced mode");
  const double shift_sq = pm.mode == Mode::Balanced ? 0.0 : scaling.shift_sq();
  const Matrix g = grad_cost(pm.a, task);
  ProductMatrix next{pm.a - eta * self_consistent_drive(pm.a, g, shift_sq), pm.mode, pm.step + 1};
  require(all_finite(next.a), ErrorCode::Diverged,
          "non-finite product matrix after step " + std::to_string(next.step));
  return next;
}

inline ProductMatrix lazy_step(const ProductMatrix& pm, const Task& task,
                               const ScalingPoint& scaling, double eta) {
  require(pm.mode == Mode::Lazy, ErrorCode::ModeMismatch, "lazy_step needs lazy mode");
  ProductMatrix next{pm.a - (2.0 * eta * scaling.sigma2w) * grad_cost(pm.a, task), pm.mode,
                     pm.step + 1};
  require(all_finite(next.a), ErrorCode::Diverged,
          "non-finite product matrix after step " + std::to_string(next.step));
  return next;
}

/// Per-step contraction of the lazy recursion, 1 - 4 d^{-2} eta s^2 w.
inline double lazy_contraction(const ScalingPoint& scaling, double eta) {
  const double d = static_cast<double>(scaling.d);
  return 1.0 - 4.0 * eta * scaling.sigma2w / (d * d);
}

struct LazyClosedForm {
  Matrix value;
  double contraction = 0.0;
  bool stable = true;  // |contraction| <= 1
};

/// A(t) = (A* + E) + rho^t (A(0) - (A* + E)).
inline LazyClosedForm lazy_closed_form(const Matrix& a0, const Task& task,
                                       const ScalingPoint& scaling, double eta, std::size_t t) {
  require(a0.rows() == task.d && a0.cols() == task.d, ErrorCode::DimensionMismatch,
          "lazy_closed_form: A0 is not d x d");
  const double rho = lazy_contraction(scaling, eta);
  if (t == 0) return {a0, rho, std::abs(rho) <= 1.0};
  const double factor = std::pow(rho, static_cast<double>(t));
  return {task.observed + factor * (a0 - task.observed), rho, std::abs(rho) <= 1.0};
}

}  // namespace lindyn
