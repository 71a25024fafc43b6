#pragma once

// Diagnostics evaluated along a trajectory: singular-frame alignment x, the
// gap between the layer covariances and their self-consistent predictions,
// threshold crossings, hidden-layer alignment, the NTK map, and the
// leading-order stopping time of the active regime.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "lindyn/error.hpp"
#include "lindyn/linalg.hpp"
#include "lindyn/network.hpp"
#include "lindyn/task.hpp"

namespace lindyn {

/// Relative tolerance under which two target singular values share a block.
inline constexpr double kBlockTolerance = 1e-9;

/// Contiguous groups [boundaries[k], boundaries[k+1]) of equal target
/// singular values. boundaries.front() == 0, boundaries.back() == K.
struct SignalBlocks {
  std::vector<Index> boundaries;
  std::vector<double> values;

  std::size_t count() const { return values.size(); }
  Index size(std::size_t k) const { return boundaries[k + 1] - boundaries[k]; }
  Index rank() const { return boundaries.empty() ? 0 : boundaries.back(); }
};

inline bool same_block(double a, double b, double tol = kBlockTolerance) {
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

inline SignalBlocks make_signal_blocks(std::span<const double> svals,
                                       double tol = kBlockTolerance) {
  SignalBlocks blocks;
  blocks.boundaries.push_back(0);
  for (std::size_t i = 0; i < svals.size(); ++i) {
    require(i == 0 || svals[i] <= svals[i - 1], ErrorCode::DegenerateTarget,
            "target singular values must be nonincreasing");
    if (i == 0 || !same_block(svals[i], blocks.values.back(), tol)) {
      if (i != 0) blocks.boundaries.push_back(static_cast<Index>(i));
      blocks.values.push_back(svals[i]);
    }
  }
  blocks.boundaries.push_back(static_cast<Index>(svals.size()));
  return blocks;
}

inline SignalBlocks make_signal_blocks(const Task& task) {
  return make_signal_blocks(std::span<const double>(task.target_svals));
}

struct AlignmentReport {
  double x = 0.0;
  std::vector<double> block_contributions;  // sums to x
};

/// x = 4K - sum_k ||U~(k,k) + V~(k,k)||_F^2, where U~ = U*^T U_A and
/// V~ = V*^T V_A restricted to the signal rows and columns of block k. This is
/// the block-trace form tr(U^T U + V^T V + 2 U V^T) written as one norm.
inline AlignmentReport alignment_x(const SvdTriple& svd_a, const Task& task,
                                   const SignalBlocks& blocks) {
  const Index k = task.rank;
  require(blocks.rank() == k, ErrorCode::DimensionMismatch, "blocks do not cover the target rank");
  require(svd_a.u.rows() == task.d && svd_a.v.rows() == task.d, ErrorCode::DimensionMismatch,
          "alignment_x: SVD is not d x d");
  require(task.target_svals.back() > 1e-12 * task.target_svals.front(),
          ErrorCode::DegenerateTarget, "target has a zero signal singular value");

  const Matrix ut = task.left_signal.transpose() * svd_a.u.leftCols(k);
  const Matrix vt = task.right_signal.transpose() * svd_a.v.leftCols(k);
  AlignmentReport report;
  for (std::size_t b = 0; b < blocks.count(); ++b) {
    const Index start = blocks.boundaries[b];
    const Index n = blocks.size(b);
    const double overlap =
        (ut.block(start, start, n, n) + vt.block(start, start, n, n)).squaredNorm();
    const double contribution = 4.0 * static_cast<double>(n) - overlap;
    report.block_contributions.push_back(contribution);
    report.x += contribution;
  }
  return report;
}

inline AlignmentReport alignment_x(const Matrix& a, const Task& task, const SignalBlocks& blocks) {
  require(all_finite(a), ErrorCode::NonFinite, "alignment_x: non-finite matrix");
  return alignment_x(svd_desc(a), task, blocks);
}

struct Theorem1Gap {
  double gap1 = 0.0;     // ||C1 - sqrt(A^T A + (s^2 w)^2 I)||_op
  double gap2 = 0.0;     // ||C2 - sqrt(A A^T + (s^2 w)^2 I)||_op
  double bound_a = 0.0;  // s^2 w
  double bound_b = 0.0;  // sqrt(d / w) ||C1||_op

  double bound() const { return std::min(bound_a, bound_b); }
  /// gap1 relative to the unit-constant bound.
  double ratio() const { return gap1 / bound(); }
};

inline Theorem1Gap theorem1_gap(const GramNetwork& s, const ScalingPoint& scaling) {
  const Matrix& a = s.product;
  Matrix right = a.transpose() * a;
  right.diagonal().array() += scaling.shift_sq();
  Matrix left = a * a.transpose();
  left.diagonal().array() += scaling.shift_sq();
  Theorem1Gap out;
  out.gap1 = sym_op_norm(s.c1 - psd_sqrt(right));
  out.gap2 = sym_op_norm(s.c2 - psd_sqrt(left));
  out.bound_a = scaling.sigma2w;
  out.bound_b = std::sqrt(static_cast<double>(s.dim()) / static_cast<double>(s.width)) *
                sym_op_norm(s.c1);
  return out;
}

inline Theorem1Gap theorem1_gap(const FactorNetwork& s, const ScalingPoint& scaling) {
  return theorem1_gap(to_gram(s), scaling);
}

struct Crossing {
  std::size_t index = 0;  // 0-based singular value index
  std::size_t step = 0;
};

/// First recorded step at which each tracked singular value exceeds
/// `threshold`, sorted by step (ties by index). Values that never cross are
/// omitted.
inline std::vector<Crossing> threshold_crossings(std::span<const std::size_t> steps,
                                                 std::span<const std::vector<double>> svals,
                                                 double threshold) {
  require(steps.size() == svals.size(), ErrorCode::DimensionMismatch,
          "threshold_crossings: series lengths differ");
  std::vector<Crossing> out;
  if (svals.empty()) return out;
  const std::size_t tracked = svals.front().size();
  for (std::size_t i = 0; i < tracked; ++i) {
    for (std::size_t r = 0; r < svals.size(); ++r) {
      if (i < svals[r].size() && svals[r][i] > threshold) {
        out.push_back({i, steps[r]});
        break;
      }
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Crossing& a, const Crossing& b) { return a.step < b.step; });
  return out;
}

struct HiddenAlignment {
  double lhs = 0.0;  // u_i^T W2 W1 v_i / (||W2^T u_i|| ||W1 v_i||)
  double rhs = 0.0;  // s_i / sqrt(s_i^2 + (s^2 w)^2)
};

namespace detail {
inline HiddenAlignment hidden_alignment_from(double numerator, double left_sq, double right_sq,
                                             double s, const ScalingPoint& scaling) {
  const double left = std::sqrt(std::max(left_sq, 0.0));
  const double right = std::sqrt(std::max(right_sq, 0.0));
  require(left >= 1e-14 && right >= 1e-14, ErrorCode::ZeroVector,
          "hidden representation has vanishing norm");
  HiddenAlignment out;
  out.lhs = std::clamp(numerator / (left * right), -1.0, 1.0);
  out.rhs = s / std::sqrt(s * s + scaling.shift_sq());
  return out;
}
}  // namespace detail

/// Normalized overlap of the hidden vectors W2^T u_i and W1 v_i for the i-th
/// (0-based) singular pair of A. Gram form: ||W2^T u||^2 = u^T C2 u and
/// ||W1 v||^2 = v^T C1 v.
inline HiddenAlignment hidden_alignment(const GramNetwork& s, Index i, const ScalingPoint& scaling) {
  require(i >= 0 && i < s.dim(), ErrorCode::DimensionMismatch, "singular index out of range");
  const SvdTriple svd = svd_desc(s.product);
  const Vector u = svd.u.col(i);
  const Vector v = svd.v.col(i);
  return detail::hidden_alignment_from(u.dot(s.product * v), u.dot(s.c2 * u), v.dot(s.c1 * v),
                                       svd.s(i), scaling);
}

inline HiddenAlignment hidden_alignment(const FactorNetwork& s, Index i, const ScalingPoint& scaling) {
  require(i >= 0 && i < s.dim(), ErrorCode::DimensionMismatch, "singular index out of range");
  const Matrix a = product(s);
  const SvdTriple svd = svd_desc(a);
  const Vector u = svd.u.col(i);
  const Vector v = svd.v.col(i);
  const Vector hu = s.w2.transpose() * u;
  const Vector hv = s.w1 * v;
  return detail::hidden_alignment_from(hu.dot(hv), hu.squaredNorm(), hv.squaredNorm(), svd.s(i),
                                       scaling);
}

/// Theta(G) = C2 G + G C1.
inline Matrix ntk_apply(const Matrix& g, const GramNetwork& s) {
  require(g.rows() == s.dim() && g.cols() == s.dim(), ErrorCode::DimensionMismatch,
          "ntk_apply: G is not d x d");
  return s.c2 * g + g * s.c1;
}

inline Matrix ntk_apply(const Matrix& g, const FactorNetwork& s) {
  require(g.rows() == s.dim() && g.cols() == s.dim(), ErrorCode::DimensionMismatch,
          "ntk_apply: G is not d x d");
  return s.w2 * (s.w2.transpose() * g) + (g * s.w1.transpose()) * s.w1;
}

/// c(a) = min_{a_k != a_j} |a_k - a_j| a_K^2 / max_{a_k != a_j} |a_k^2 - a_j^2|.
inline double c_constant(std::span<const double> a) {
  require(!a.empty(), ErrorCode::AllEqual, "empty a-list");
  double min_gap = std::numeric_limits<double>::infinity();
  double max_sq_gap = 0.0;
  bool any = false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t j = k + 1; j < a.size(); ++j) {
      if (same_block(a[k], a[j])) continue;
      any = true;
      min_gap = std::min(min_gap, std::abs(a[k] - a[j]));
      max_sq_gap = std::max(max_sq_gap, std::abs(a[k] * a[k] - a[j] * a[j]));
    }
  }
  require(any, ErrorCode::AllEqual, "no pair of distinct target values");
  const double last = a.back();
  return min_gap * last * last / max_sq_gap;
}

struct TstarPrediction {
  double steps = 0.0;  // leading term only; the eta^{-1} O(d log log d) remainder is omitted
  double delta = 0.0;  // 1 - gamma_sigma2 - gamma_w
  double c = 0.0;
  double alignment_term = 0.0;   // Delta / a_K
  double separation_term = 0.0;  // 2 max(1, 2 Delta) / c
  double fitting_term = 0.0;     // max(1, 2 Delta) / (2 a_K)
};

/// t = (1/eta) (Delta/a_K + 2 max(1, 2 Delta)/c(a) + max(1, 2 Delta)/(2 a_K)) d log d,
/// in GD steps.
inline TstarPrediction predict_tstar(const ScalingPoint& scaling, std::span<const double> a,
                                     double eta) {
  TstarPrediction p;
  p.delta = 1.0 - scaling.gamma_sigma2 - scaling.gamma_w;
  require(p.delta > 0.0, ErrorCode::NotActiveRegion,
          "stopping time is only defined for gamma_sigma2 + gamma_w < 1");
  require(eta > 0.0, ErrorCode::ConfigError, "eta must be positive");
  p.c = c_constant(a);
  const double m = std::max(1.0, 2.0 * p.delta);
  const double a_last = a.back();
  p.alignment_term = p.delta / a_last;
  p.separation_term = 2.0 * m / p.c;
  p.fitting_term = m / (2.0 * a_last);
  const double d = static_cast<double>(scaling.d);
  p.steps = (p.alignment_term + p.separation_term + p.fitting_term) * d * std::log(d) / eta;
  return p;
}

}  // namespace lindyn
