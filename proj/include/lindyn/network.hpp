#pragma once

// Two-layer linear network A = W2 W1 trained by plain gradient descent.
//
// Two exact representations of the same iteration:
//   FactorNetwork  holds W1 (w x d) and W2 (d x w) explicitly.
//   GramNetwork    holds A = W2 W1, C1 = W1^T W1 and C2 = W2 W2^T (all d x d).
// The GD recursion closes on (A, C1, C2):
//   A'  = A  - eta (C2 G + G C1)     + eta^2 G A^T G
//   C1' = C1 - eta (A^T G + G^T A)   + eta^2 G^T C2 G
//   C2' = C2 - eta (A G^T + G A^T)   + eta^2 G C1 G^T
// so for w >> d the Gram form costs O(d^3) per step instead of O(w d^2).

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "lindyn/error.hpp"
#include "lindyn/linalg.hpp"
#include "lindyn/rng.hpp"
#include "lindyn/task.hpp"

namespace lindyn {

struct FactorNetwork {
  Matrix w1;  // w x d
  Matrix w2;  // d x w
  std::size_t step = 0;

  Index width() const { return w1.rows(); }
  Index dim() const { return w1.cols(); }
};

struct GramNetwork {
  Matrix product;  // A = W2 W1
  Matrix c1;       // W1^T W1
  Matrix c2;       // W2 W2^T
  Index width = 0;
  std::size_t step = 0;

  Index dim() const { return product.rows(); }
};

inline Matrix product(const FactorNetwork& s) { return s.w2 * s.w1; }
inline const Matrix& product(const GramNetwork& s) { return s.product; }

inline GramNetwork to_gram(const FactorNetwork& s) {
  GramNetwork g;
  g.product = s.w2 * s.w1;
  g.c1 = s.w1.transpose() * s.w1;
  g.c2 = s.w2 * s.w2.transpose();
  g.width = s.width();
  g.step = s.step;
  return g;
}
inline const GramNetwork& to_gram(const GramNetwork& s) { return s; }

/// i.i.d. N(0, sigma^2) weights. Hidden unit k draws row k of W1 from the
/// first-layer stream and column k of W2 from the second-layer stream, each
/// as d consecutive normals.
inline FactorNetwork init_network(const ScalingPoint& scaling, std::uint64_t seed) {
  const Index d = scaling.d;
  const Index w = scaling.w;
  require(w >= 1, ErrorCode::ConfigError, "width must be >= 1");
  const double sd = std::sqrt(scaling.sigma2);
  FactorNetwork s{Matrix(w, d), Matrix(d, w), 0};
  Rng first(derive_seed(seed, Stream::FirstLayer));
  Rng second(derive_seed(seed, Stream::SecondLayer));
  for (Index k = 0; k < w; ++k) {
    for (Index j = 0; j < d; ++j) s.w1(k, j) = sd * first.normal();
    for (Index i = 0; i < d; ++i) s.w2(i, k) = sd * second.normal();
  }
  return s;
}

/// Same weights as init_network (same seed, same draw order), accumulated
/// straight into the Gram representation in blocks of hidden units so the
/// w x d factors never exist in full.
inline GramNetwork init_gram(const ScalingPoint& scaling, std::uint64_t seed,
                             Index block = 2048) {
  const Index d = scaling.d;
  const Index w = scaling.w;
  require(w >= 1, ErrorCode::ConfigError, "width must be >= 1");
  const double sd = std::sqrt(scaling.sigma2);
  GramNetwork g{Matrix::Zero(d, d), Matrix::Zero(d, d), Matrix::Zero(d, d), w, 0};
  Rng first(derive_seed(seed, Stream::FirstLayer));
  Rng second(derive_seed(seed, Stream::SecondLayer));
  Matrix w1(std::min(block, w), d);
  Matrix w2(d, std::min(block, w));
  for (Index start = 0; start < w; start += block) {
    const Index n = std::min(block, w - start);
    for (Index k = 0; k < n; ++k) {
      for (Index j = 0; j < d; ++j) w1(k, j) = sd * first.normal();
      for (Index i = 0; i < d; ++i) w2(i, k) = sd * second.normal();
    }
    auto b1 = w1.topRows(n);
    auto b2 = w2.leftCols(n);
    g.product.noalias() += b2 * b1;
    g.c1.selfadjointView<Eigen::Lower>().rankUpdate(b1.transpose());
    g.c2.selfadjointView<Eigen::Lower>().rankUpdate(b2);
  }
  g.c1 = g.c1.selfadjointView<Eigen::Lower>();
  g.c2 = g.c2.selfadjointView<Eigen::Lower>();
  return g;
}

/// Simultaneous update: both factors move from the time-t weights.
inline FactorNetwork gd_step(const FactorNetwork& s, const Task& task, double eta) {
  const Matrix g = grad_cost(product(s), task);
  FactorNetwork next;
  next.w1 = s.w1 - eta * (s.w2.transpose() * g);
  next.w2 = s.w2 - eta * (g * s.w1.transpose());
  next.step = s.step + 1;
  require(all_finite(next.w1) && all_finite(next.w2), ErrorCode::Diverged,
          "non-finite weights after step " + std::to_string(next.step));
  return next;
}

inline GramNetwork gd_step(const GramNetwork& s, const Task& task, double eta) {
  const Matrix g = grad_cost(s.product, task);
  const Matrix c2g = s.c2 * g;
  const Matrix gc1 = g * s.c1;
  const Matrix atg = s.product.transpose() * g;  // (G^T A)^T
  const Matrix agt = s.product * g.transpose();  // (G A^T)^T
  const double eta2 = eta * eta;

  GramNetwork next;
  next.width = s.width;
  next.step = s.step + 1;
  next.product = s.product - eta * (c2g + gc1);
  next.product.noalias() += eta2 * (agt.transpose() * g);
  next.c1 = s.c1 - eta * (atg + atg.transpose());
  next.c1.noalias() += eta2 * (g.transpose() * c2g);
  next.c2 = s.c2 - eta * (agt + agt.transpose());
  next.c2.noalias() += eta2 * (gc1 * g.transpose());
  require(all_finite(next.product) && all_finite(next.c1) && all_finite(next.c2),
          ErrorCode::Diverged, "non-finite state after step " + std::to_string(next.step));
  return next;
}

/// W2^T W2 - W1 W1^T (w x w), exactly conserved by gradient flow.
inline Matrix conserved_quantity(const FactorNetwork& s) {
  return s.w2.transpose() * s.w2 - s.w1 * s.w1.transpose();
}

/// Exact one-step change of the conserved quantity under gd_step:
/// eta^2 (W1 G^T G W1^T - W2^T G G^T W2) evaluated at the pre-step weights.
inline Matrix conserved_increment(const FactorNetwork& s, const Task& task, double eta) {
  const Matrix g = grad_cost(product(s), task);
  const Matrix a = s.w1 * g.transpose();  // w x d
  const Matrix b = s.w2.transpose() * g;  // w x d
  return eta * eta * (a * a.transpose() - b * b.transpose());
}

/// ||(W2^T W2 - W1 W1^T)(t) - (W2^T W2 - W1 W1^T)(0)||_op.
inline double invariant_drift(const FactorNetwork& s, const FactorNetwork& s0) {
  require(s.w1.rows() == s0.w1.rows() && s.w1.cols() == s0.w1.cols() &&
              s.w2.rows() == s0.w2.rows() && s.w2.cols() == s0.w2.cols(),
          ErrorCode::DimensionMismatch, "invariant_drift: states have different shapes");
  return sym_op_norm(conserved_quantity(s) - conserved_quantity(s0));
}

}  // namespace lindyn
