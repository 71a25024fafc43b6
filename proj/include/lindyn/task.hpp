#pragma once

// The noisy low-rank recovery task, the (d, gamma_w, gamma_sigma2) scaling
// point, the MSE cost gradient and the train/test errors.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "lindyn/error.hpp"
#include "lindyn/linalg.hpp"
#include "lindyn/rng.hpp"

namespace lindyn {

struct Task {
  Index d = 0;
  Index rank = 0;
  std::uint64_t seed = 0;
  Matrix a_star;
  Matrix noise;
  Matrix observed;  // a_star + noise
  std::vector<double> target_svals;  // top `rank` singular values of a_star, descending
  Matrix left_signal;   // d x rank
  Matrix right_signal;  // d x rank

  double a_star_op() const { return target_svals.empty() ? 0.0 : target_svals.front(); }

  /// Target singular values in units of d, i.e. the a_i with s_i(A*) = d a_i.
  std::vector<double> a_values() const {
    std::vector<double> a(target_svals);
    for (double& v : a) v /= static_cast<double>(d);
    return a;
  }
};

namespace detail {

inline void finish_task(Task& task) {
  task.observed = task.a_star + task.noise;
  SvdTriple svd = svd_desc(task.a_star);
  task.target_svals.assign(svd.s.data(), svd.s.data() + task.rank);
  task.left_signal = svd.u.leftCols(task.rank);
  task.right_signal = svd.v.leftCols(task.rank);
}

inline Matrix gaussian_matrix(Index rows, Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

}  // namespace detail

/// A* = K^{-1/2} sum_i u_i v_i^T with u_i, v_i ~ N(0, I_d), and E with i.i.d.
/// N(0, 1) entries. Draw order: (u_1, v_1, u_2, v_2, ...) from the target
/// stream, E row-major from the noise stream.
inline Task make_task(Index d, Index rank, std::uint64_t seed) {
  require(rank >= 1 && rank <= d, ErrorCode::BadRank,
          "rank " + std::to_string(rank) + " outside [1, " + std::to_string(d) + "]");
  Task task;
  task.d = d;
  task.rank = rank;
  task.seed = seed;

  Rng factors(derive_seed(seed, Stream::TargetFactors));
  Matrix u(d, rank);
  Matrix v(d, rank);
  for (Index i = 0; i < rank; ++i) {
    for (Index r = 0; r < d; ++r) u(r, i) = factors.normal();
    for (Index r = 0; r < d; ++r) v(r, i) = factors.normal();
  }
  task.a_star = (u * v.transpose()) / std::sqrt(static_cast<double>(rank));

  Rng noise(derive_seed(seed, Stream::Noise));
  task.noise = detail::gaussian_matrix(d, d, noise);
  detail::finish_task(task);
  return task;
}

/// Deterministic-spectrum variant: A* = d sum_i a_i u_i v_i^T with orthonormal
/// u_i, v_i (Householder QR of Gaussian draws). `a` must be positive and
/// nonincreasing. The noise is drawn exactly as in make_task.
inline Task make_task_from_a(Index d, std::span<const double> a, std::uint64_t seed) {
  const auto rank = static_cast<Index>(a.size());
  require(rank >= 1 && rank <= d, ErrorCode::BadRank,
          "a-list length " + std::to_string(rank) + " outside [1, " + std::to_string(d) + "]");
  for (std::size_t i = 0; i < a.size(); ++i) {
    require(a[i] > 0.0 && std::isfinite(a[i]), ErrorCode::BadRank, "a-list entries must be positive");
    require(i == 0 || a[i] <= a[i - 1], ErrorCode::BadRank, "a-list must be nonincreasing");
  }
  Task task;
  task.d = d;
  task.rank = rank;
  task.seed = seed;

  Rng factors(derive_seed(seed, Stream::TargetFactors));
  auto orthonormal = [&](Rng& rng) {
    Matrix g = detail::gaussian_matrix(d, rank, rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(d, rank);
    Matrix r = qr.matrixQR().topRows(rank).triangularView<Eigen::Upper>();
    for (Index i = 0; i < rank; ++i)
      if (r(i, i) < 0.0) q.col(i) *= -1.0;
    return q;
  };
  Matrix u = orthonormal(factors);
  Matrix v = orthonormal(factors);
  Vector scale(rank);
  for (Index i = 0; i < rank; ++i) scale(i) = static_cast<double>(d) * a[static_cast<std::size_t>(i)];
  task.a_star = u * scale.asDiagonal() * v.transpose();

  Rng noise(derive_seed(seed, Stream::Noise));
  task.noise = detail::gaussian_matrix(d, d, noise);
  detail::finish_task(task);
  return task;
}

/// Task around given matrices, e.g. a rotated or hand-built target.
inline Task task_from_matrices(Matrix a_star, Matrix noise, Index rank, std::uint64_t seed = 0) {
  require(a_star.rows() == a_star.cols() && noise.rows() == a_star.rows() &&
              noise.cols() == a_star.cols(),
          ErrorCode::DimensionMismatch, "task matrices must be square and equally sized");
  require(rank >= 1 && rank <= a_star.rows(), ErrorCode::BadRank, "rank out of range");
  Task task;
  task.d = a_star.rows();
  task.rank = rank;
  task.seed = seed;
  task.a_star = std::move(a_star);
  task.noise = std::move(noise);
  detail::finish_task(task);
  return task;
}

/// 2 d^{-2} (A - (A* + E)).
inline Matrix grad_cost(const Matrix& a, const Task& task) {
  require(a.rows() == task.d && a.cols() == task.d, ErrorCode::DimensionMismatch,
          "grad_cost: matrix is not d x d");
  const double d = static_cast<double>(task.d);
  return (2.0 / (d * d)) * (a - task.observed);
}

struct Errors {
  double train = 0.0;
  double test = 0.0;
};

inline Errors eval_errors(const Matrix& a, const Task& task) {
  require(a.rows() == task.d && a.cols() == task.d, ErrorCode::DimensionMismatch,
          "eval_errors: matrix is not d x d");
  const double d2 = static_cast<double>(task.d) * static_cast<double>(task.d);
  return {(a - task.observed).squaredNorm() / d2, (a - task.a_star).squaredNorm() / d2};
}

// ---------------------------------------------------------------------------
// Scaling point

enum class Region { Lazy, Active, Boundary };

inline const char* to_string(Region r) noexcept {
  switch (r) {
    case Region::Lazy: return "lazy";
    case Region::Active: return "active";
    case Region::Boundary: return "boundary";
  }
  return "unknown";
}

inline constexpr double kDefaultLearningRateConstant = 50.0;

/// One cell of the phase diagram. Region flags are always derived from the
/// exponents, never stored.
struct ScalingPoint {
  Index d = 0;
  double gamma_w = 0.0;
  double gamma_sigma2 = 0.0;
  Index w = 1;
  double sigma2 = 0.0;
  double sigma2w = 0.0;
  double c_lr = kDefaultLearningRateConstant;
  double eta = 0.0;

  double exponent_sum() const { return gamma_sigma2 + gamma_w; }
  Region region() const {
    const double s = exponent_sum();
    if (std::abs(s - 1.0) <= 1e-12) return Region::Boundary;
    return s > 1.0 ? Region::Lazy : Region::Active;
  }
  bool lazy() const { return region() == Region::Lazy; }
  bool active() const { return region() == Region::Active; }
  bool boundary() const { return region() == Region::Boundary; }
  bool finite_variance() const { return 2.0 * gamma_sigma2 + gamma_w <= 0.0; }
  bool overparametrized() const { return gamma_w >= 1.0; }
  bool degenerate() const { return !overparametrized() || !finite_variance(); }
  /// (sigma^2 w)^2, squared from the stored product.
  double shift_sq() const { return sigma2w * sigma2w; }
};

/// eta = d^2 / (c w sigma^2) in the lazy region and d^2 / (c ||A*||_op)
/// otherwise.
inline double default_learning_rate(Index d, double sigma2w, bool lazy, double c_lr,
                                    double a_star_op) {
  const double d2 = static_cast<double>(d) * static_cast<double>(d);
  if (lazy) return d2 / (c_lr * sigma2w);
  return a_star_op > 0.0 ? d2 / (c_lr * a_star_op) : std::numeric_limits<double>::quiet_NaN();
}

namespace detail {
inline ScalingPoint finish_scaling(ScalingPoint p, double a_star_op) {
  p.sigma2 = std::pow(static_cast<double>(p.d), p.gamma_sigma2);
  p.sigma2w = p.sigma2 * static_cast<double>(p.w);
  p.eta = default_learning_rate(p.d, p.sigma2w, p.lazy(), p.c_lr, a_star_op);
  return p;
}
}  // namespace detail

/// w = max(1, round(d^gamma_w)), sigma^2 = d^gamma_sigma2. The active-region
/// learning rate needs ||A*||_op from the task; pass 0 when unknown (eta is
/// then NaN outside the lazy region).
inline ScalingPoint scaling_point(Index d, double gamma_w, double gamma_sigma2,
                                  double c_lr = kDefaultLearningRateConstant,
                                  double a_star_op = 0.0) {
  require(d >= 2, ErrorCode::ConfigError, "scaling point needs d >= 2");
  require(c_lr > 0.0, ErrorCode::ConfigError, "c_lr must be positive");
  ScalingPoint p;
  p.d = d;
  p.gamma_w = gamma_w;
  p.gamma_sigma2 = gamma_sigma2;
  p.c_lr = c_lr;
  const double width = std::round(std::pow(static_cast<double>(d), gamma_w));
  p.w = static_cast<Index>(std::max(1.0, width));
  return detail::finish_scaling(p, a_star_op);
}

/// Scaling point with an explicit integer width; gamma_w = ln w / ln d.
inline ScalingPoint scaling_point_for_width(Index d, Index w, double gamma_sigma2,
                                            double c_lr = kDefaultLearningRateConstant,
                                            double a_star_op = 0.0) {
  require(d >= 2 && w >= 1, ErrorCode::ConfigError, "need d >= 2 and w >= 1");
  require(c_lr > 0.0, ErrorCode::ConfigError, "c_lr must be positive");
  ScalingPoint p;
  p.d = d;
  p.w = w;
  p.gamma_w = std::log(static_cast<double>(w)) / std::log(static_cast<double>(d));
  p.gamma_sigma2 = gamma_sigma2;
  p.c_lr = c_lr;
  return detail::finish_scaling(p, a_star_op);
}

// ---------------------------------------------------------------------------
// Task dump: CSV, matrices row-major, full double precision.
//
//   d,K,seed
//   <d>,<K>,<seed>
//   a_star
//   <d rows of d values>
//   noise
//   <d rows of d values>

inline void write_task_csv(const Task& task, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot open " + path);
  out << std::setprecision(17);
  out << "d,K,seed\n" << task.d << ',' << task.rank << ',' << task.seed << '\n';
  auto dump = [&](const char* name, const Matrix& m) {
    out << name << '\n';
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m(r, c);
      out << '\n';
    }
  };
  dump("a_star", task.a_star);
  dump("noise", task.noise);
  require(static_cast<bool>(out), ErrorCode::IoError, "write failed for " + path);
}

inline Task read_task_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path);
  std::string line;
  auto next = [&]() {
    require(static_cast<bool>(std::getline(in, line)), ErrorCode::IoError, "truncated task dump");
    return line;
  };
  require(next() == "d,K,seed", ErrorCode::IoError, "bad task dump header");
  Task task;
  {
    std::istringstream hdr(next());
    char comma = 0;
    hdr >> task.d >> comma >> task.rank >> comma >> task.seed;
    require(!hdr.fail() && task.d >= 1 && task.rank >= 1 && task.rank <= task.d,
            ErrorCode::IoError, "bad task dump dimensions");
  }
  auto load = [&](const char* name) {
    require(next() == name, ErrorCode::IoError, std::string("expected section ") + name);
    Matrix m(task.d, task.d);
    for (Index r = 0; r < task.d; ++r) {
      std::istringstream row(next());
      std::string cell;
      for (Index c = 0; c < task.d; ++c) {
        require(static_cast<bool>(std::getline(row, cell, ',')), ErrorCode::IoError, "short row");
        m(r, c) = std::stod(cell);
      }
    }
    return m;
  };
  task.a_star = load("a_star");
  task.noise = load("noise");
  detail::finish_task(task);
  return task;
}

}  // namespace lindyn
