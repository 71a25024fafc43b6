#pragma once

// Invariant suites behind `lindyn verify`. Each suite is self-contained and
// deterministic; every check reports the measured value and its threshold.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lindyn/integrators.hpp"
#include "lindyn/linalg.hpp"
#include "lindyn/metrics.hpp"
#include "lindyn/network.hpp"
#include "lindyn/rng.hpp"
#include "lindyn/task.hpp"

namespace lindyn::verify {

struct Check {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
};

struct Options {
  Index d = 50;
  std::uint64_t seed = 1;
};

using Suite = std::function<std::vector<Check>(const Options&)>;

namespace detail {

inline std::string fmt(double measured, const char* op, double limit) {
  std::ostringstream s;
  s.precision(4);
  s << std::scientific << measured << ' ' << op << ' ' << limit;
  return s.str();
}

inline Check at_most(const std::string& suite, const std::string& name, double measured,
                     double limit) {
  return {suite, name, std::isfinite(measured) && measured <= limit, fmt(measured, "<=", limit)};
}

inline Check at_least(const std::string& suite, const std::string& name, double measured,
                      double limit) {
  return {suite, name, std::isfinite(measured) && measured >= limit, fmt(measured, ">=", limit)};
}

inline Matrix gaussian(Index rows, Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

inline Matrix random_orthogonal(Index n, Rng& rng) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(n, n, rng));
  return qr.householderQ();
}

}  // namespace detail

inline std::vector<Check> linalg_suite(const Options& opt) {
  const std::string s = "linalg";
  std::vector<Check> out;
  Rng rng(derive_seed(opt.seed, Stream::CellInit, 11));

  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Vector diag(8);
    for (Index i = 0; i < 8; ++i) diag(i) = std::abs(rng.normal()) * (trial + 1);
    Matrix root = psd_sqrt(Matrix(diag.cwiseProduct(diag).asDiagonal()));
    worst = std::max(worst, (root - Matrix(diag.asDiagonal())).cwiseAbs().maxCoeff());
  }
  out.push_back(detail::at_most(s, "psd_sqrt(D^2) = D", worst, 1e-10));

  worst = 0.0;
  for (double c : {0.0, 0.5, 1.0, 3.0, 1e3}) {
    Matrix root = psd_sqrt(c * c * Matrix::Identity(6, 6));
    worst = std::max(worst, (root - c * Matrix::Identity(6, 6)).norm() / std::max(1.0, c));
  }
  out.push_back(detail::at_most(s, "psd_sqrt(c^2 I) = c I", worst, 1e-12));

  worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 2 + trial % 30;
    Matrix x = detail::gaussian(n, n, rng);
    Matrix m = x * x.transpose();
    Matrix root = psd_sqrt(m);
    worst = std::max(worst, (root * root - m).norm() / std::max(1.0, m.norm()));
  }
  out.push_back(detail::at_most(s, "psd_sqrt squares back", worst, 1e-8));

  double recon = 0.0;
  double orth = 0.0;
  bool sorted = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const Index rows = 1 + trial % 50;
    const Index cols = 1 + (trial * 7) % 50;
    Matrix a = detail::gaussian(rows, cols, rng);
    SvdTriple svd = svd_desc(a);
    Matrix sigma = Matrix::Zero(rows, cols);
    for (Index i = 0; i < svd.s.size(); ++i) sigma(i, i) = svd.s(i);
    recon = std::max(recon, (svd.u * sigma * svd.v.transpose() - a).norm() / std::max(1.0, a.norm()));
    orth = std::max(orth, (svd.u.transpose() * svd.u - Matrix::Identity(rows, rows)).cwiseAbs().maxCoeff());
    orth = std::max(orth, (svd.v.transpose() * svd.v - Matrix::Identity(cols, cols)).cwiseAbs().maxCoeff());
    for (Index i = 1; i < svd.s.size(); ++i) sorted = sorted && svd.s(i) <= svd.s(i - 1);
  }
  out.push_back(detail::at_most(s, "svd_desc reconstruction (1000 matrices)", recon, 1e-9));
  out.push_back(detail::at_most(s, "svd_desc orthogonality (1000 matrices)", orth, 1e-9));
  out.push_back({s, "svd_desc descending", sorted, sorted ? "ok" : "unsorted output"});

  worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a = detail::gaussian(12, 9, rng);
    const double base = stable_rank(a);
    for (double c : {-3.0, 1e-3, 7.5}) worst = std::max(worst, std::abs(stable_rank(c * a) - base) / base);
  }
  out.push_back(detail::at_most(s, "stable_rank scale invariance", worst, 1e-12));
  return out;
}

inline std::vector<Check> gradient_suite(const Options& opt) {
  const std::string s = "gradient";
  std::vector<Check> out;
  double worst = 0.0;
  for (std::uint64_t inst = 0; inst < 10; ++inst) {
    const Task task = make_task(5, 2, opt.seed + inst);
    Rng rng(derive_seed(opt.seed + inst, Stream::CellInit, 21));
    const Matrix a = detail::gaussian(5, 5, rng);
    const Matrix g = grad_cost(a, task);
    const double h = 1e-5;
    Matrix fd(5, 5);
    for (Index i = 0; i < 5; ++i) {
      for (Index j = 0; j < 5; ++j) {
        Matrix plus = a;
        Matrix minus = a;
        plus(i, j) += h;
        minus(i, j) -= h;
        fd(i, j) = (eval_errors(plus, task).train - eval_errors(minus, task).train) / (2 * h);
      }
    }
    worst = std::max(worst, (fd - g).norm() / g.norm());
  }
  out.push_back(detail::at_most(s, "central-difference gradient check (10 x 5x5)", worst, 1e-5));
  return out;
}

inline std::vector<Check> conservation_suite(const Options& opt) {
  const std::string s = "conservation";
  std::vector<Check> out;
  {
    const Task task = make_task(4, 2, opt.seed);
    const ScalingPoint sp = scaling_point_for_width(4, 4, 0.0, 50.0, task.a_star_op());
    FactorNetwork net = init_network(sp, opt.seed);
    double worst = 0.0;
    for (int step = 0; step < 20; ++step) {
      const Matrix predicted = conserved_increment(net, task, 0.3);
      FactorNetwork next = gd_step(net, task, 0.3);
      const Matrix actual = conserved_quantity(next) - conserved_quantity(net);
      worst = std::max(worst, (actual - predicted).cwiseAbs().maxCoeff());
      net = std::move(next);
    }
    out.push_back(detail::at_most(s, "per-step drift = eta^2 expression (4x4)", worst, 1e-12));
  }
  {
    const Index d = 20;
    const Task task = make_task(d, 3, opt.seed);
    const ScalingPoint sp = scaling_point_for_width(d, 100, -1.85, 50.0, task.a_star_op());
    const FactorNetwork start = init_network(sp, opt.seed);
    struct Drift {
      double total;
      double bound;
    };
    auto drift_after = [&](double eta, int steps) {
      FactorNetwork net = start;
      double worst_increment = 0.0;
      for (int k = 0; k < steps; ++k) {
        worst_increment = std::max(worst_increment, sym_op_norm(conserved_increment(net, task, eta)));
        net = gd_step(net, task, eta);
      }
      return Drift{invariant_drift(net, start), steps * worst_increment};
    };
    const Drift coarse_run = drift_after(sp.eta, 2000);
    const double coarse = coarse_run.total;
    const double fine = drift_after(sp.eta / 2, 4000).total;
    out.push_back(detail::at_most(s, "cumulative drift <= t max per-step drift", coarse / coarse_run.bound, 1.0));
    const double ratio = fine / coarse;
    out.push_back({s, "drift halves with eta at fixed time", ratio >= 0.5 / 1.5 && ratio <= 0.5 * 1.5,
                   detail::fmt(ratio, "in", 0.5) + " x [1/1.5, 1.5]"});
  }
  return out;
}

inline std::vector<Check> init_spectrum_suite(const Options& opt) {
  const std::string s = "init-spectrum";
  std::vector<Check> out;
  const Index d = opt.d;
  const Index w = 100 * d;
  const ScalingPoint sp = scaling_point_for_width(d, w, -1.85);
  const double sd = std::sqrt(static_cast<double>(d));
  const double sw = std::sqrt(static_cast<double>(w));
  const double slack = 3.0 * sp.sigma2 * std::sqrt(static_cast<double>(w * d)) *
                       std::pow(static_cast<double>(d), -1.0 / 3.0);
  const double lo = sp.sigma2 * (sw - sd) * (sw - sd) - slack;
  const double hi = sp.sigma2 * (sw + sd) * (sw + sd) + slack;
  double worst_excess = -std::numeric_limits<double>::infinity();
  for (std::uint64_t k = 0; k < 10; ++k) {
    const FactorNetwork net = init_network(sp, opt.seed + k);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(net.w1.transpose() * net.w1, Eigen::EigenvaluesOnly);
    worst_excess = std::max({worst_excess, lo - eig.eigenvalues()(0), eig.eigenvalues()(d - 1) - hi});
  }
  out.push_back(detail::at_most(s, "W1^T W1 eigenvalues inside inflated MP support", worst_excess, 0.0));

  const ScalingPoint vp = scaling_point_for_width(d, 40 * d, -1.85);
  double mean_sq = 0.0;
  for (std::uint64_t k = 0; k < 10; ++k) {
    const FactorNetwork net = init_network(vp, opt.seed + 100 + k);
    mean_sq += product(net).squaredNorm() / static_cast<double>(d * d);
  }
  mean_sq /= 10.0;
  const double expected = vp.sigma2 * vp.sigma2 * static_cast<double>(vp.w);
  out.push_back(detail::at_most(s, "entry variance of W2 W1 ~ sigma^4 w", std::abs(mean_sq / expected - 1.0), 0.2));
  return out;
}

inline std::vector<Check> lazy_oracle_suite(const Options& opt) {
  const std::string s = "lazy-oracle";
  const Index d = opt.d;
  const Task task = make_task(d, 5, opt.seed);
  const ScalingPoint sp = scaling_point(d, 2.0, -0.5, 50.0, task.a_star_op());
  const Matrix a0 = init_gram(sp, opt.seed).product;
  ProductMatrix pm{a0, Mode::Lazy, 0};
  for (int t = 0; t < 200; ++t) pm = lazy_step(pm, task, sp, sp.eta);
  const Matrix closed = lazy_closed_form(a0, task, sp, sp.eta, 200).value;
  return {detail::at_most(s, "200 lazy steps = closed form", (pm.a - closed).norm() / closed.norm(), 1e-10)};
}

inline std::vector<Check> limits_suite(const Options& opt) {
  const std::string s = "limits";
  std::vector<Check> out;
  const Index d = std::min<Index>(opt.d, 30);
  const Task task = make_task(d, 3, opt.seed);
  ScalingPoint sp = scaling_point(d, 2.25, -1.85, 50.0, task.a_star_op());
  const Matrix a0 = init_gram(sp, opt.seed).product;

  ScalingPoint zero = sp;
  zero.sigma2w = 0.0;
  const Matrix sc0 = sc_step({a0, Mode::SelfConsistent, 0}, task, zero, sp.eta).a;
  const Matrix bal = sc_step({a0, Mode::Balanced, 0}, task, sp, sp.eta).a;
  const bool identical = sc0 == bal;
  out.push_back({s, "self-consistent at s^2 w = 0 equals balanced bit-for-bit", identical,
                 identical ? "identical" : "differs"});

  const Matrix zero_a = Matrix::Zero(d, d);
  const Matrix sc = sc_step({zero_a, Mode::SelfConsistent, 0}, task, sp, sp.eta).a;
  const Matrix lazy = lazy_step({zero_a, Mode::Lazy, 0}, task, sp, sp.eta).a;
  out.push_back(detail::at_most(s, "self-consistent at A = 0 equals lazy", (sc - lazy).norm() / lazy.norm(), 1e-12));
  return out;
}

inline std::vector<Check> effective_lr_suite(const Options& opt) {
  const std::string s = "effective-lr";
  const Index d = 6;
  Matrix target = Matrix::Zero(d, d);
  Matrix a = Matrix::Zero(d, d);
  Rng rng(derive_seed(opt.seed, Stream::CellInit, 31));
  for (Index i = 0; i < d; ++i) {
    target(i, i) = 10.0 + 5.0 * std::abs(rng.normal());
    a(i, i) = 0.5 + 3.0 * std::abs(rng.normal());
  }
  const Task task = task_from_matrices(target, Matrix::Zero(d, d), d);
  const ScalingPoint sp = scaling_point(d, 1.5, -1.0);
  const Matrix g = grad_cost(a, task);
  double worst = 0.0;
  for (double eta : {1e-3, 1e-4}) {
    const Matrix next = sc_step({a, Mode::SelfConsistent, 0}, task, sp, eta).a;
    for (Index i = 0; i < d; ++i) {
      const double rate = (next(i, i) - a(i, i)) / eta;
      const double predicted = -2.0 * std::sqrt(a(i, i) * a(i, i) + sp.shift_sq()) * g(i, i);
      worst = std::max(worst, std::abs(rate - predicted) / std::abs(predicted));
    }
    const double off = (next - Matrix(next.diagonal().asDiagonal())).cwiseAbs().maxCoeff();
    worst = std::max(worst, off);
  }
  return {detail::at_most(s, "per-singular-value rate 2 eta sqrt(s^2 + s^4 w^2)", worst, 1e-8)};
}

inline std::vector<Check> theorem1_suite(const Options& opt) {
  const std::string s = "theorem1-gap";
  std::vector<Check> out;
  const Index d = opt.d;
  const ScalingPoint sp = scaling_point_for_width(d, 100 * d, -1.85);
  const GramNetwork g = init_gram(sp, opt.seed);
  const Theorem1Gap gap = theorem1_gap(g, sp);
  out.push_back(detail::at_most(s, "fresh init gap1 <= 5 sqrt(d/w) ||C1||", gap.gap1 / gap.bound_b, 5.0));

  // Balanced factorization W1 = sqrt(S) V^T, W2 = U sqrt(S) at s^2 w = 0.
  Rng rng(derive_seed(opt.seed, Stream::CellInit, 41));
  const Index n = 8;
  const SvdTriple svd = svd_desc(detail::gaussian(n, n, rng));
  FactorNetwork bal{svd.s.cwiseSqrt().asDiagonal() * svd.v.transpose(), svd.u * svd.s.cwiseSqrt().asDiagonal(), 0};
  ScalingPoint zero = scaling_point_for_width(n, n, 0.0);
  zero.sigma2w = 0.0;
  const Theorem1Gap bg = theorem1_gap(bal, zero);
  out.push_back(detail::at_most(s, "balanced factorization has zero gap", std::max(bg.gap1, bg.gap2), 1e-10));
  return out;
}

inline std::vector<Check> alignment_suite(const Options& opt) {
  const std::string s = "alignment";
  std::vector<Check> out;
  const Index d = std::min<Index>(opt.d, 40);
  const Index k = 4;
  const Task task = make_task(d, k, opt.seed);
  const SignalBlocks blocks = make_signal_blocks(task);
  out.push_back(detail::at_most(s, "x(A*) = 0", std::abs(alignment_x(task.a_star, task, blocks).x), 1e-9));
  out.push_back(detail::at_most(s, "x(-A*) = 4K", std::abs(alignment_x(-task.a_star, task, blocks).x - 4.0 * k), 1e-9));

  Rng rng(derive_seed(opt.seed, Stream::CellInit, 51));
  double lo = 0.0;
  double hi = 0.0;
  double rot = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = detail::gaussian(d, d, rng) + (trial % 4) * 0.1 * task.a_star;
    const double x = alignment_x(a, task, blocks).x;
    lo = std::min(lo, x);
    hi = std::max(hi, x - 4.0 * k);
    const Matrix q1 = detail::random_orthogonal(d, rng);
    const Matrix q2 = detail::random_orthogonal(d, rng);
    const Task rotated = task_from_matrices(q1 * task.a_star * q2.transpose(), task.noise, k);
    const double xr = alignment_x(q1 * a * q2.transpose(), rotated, make_signal_blocks(rotated)).x;
    rot = std::max(rot, std::abs(xr - x));
  }
  out.push_back(detail::at_least(s, "x >= 0", lo, -1e-9));
  out.push_back(detail::at_most(s, "x <= 4K", hi, 1e-9));
  out.push_back(detail::at_most(s, "x invariant under joint rotation", rot, 1e-8));

  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const double eps = 1e-3 * task.a_star_op();
    const Matrix a = task.a_star + eps * detail::gaussian(d, d, rng);
    const double x = alignment_x(a, task, blocks).x;
    const double bound = 10.0 * k * eps * d / task.target_svals.back();
    worst = std::max(worst, x / bound);
  }
  out.push_back(detail::at_most(s, "perturbation bound x <= 10 K eps d / s_K", worst, 1.0));

  const ScalingPoint sp = scaling_point_for_width(d, 4 * d, -1.0, kDefaultLearningRateConstant, task.a_star_op());
  FactorNetwork net = init_network(sp, opt.seed);
  double range = 0.0;
  for (int step = 0; step < 30; ++step) {
    for (Index i = 0; i < 5; ++i) range = std::max(range, std::abs(hidden_alignment(net, i, sp).lhs));
    net = gd_step(net, task, 0.5 * sp.eta);
  }
  out.push_back(detail::at_most(s, "hidden alignment lhs in [-1, 1]", range, 1.0));
  return out;
}

inline std::vector<Check> constants_suite(const Options&) {
  const std::string s = "constants";
  std::vector<Check> out;
  const std::vector<double> a{2.0, 1.0};
  const std::vector<double> b{3.0, 3.0, 1.0};
  out.push_back(detail::at_most(s, "c(2, 1) = 1/3", std::abs(c_constant(a) - 1.0 / 3.0), 1e-15));
  out.push_back(detail::at_most(s, "c(3, 3, 1) = 1/4", std::abs(c_constant(b) - 0.25), 1e-15));
  double worst = 0.0;
  const std::vector<double> base{2.7, 1.9, 1.9, 0.6};
  for (double lambda : {0.1, 2.0, 37.0}) {
    std::vector<double> scaled(base);
    for (double& v : scaled) v *= lambda;
    worst = std::max(worst, std::abs(c_constant(scaled) - lambda * c_constant(base)) / (lambda * c_constant(base)));
  }
  out.push_back(detail::at_most(s, "c(lambda a) = lambda c(a)", worst, 1e-12));
  return out;
}

inline const std::map<std::string, Suite>& suites() {
  static const std::map<std::string, Suite> table{
      {"linalg", linalg_suite},
      {"gradient", gradient_suite},
      {"conservation", conservation_suite},
      {"init-spectrum", init_spectrum_suite},
      {"lazy-oracle", lazy_oracle_suite},
      {"limits", limits_suite},
      {"effective-lr", effective_lr_suite},
      {"theorem1-gap", theorem1_suite},
      {"alignment", alignment_suite},
      {"constants", constants_suite},
  };
  return table;
}

/// Runs one named suite, or every suite for "all".
inline std::vector<Check> run(const std::string& name, const Options& opt) {
  const auto& table = suites();
  if (name == "all") {
    std::vector<Check> out;
    for (const auto& [key, suite] : table) {
      auto part = suite(opt);
      out.insert(out.end(), part.begin(), part.end());
    }
    return out;
  }
  auto it = table.find(name);
  require(it != table.end(), ErrorCode::ConfigError, "unknown suite '" + name + "'");
  return it->second(opt);
}

}  // namespace lindyn::verify
