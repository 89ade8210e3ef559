#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "proxtail/errors.hpp"
#include "proxtail/rng.hpp"

namespace proxtail {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class SmoothKind { quadratic, logistic_finite_sum };
enum class NonsmoothKind { zero, l1, box };

struct Nonsmooth {
  NonsmoothKind kind = NonsmoothKind::zero;
  double l1_weight = 0.0;
  VectorXd lo, hi;  // box bounds, lo <= hi (ties allowed)

  static Nonsmooth none() { return {}; }

  static Nonsmooth l1(double weight) {
    if (weight < 0.0) throw std::invalid_argument("l1 weight must be nonnegative");
    Nonsmooth g;
    g.kind = NonsmoothKind::l1;
    g.l1_weight = weight;
    return g;
  }

  static Nonsmooth box(VectorXd lo, VectorXd hi) {
    if (lo.size() != hi.size()) throw std::invalid_argument("box bounds size mismatch");
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
      if (!(lo[i] <= hi[i])) throw std::invalid_argument("box requires lo <= hi");
    }
    Nonsmooth g;
    g.kind = NonsmoothKind::box;
    g.lo = std::move(lo);
    g.hi = std::move(hi);
    return g;
  }
};

// Composite problem h = f + g. The smooth part always includes the ridge term
// (ridge_mu/2)*||x||^2; for the quadratic kind f(x) = 0.5*sum_i q_i (x_i-c_i)^2.
struct ObjectiveSpec {
  SmoothKind smooth_kind = SmoothKind::quadratic;
  Nonsmooth nonsmooth;
  int dimension = 0;
  double lipschitz = 0.0;        // L, gradient Lipschitz constant
  double error_bound_tau = 1.0;  // tau >= 1 in the residual error bound
  double ridge_mu = 0.0;
  VectorXd quad_diag, quad_center;  // quadratic kind only

  void validate() const {
    if (dimension <= 0) throw std::invalid_argument("dimension must be positive");
    if (!(lipschitz > 0.0)) throw std::invalid_argument("lipschitz must be positive");
    if (!(error_bound_tau >= 1.0)) throw std::invalid_argument("tau must be >= 1");
    if (ridge_mu < 0.0) throw std::invalid_argument("ridge_mu must be nonnegative");
    if (ridge_mu > 0.0 && nonsmooth.kind == NonsmoothKind::zero) {
      const double expect = lipschitz / ridge_mu;
      if (std::abs(error_bound_tau - expect) > 1e-12 * expect) {
        throw std::invalid_argument("with ridge_mu > 0 and g = 0, tau must equal L/mu");
      }
    }
    if (smooth_kind == SmoothKind::quadratic) {
      if (quad_diag.size() != dimension || quad_center.size() != dimension) {
        throw std::invalid_argument("quadratic needs diag and center of length n");
      }
      if ((quad_diag.array() < 0.0).any()) {
        throw std::invalid_argument("quadratic diag must be nonnegative");
      }
    }
    if (nonsmooth.kind == NonsmoothKind::box && nonsmooth.lo.size() != dimension) {
      throw std::invalid_argument("box bounds must have length n");
    }
  }

  static ObjectiveSpec quadratic(VectorXd diag, VectorXd center, double L, double tau,
                                 double mu = 0.0, Nonsmooth g = Nonsmooth::none()) {
    ObjectiveSpec s;
    s.smooth_kind = SmoothKind::quadratic;
    s.dimension = static_cast<int>(diag.size());
    s.quad_diag = std::move(diag);
    s.quad_center = std::move(center);
    s.lipschitz = L;
    s.error_bound_tau = tau;
    s.ridge_mu = mu;
    s.nonsmooth = std::move(g);
    s.validate();
    return s;
  }

  static ObjectiveSpec logistic(int dimension, double L, double tau, double mu,
                                Nonsmooth g = Nonsmooth::none()) {
    ObjectiveSpec s;
    s.smooth_kind = SmoothKind::logistic_finite_sum;
    s.dimension = dimension;
    s.lipschitz = L;
    s.error_bound_tau = tau;
    s.ridge_mu = mu;
    s.nonsmooth = std::move(g);
    s.validate();
    return s;
  }
};

struct FiniteSumData {
  MatrixXd features;  // M x n, row i is a_i
  VectorXd labels;    // entries in {-1, +1}

  int count() const { return static_cast<int>(features.rows()); }

  void validate() const {
    if (features.rows() < 1) throw std::invalid_argument("dataset needs M >= 1 rows");
    if (labels.size() != features.rows()) throw std::invalid_argument("labels/features mismatch");
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
      if (labels[i] != 1.0 && labels[i] != -1.0) {
        throw std::invalid_argument("labels must be +1 or -1");
      }
    }
    if (!features.allFinite()) throw std::invalid_argument("features must be finite");
  }
};

namespace detail {

// log(1 + exp(t)) without overflow for large |t|.
inline double log1p_exp(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

inline void check_problem(const ObjectiveSpec& spec, const FiniteSumData* data,
                          const VectorXd& x) {
  if (x.size() != spec.dimension) throw std::invalid_argument("x has wrong dimension");
  const bool need_data = spec.smooth_kind == SmoothKind::logistic_finite_sum;
  if (need_data && data == nullptr) throw std::invalid_argument("finite-sum kind needs data");
  if (!need_data && data != nullptr) throw std::invalid_argument("quadratic kind takes no data");
  if (need_data && data->features.cols() != spec.dimension) {
    throw std::invalid_argument("dataset dimension mismatch");
  }
}

}  // namespace detail

inline double nonsmooth_value(const Nonsmooth& g, const VectorXd& x) {
  switch (g.kind) {
    case NonsmoothKind::zero:
      return 0.0;
    case NonsmoothKind::l1:
      return g.l1_weight * x.lpNorm<1>();
    case NonsmoothKind::box:
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x[i] < g.lo[i] || x[i] > g.hi[i]) {
          return std::numeric_limits<double>::infinity();
        }
      }
      return 0.0;
  }
  return 0.0;
}

// f(x) + (mu/2)||x||^2, the smooth part of the composite objective.
inline double smooth_value(const ObjectiveSpec& spec, const FiniteSumData* data,
                           const VectorXd& x) {
  detail::check_problem(spec, data, x);
  double f = 0.0;
  if (spec.smooth_kind == SmoothKind::quadratic) {
    f = 0.5 * (spec.quad_diag.array() * (x - spec.quad_center).array().square()).sum();
  } else {
    const VectorXd t = data->features * x;
    const int m = data->count();
    double acc = 0.0;
    for (int i = 0; i < m; ++i) {
      acc += detail::log1p_exp(-data->labels[i] * t[i]);
    }
    f = acc / m;
  }
  return f + 0.5 * spec.ridge_mu * x.squaredNorm();
}

inline double composite_value(const ObjectiveSpec& spec, const FiniteSumData* data,
                              const VectorXd& x) {
  return smooth_value(spec, data, x) + nonsmooth_value(spec.nonsmooth, x);
}

inline VectorXd full_gradient(const ObjectiveSpec& spec, const FiniteSumData* data,
                              const VectorXd& x) {
  detail::check_problem(spec, data, x);
  VectorXd grad;
  if (spec.smooth_kind == SmoothKind::quadratic) {
    grad = spec.quad_diag.array() * (x - spec.quad_center).array();
  } else {
    const VectorXd t = data->features * x;
    const int m = data->count();
    VectorXd acc = VectorXd::Zero(spec.dimension);
    for (int i = 0; i < m; ++i) {
      const double w = -data->labels[i] / (1.0 + std::exp(data->labels[i] * t[i]));
      acc.noalias() += w * data->features.row(i).transpose();
    }
    grad = acc / m;
  }
  if (spec.ridge_mu != 0.0) grad += spec.ridge_mu * x;
  return grad;
}

// Gradient of the i-th member f_i = loss_i + (mu/2)||x||^2, so the average
// over i equals full_gradient.
inline VectorXd member_gradient(const ObjectiveSpec& spec, const FiniteSumData& data,
                                int i, const VectorXd& x) {
  if (spec.smooth_kind != SmoothKind::logistic_finite_sum) {
    throw std::invalid_argument("member_gradient needs a finite-sum objective");
  }
  detail::check_problem(spec, &data, x);
  if (i < 0 || i >= data.count()) throw std::invalid_argument("member index out of range");
  const double t = data.features.row(i).dot(x);
  const double w = -data.labels[i] / (1.0 + std::exp(data.labels[i] * t));
  VectorXd g = w * data.features.row(i).transpose();
  if (spec.ridge_mu != 0.0) g += spec.ridge_mu * x;
  return g;
}

// prox_{alpha g}(z) = argmin_y { alpha g(y) + 0.5 ||z - y||^2 }.
inline VectorXd prox(const Nonsmooth& g, double alpha, const VectorXd& z) {
  if (!(alpha > 0.0)) throw std::invalid_argument("prox requires alpha > 0");
  switch (g.kind) {
    case NonsmoothKind::zero:
      return z;
    case NonsmoothKind::l1: {
      const double t = alpha * g.l1_weight;
      VectorXd y(z.size());
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        y[i] = z[i] > t ? z[i] - t : (z[i] < -t ? z[i] + t : 0.0);
      }
      return y;
    }
    case NonsmoothKind::box: {
      if (g.lo.size() != z.size()) throw std::invalid_argument("box bounds size mismatch");
      return z.cwiseMax(g.lo).cwiseMin(g.hi);
    }
  }
  return z;
}

namespace detail {

// Largest eigenvalue of a symmetric PSD operator by power iteration.
template <class ApplyFn>
double power_iteration(int n, ApplyFn&& apply, double rel_tol, int max_iter) {
  SubStream rng = SubStream::derive(0x9e3779b9ULL, 0, 0, 71);
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    VectorXd w = apply(v);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;  // operator annihilates v: spectrum is 0 on its span
    w /= norm;
    const double next = w.dot(apply(w));
    if (it > 0 && std::abs(next - lambda) <= rel_tol * std::max(std::abs(next), 1e-300)) {
      return next;
    }
    lambda = next;
    v = std::move(w);
  }
  throw numeric_error("power iteration did not converge", max_iter);
}

}  // namespace detail

// Gradient Lipschitz constant: quadratic -> top Hessian eigenvalue by power
// iteration; logistic -> sigma_max(A)^2/(4M) + mu.
inline double estimate_lipschitz(const ObjectiveSpec& spec, const FiniteSumData* data) {
  constexpr double kRelTol = 1e-8;
  constexpr int kMaxIter = 10000;
  if (spec.smooth_kind == SmoothKind::quadratic) {
    const VectorXd& q = spec.quad_diag;
    const double mu = spec.ridge_mu;
    return detail::power_iteration(
        spec.dimension,
        [&](const VectorXd& v) -> VectorXd { return (q.array() * v.array()).matrix() + mu * v; },
        kRelTol, kMaxIter);
  }
  if (data == nullptr) throw std::invalid_argument("finite-sum kind needs data");
  const MatrixXd& A = data->features;
  const double sigma_sq = detail::power_iteration(
      spec.dimension,
      [&](const VectorXd& v) -> VectorXd { return A.transpose() * (A * v); },
      kRelTol, kMaxIter);
  return sigma_sq / (4.0 * data->count()) + spec.ridge_mu;
}

// Synthetic logistic dataset: standard normal features, labels flipped from a
// planted separator through the logistic link. Bit-identical for equal seeds.
inline FiniteSumData generate_logistic_dataset(int M, int n, std::uint64_t seed) {
  if (M < 1 || n < 1) throw std::invalid_argument("need M >= 1 and n >= 1");
  FiniteSumData data;
  data.features.resize(M, n);
  data.labels.resize(M);
  SubStream feat = SubStream::derive(seed, 0, 0, 1);
  SubStream sep = SubStream::derive(seed, 0, 0, 2);
  SubStream flip = SubStream::derive(seed, 0, 0, 3);
  VectorXd w(n);
  for (int j = 0; j < n; ++j) w[j] = sep.normal();
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < n; ++j) data.features(i, j) = feat.normal();
    const double p = 1.0 / (1.0 + std::exp(-data.features.row(i).dot(w)));
    data.labels[i] = flip.uniform01() < p ? 1.0 : -1.0;
  }
  return data;
}

// Shortest decimal string that round-trips the double exactly.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void write_dataset_csv(std::ostream& out, const FiniteSumData& data) {
  const int n = static_cast<int>(data.features.cols());
  out << "b";
  for (int j = 1; j <= n; ++j) out << ",a_" << j;
  out << "\n";
  for (int i = 0; i < data.count(); ++i) {
    out << (data.labels[i] > 0 ? "1" : "-1");
    for (int j = 0; j < n; ++j) out << "," << format_double(data.features(i, j));
    out << "\n";
  }
}

inline FiniteSumData read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty dataset file");
  if (line.rfind("b,a_1", 0) != 0) throw std::invalid_argument("bad dataset header");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      double v = 0.0;
      auto res = std::from_chars(line.data() + pos, line.data() + comma, v);
      if (res.ec != std::errc()) throw std::invalid_argument("bad number in dataset row");
      row.push_back(v);
      pos = comma + 1;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("dataset has no rows");
  const std::size_t width = rows.front().size();
  FiniteSumData data;
  data.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1));
  data.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != width) throw std::invalid_argument("ragged dataset row");
    data.labels[static_cast<Eigen::Index>(i)] = rows[i][0];
    for (std::size_t j = 1; j < width; ++j) {
      data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 1)) = rows[i][j];
    }
  }
  data.validate();
  return data;
}

}  // namespace proxtail
