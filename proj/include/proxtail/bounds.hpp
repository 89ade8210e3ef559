#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "proxtail/solver.hpp"

namespace proxtail {

// Upper bound gamma(theta) on E exp(theta ||e||^2), valid on [0, domain_sup).
struct MgfFamily {
  enum class Kind { gaussian_chi_square, bounded_from_tail, tabulated };

  Kind kind = Kind::gaussian_chi_square;
  double sigma = 0.0;  // gaussian_chi_square
  double nu = 0.0;     // bounded_from_tail
  int n = 1;
  std::vector<double> theta_grid, values;  // tabulated

  static MgfFamily gaussian(double sigma, int n) {
    if (!(sigma > 0.0) || n < 1) throw std::invalid_argument("gaussian mgf needs sigma > 0, n >= 1");
    MgfFamily f;
    f.kind = Kind::gaussian_chi_square;
    f.sigma = sigma;
    f.n = n;
    return f;
  }

  static MgfFamily bounded_tail(double nu, int n) {
    if (!(nu > 0.0) || n < 1) throw std::invalid_argument("bounded mgf needs nu > 0, n >= 1");
    MgfFamily f;
    f.kind = Kind::bounded_from_tail;
    f.nu = nu;
    f.n = n;
    return f;
  }

  static MgfFamily tabulated(std::vector<double> thetas, std::vector<double> vals) {
    if (thetas.size() != vals.size() || thetas.size() < 2) {
      throw std::invalid_argument("tabulated mgf needs matching grids, >= 2 points");
    }
    if (thetas.front() != 0.0 || vals.front() != 1.0) {
      throw std::invalid_argument("tabulated mgf must start at (0, 1)");
    }
    for (std::size_t i = 1; i < thetas.size(); ++i) {
      if (!(thetas[i] > thetas[i - 1]) || vals[i] < vals[i - 1]) {
        throw std::invalid_argument("tabulated mgf must be increasing in theta, nondecreasing in value");
      }
    }
    MgfFamily f;
    f.kind = Kind::tabulated;
    f.theta_grid = std::move(thetas);
    f.values = std::move(vals);
    return f;
  }

  double domain_sup() const {
    switch (kind) {
      case Kind::gaussian_chi_square:
        return 1.0 / (2.0 * sigma * sigma);
      case Kind::bounded_from_tail:
        return 1.0 / (nu * n);
      case Kind::tabulated:
        return theta_grid.back();
    }
    return 0.0;
  }

  double log_value(double theta) const {
    if (theta < 0.0) return std::numeric_limits<double>::infinity();
    if (theta == 0.0) return 0.0;
    switch (kind) {
      case Kind::gaussian_chi_square: {
        const double a = 2.0 * sigma * sigma * theta;
        if (a >= 1.0) return std::numeric_limits<double>::infinity();
        return -0.5 * n * std::log1p(-a);
      }
      case Kind::bounded_from_tail: {
        const double a = nu * n * theta;
        if (a >= 1.0) return std::numeric_limits<double>::infinity();
        return -std::log1p(-a);
      }
      case Kind::tabulated: {
        if (theta > theta_grid.back()) return std::numeric_limits<double>::infinity();
        auto it = std::upper_bound(theta_grid.begin(), theta_grid.end(), theta);
        const std::size_t hi = std::min<std::size_t>(it - theta_grid.begin(), theta_grid.size() - 1);
        const std::size_t lo = hi - 1;
        const double t = (theta - theta_grid[lo]) / (theta_grid[hi] - theta_grid[lo]);
        return std::log(values[lo] + t * (values[hi] - values[lo]));
      }
    }
    return std::numeric_limits<double>::infinity();
  }

  double value(double theta) const { return std::exp(log_value(theta)); }
};

struct TailQuery {
  double epsilon = 0.0;
  int k = 1;
  RateConstants constants;
  int n = 1;

  void validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (n < 1) throw std::invalid_argument("n must be >= 1");
  }
};

// R_k = sum_{i<k} rho^i.
inline double discount_sum(double rho, int k) {
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("rho must be in (0,1)");
  if (k < 0) throw std::invalid_argument("k must be nonnegative");
  return (1.0 - std::pow(rho, k)) / (1.0 - rho);
}

namespace detail {

struct InfimumResult {
  double log_value = 0.0;
  double theta = 0.0;
};

// Minimizes a log-objective that is convex in theta on (0, theta_sup), tending
// to log_obj(0+) = 0. Geometric scan over halvings of theta_sup brackets the
// minimum, golden section polishes it to ~rel_tol in theta.
inline InfimumResult log_infimum_over_theta(double theta_sup,
                                            const std::function<double(double)>& log_obj,
                                            double rel_tol = 1e-8) {
  if (!(theta_sup > 0.0)) throw std::invalid_argument("empty theta domain");
  constexpr int kScan = 220;
  int best_j = -1;
  double best = 0.0;  // candidate "theta -> 0" limit
  for (int j = 1; j <= kScan; ++j) {
    const double theta = std::ldexp(theta_sup, -j);
    if (theta == 0.0) break;
    const double v = log_obj(theta);
    if (v < best) {
      best = v;
      best_j = j;
    }
  }
  if (best_j < 0) return {0.0, 0.0};  // nonincreasing improvement: infimum is the cap
  double lo_t, hi_t;
  if (best_j == 1) {
    lo_t = std::log(std::ldexp(theta_sup, -2));
    hi_t = std::log(theta_sup) + std::log1p(-1e-12);
  } else {
    lo_t = std::log(std::ldexp(theta_sup, -(best_j + 1)));
    hi_t = std::log(std::ldexp(theta_sup, -(best_j - 1)));
  }
  constexpr double kGolden = 0.61803398874989485;
  double a = lo_t, b = hi_t;
  double c1 = b - kGolden * (b - a);
  double c2 = a + kGolden * (b - a);
  double f1 = log_obj(std::exp(c1));
  double f2 = log_obj(std::exp(c2));
  while (b - a > rel_tol) {
    if (f1 <= f2) {
      b = c2;
      c2 = c1;
      f2 = f1;
      c1 = b - kGolden * (b - a);
      f1 = log_obj(std::exp(c1));
    } else {
      a = c1;
      c1 = c2;
      f1 = f2;
      c2 = a + kGolden * (b - a);
      f2 = log_obj(std::exp(c2));
    }
  }
  const double theta = std::exp(0.5 * (a + b));
  const double v = log_obj(theta);
  return {std::min({v, f1, f2, best}), theta};
}

inline double log_sum_exp(std::span<const double> terms) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double t : terms) mx = std::max(mx, t);
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - mx);
  return mx + std::log(acc);
}

}  // namespace detail

// Mixture-form tail bound on P(pi_k - rho^k pi_0 >= eps) from per-iteration
// MGF bounds gamma_i; the infimum over theta is taken numerically.
inline double generic_tail_bound(const TailQuery& q, std::span<const MgfFamily> mgfs) {
  q.validate();
  if (mgfs.size() < static_cast<std::size_t>(q.k)) {
    throw std::invalid_argument("need an mgf per iteration 0..k-1");
  }
  const double rho = q.constants.rho;
  const double R = discount_sum(rho, q.k);
  double theta_sup = std::numeric_limits<double>::infinity();
  for (int i = 0; i < q.k; ++i) theta_sup = std::min(theta_sup, mgfs[i].domain_sup());
  if (!(theta_sup > 0.0)) throw std::invalid_argument("empty theta domain");
  const double scale = q.constants.theta * q.epsilon / R;
  const double log_rho = std::log(rho);
  std::vector<double> terms(static_cast<std::size_t>(q.k));
  auto log_obj = [&](double theta) {
    for (int i = 0; i < q.k; ++i) {
      terms[static_cast<std::size_t>(i)] = (q.k - 1 - i) * log_rho + mgfs[i].log_value(theta);
    }
    return -theta * scale - std::log(R) + detail::log_sum_exp(terms);
  };
  const auto res = detail::log_infimum_over_theta(theta_sup, log_obj);
  return std::min(1.0, std::exp(res.log_value));
}

// Identically-distributed errors: the mixture collapses and the bound is
// inf_theta exp(-theta vartheta eps / R_k) gamma(theta).
inline double generic_tail_bound(const TailQuery& q, const MgfFamily& gamma) {
  q.validate();
  const double R = discount_sum(q.constants.rho, q.k);
  const double scale = q.constants.theta * q.epsilon / R;
  auto log_obj = [&](double theta) { return -theta * scale + gamma.log_value(theta); };
  const auto res = detail::log_infimum_over_theta(gamma.domain_sup(), log_obj);
  return std::min(1.0, std::exp(res.log_value));
}

// Log tail bound through the convex conjugate of the cumulant generating
// function: -[log gamma]^*(vartheta eps / R_k). Closed form for the Gaussian
// family; numeric supremum otherwise. Returns 0 outside the conjugate domain.
inline double conjugate_tail_bound(const TailQuery& q, const MgfFamily& gamma) {
  q.validate();
  const double mu = q.constants.theta * q.epsilon / discount_sum(q.constants.rho, q.k);
  if (gamma.kind == MgfFamily::Kind::gaussian_chi_square) {
    const double s2 = gamma.sigma * gamma.sigma;
    const double base = gamma.n * s2;
    if (mu <= base) return 0.0;
    const double conj = (mu - base) / (2.0 * s2) + 0.5 * gamma.n * std::log(base / mu);
    return -conj;
  }
  auto log_obj = [&](double theta) { return gamma.log_value(theta) - mu * theta; };
  const auto res = detail::log_infimum_over_theta(gamma.domain_sup(), log_obj);
  return std::min(0.0, res.log_value);
}

// Closed form of the mixture bound for e ~ N(0, sigma^2 I):
//   (e/n * vartheta eps / (sigma^2 R_k))^{n/2} exp(-vartheta eps / (2 sigma^2 R_k)),
// valid for eps > n sigma^2 R_k / vartheta, capped at 1 below.
inline double gaussian_tail_bound_iid(int n, double sigma, double vartheta, double R_k,
                                      double eps) {
  if (n < 1 || !(sigma > 0.0) || !(vartheta > 0.0) || !(R_k > 0.0)) {
    throw std::invalid_argument("gaussian_tail_bound_iid: bad parameters");
  }
  const double threshold = n * sigma * sigma * R_k / vartheta;
  if (!(eps > threshold)) return 1.0;
  const double w = vartheta * eps / (sigma * sigma * R_k);
  const double log_bound = 0.5 * n * (1.0 + std::log(w / n)) - 0.5 * w;
  return std::exp(std::min(0.0, log_bound));
}

// Product-form bound for unconditionally bounded errors:
//   inf_theta exp(-theta vartheta eps) prod_i gamma_i(theta rho^{k-i-1}).
inline double unconditional_tail_bound(const TailQuery& q, std::span<const MgfFamily> mgfs) {
  q.validate();
  if (mgfs.size() < static_cast<std::size_t>(q.k)) {
    throw std::invalid_argument("need an mgf per iteration 0..k-1");
  }
  const double rho = q.constants.rho;
  double theta_sup = std::numeric_limits<double>::infinity();
  for (int i = 0; i < q.k; ++i) {
    theta_sup = std::min(theta_sup, mgfs[i].domain_sup() / std::pow(rho, q.k - i - 1));
  }
  auto log_obj = [&](double theta) {
    double acc = -theta * q.constants.theta * q.epsilon;
    for (int i = 0; i < q.k; ++i) {
      acc += mgfs[i].log_value(theta * std::pow(rho, q.k - i - 1));
      if (!std::isfinite(acc)) return acc;
    }
    return acc;
  };
  const auto res = detail::log_infimum_over_theta(theta_sup, log_obj);
  return std::min(1.0, std::exp(res.log_value));
}

// Closed form of the product bound for e ~ N(0, sigma^2 I), as published:
//   (e/(n a) * vartheta eps / sigma^2)^{n a / 2} exp(-vartheta eps / sigma^2)
// with a = 1 - 1/log rho, for eps >= n a sigma^2 / vartheta (1 below). Note
// the trailing exponential is as printed; it is smaller than what the
// Q-Pochhammer route yields, which the verification suite reports.
inline double gaussian_tail_bound_unconditional(int n, double sigma, double vartheta, double rho,
                                                double eps) {
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("rho must be in (0,1)");
  if (n < 1 || !(sigma > 0.0) || !(vartheta > 0.0)) {
    throw std::invalid_argument("gaussian_tail_bound_unconditional: bad parameters");
  }
  const double alpha = 1.0 - 1.0 / std::log(rho);
  const double s2 = sigma * sigma;
  const double threshold = n * alpha * s2 / vartheta;
  if (eps < threshold) return 1.0;
  const double w = vartheta * eps / s2;
  const double log_bound = 0.5 * n * alpha * (1.0 + std::log(w / (n * alpha))) - w;
  return std::exp(std::min(0.0, log_bound));
}

// Limit floor on the expected objective gap under constant Gaussian noise,
// as published: 20 tau^2 n sigma^2 / L.
inline double gaussian_mean_floor(int n, double sigma, double tau, double L) {
  if (n < 1 || sigma < 0.0 || !(tau > 0.0) || !(L > 0.0)) {
    throw std::invalid_argument("gaussian_mean_floor: bad parameters");
  }
  return 20.0 * tau * tau * n * sigma * sigma / L;
}

inline double log_moment_bound(double nu, int v) {
  if (!(nu > 0.0)) throw std::invalid_argument("nu must be positive");
  if (v < 0) throw std::invalid_argument("moment order must be nonnegative");
  return std::lgamma(static_cast<double>(v) + 1.0) + v * std::log(nu);
}

// E[X^{2v}] <= v! nu^v for variables with exp(-eps^2/nu) tails.
inline double moment_bound(double nu, int v) {
  if (!(nu > 0.0)) throw std::invalid_argument("nu must be positive");
  if (v < 0) throw std::invalid_argument("moment order must be nonnegative");
  if (v > 20) return std::exp(log_moment_bound(nu, v));
  double acc = 1.0;
  for (int i = 1; i <= v; ++i) acc *= i * nu;
  return acc;
}

// MGF bound 1/(1 - theta nu n) implied by per-coordinate exponential tails.
inline double mgf_bound_from_tail(double nu, int n, double theta) {
  if (!(nu > 0.0) || n < 1) throw std::invalid_argument("mgf_bound_from_tail: bad parameters");
  if (theta < 0.0 || theta >= 1.0 / (nu * n)) {
    throw std::domain_error("theta must lie in [0, 1/(nu n))");
  }
  return 1.0 / (1.0 - theta * nu * n);
}

// Bound on E pi_k - rho^k pi_0 under the geometric error-variance decay
// E||e_k||^2 <= lambda beta^k. The k-form holds always; the sharp form
// divides by |beta - rho| and requires beta != rho.
inline double expectation_rate_bound(double lambda, double beta, const RateConstants& constants,
                                     int k, bool sharp) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("beta must be in (0,1)");
  if (k < 0) throw std::invalid_argument("k must be nonnegative");
  if (k == 0) return 0.0;
  const double m = std::max(beta, constants.rho);
  const double common = lambda / constants.theta * std::pow(m, k - 1);
  if (!sharp) return common * k;
  if (beta == constants.rho) {
    throw std::invalid_argument("sharp form needs beta != rho");
  }
  return common / std::abs(beta - constants.rho);
}

namespace detail {

struct MainBoundShape {
  double alpha_bar = 0.0;  // min{alpha_3, k}
  double alpha2 = 0.0;     // max{beta, rho}
  double scale = 0.0;      // n lambda alpha_2^{k-1} / vartheta
};

inline MainBoundShape main_bound_shape(int k, double lambda, double beta, int n,
                                       const RateConstants& constants) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("beta must be in (0,1)");
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  MainBoundShape s;
  s.alpha2 = std::max(beta, constants.rho);
  double alpha_bar = static_cast<double>(k);
  if (beta != constants.rho) {
    const double alpha3 = 1.0 + 1.0 / std::abs(std::log(beta) - std::log(constants.rho));
    alpha_bar = std::min(alpha3, alpha_bar);
  }
  s.alpha_bar = alpha_bar;
  s.scale = n * lambda * std::pow(s.alpha2, k - 1) / constants.theta;
  return s;
}

}  // namespace detail

inline double main_bound_threshold(int k, double lambda, double beta, int n,
                                   const RateConstants& constants) {
  const auto s = detail::main_bound_shape(k, lambda, beta, n, constants);
  return s.alpha_bar * s.scale;
}

// Non-asymptotic tail bound under per-coordinate exponential tails with
// U_k <= lambda beta^k:
//   (e/abar * w)^{abar} exp(-w),  w = vartheta eps / (n lambda alpha_2^{k-1}),
// abar = min{1 + 1/|log beta - log rho|, k}, valid for w >= abar (1 below).
inline double main_tail_bound(const TailQuery& q, double lambda, double beta) {
  q.validate();
  const auto s = detail::main_bound_shape(q.k, lambda, beta, q.n, q.constants);
  const double threshold = s.alpha_bar * s.scale;
  if (!(q.epsilon > threshold)) return 1.0;
  const double w = q.epsilon / s.scale;
  const double log_bound = s.alpha_bar * (1.0 + std::log(w / s.alpha_bar)) - w;
  return std::exp(std::min(0.0, log_bound));
}

// Smallest eps >= threshold with main_tail_bound <= p, by bisection on the
// log bound (strictly decreasing beyond the threshold).
inline double invert_main_bound(double p, int k, double lambda, double beta, int n,
                                const RateConstants& constants) {
  if (!(p > 0.0)) throw std::invalid_argument("p must be in (0,1]");
  const auto s = detail::main_bound_shape(k, lambda, beta, n, constants);
  if (p >= 1.0) return s.alpha_bar * s.scale;
  const double target = std::log(p);
  auto log_bound = [&](double w) { return s.alpha_bar * (1.0 + std::log(w / s.alpha_bar)) - w; };
  double lo = s.alpha_bar;
  double hi = s.alpha_bar - 2.0 * target + 10.0;
  while (log_bound(hi) > target) hi *= 2.0;
  const double tol = 1e-12 * s.alpha_bar;  // 1e-12 of the threshold, in w units
  for (int it = 0; it < 500 && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (log_bound(mid) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi) * s.scale;
}

struct PairBound {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds() const { return lhs <= rhs; }
};

// (1-x)^{1 - 1/log y} <= prod_{i>=0} (1 - x y^i); rhs truncated once the
// remaining factors are within 1e-15 of one, with a conservative tail factor.
inline PairBound qpochhammer_lower_bound(double x, double y) {
  if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("x must be in [0,1]");
  if (!(y > 0.0 && y < 1.0)) throw std::invalid_argument("y must be in (0,1)");
  PairBound out;
  out.lhs = x == 0.0 ? 1.0 : std::pow(1.0 - x, 1.0 - 1.0 / std::log(y));
  double prod = 1.0;
  double term = x;  // x y^i
  while (term >= 1e-15) {
    prod *= 1.0 - term;
    if (prod == 0.0) break;
    term *= y;
  }
  if (prod > 0.0 && x < 1.0) {
    prod *= std::exp(-term / ((1.0 - y) * (1.0 - x)));
  }
  out.rhs = prod;
  return out;
}

// exp(-[log(1-x/y) - log(1-x y^{N+1})]/log y) <= prod_{i=0}^{N} (1 - x y^i),
// defined for 0 <= x < y < 1.
inline PairBound finite_product_lower_bound(double x, double y, int N) {
  if (!(y > 0.0 && y < 1.0)) throw std::invalid_argument("y must be in (0,1)");
  if (!(x >= 0.0 && x < y)) throw std::invalid_argument("need 0 <= x < y");
  if (N < 0) throw std::invalid_argument("N must be nonnegative");
  PairBound out;
  out.lhs = std::exp(-(std::log1p(-x / y) - std::log1p(-x * std::pow(y, N + 1))) / std::log(y));
  double prod = 1.0;
  double term = x;
  for (int i = 0; i <= N; ++i) {
    prod *= 1.0 - term;
    term *= y;
  }
  out.rhs = prod;
  return out;
}

struct TediousResult {
  double closed_form = 0.0;
  double numeric_inf = 0.0;
  bool dominates = false;  // numeric_inf <= closed_form
};

// Closed-form cap on inf_theta exp(-theta eps nu) prod_i (1 - theta x y^i)^{-k},
// with alpha = (1/k)(1/log(1/y) + 1) as published. Valid as a cap for k <= 1;
// the dominates flag records whether it held for these inputs.
inline TediousResult tedious_bound(double x, double y, double k_exp, double nu, double eps) {
  if (!(x > 0.0 && x <= 1.0)) throw std::invalid_argument("x must be in (0,1]");
  if (!(y > 0.0 && y < 1.0)) throw std::invalid_argument("y must be in (0,1)");
  if (!(k_exp > 0.0)) throw std::invalid_argument("k must be positive");
  if (!(nu > 0.0)) throw std::invalid_argument("nu must be positive");
  const double alpha = (1.0 / k_exp) * (1.0 / std::log(1.0 / y) + 1.0);
  if (!(eps >= alpha * x / nu)) {
    throw std::domain_error("eps below the validity threshold alpha x / nu");
  }
  TediousResult out;
  const double w = eps * nu / x;
  out.closed_form = std::exp(std::min(700.0, alpha * (1.0 + std::log(w / alpha)) - w));

  const int terms = static_cast<int>(std::ceil(std::log(1e-16) / std::log(y))) + 1;
  auto log_obj = [&](double theta) {
    double acc = -theta * eps * nu;
    double xy = x;  // x y^i
    for (int i = 0; i < terms; ++i) {
      const double a = theta * xy;
      if (a >= 1.0) return std::numeric_limits<double>::infinity();
      acc -= k_exp * std::log1p(-a);
      xy *= y;
    }
    return acc;
  };
  const auto res = detail::log_infimum_over_theta(1.0 / x, log_obj);
  out.numeric_inf = std::exp(res.log_value);
  out.dominates = out.numeric_inf <= out.closed_form * (1.0 + 1e-9);
  return out;
}

}  // namespace proxtail
