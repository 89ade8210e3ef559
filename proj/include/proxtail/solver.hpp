#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "proxtail/errors.hpp"
#include "proxtail/model.hpp"
#include "proxtail/sampling.hpp"

namespace proxtail {

// Contraction factor and error weight of the one-step objective-gap bound:
// rho = 40 tau^2 / (1 + 40 tau^2), theta = L (1 + 40 tau^2) / (40 tau^2).
struct RateConstants {
  double rho = 0.0;
  double theta = 0.0;
  double tau = 0.0;
  double lipschitz = 0.0;
};

inline RateConstants rate_constants(double L, double tau) {
  if (!(L > 0.0)) throw std::invalid_argument("L must be positive");
  if (!(tau >= 1.0)) throw std::invalid_argument("tau must be >= 1");
  const double s = 40.0 * tau * tau;
  return RateConstants{s / (1.0 + s), L * (1.0 + s) / s, tau, L};
}

// Direct parameterization for bound evaluation at a given rho (e.g. figure
// reproduction); uses the identity theta = L / rho. The back-solved tau may
// be below 1 and is not meant for running the iteration.
inline RateConstants rate_constants_from_rho(double rho, double L = 1.0) {
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("rho must be in (0,1)");
  if (!(L > 0.0)) throw std::invalid_argument("L must be positive");
  return RateConstants{rho, L / rho, std::sqrt(rho / (40.0 * (1.0 - rho))), L};
}

struct IterateRecord {
  int k = 0;
  VectorXd x;             // empty unless the run stored iterates
  double h_value = 0.0;
  double pi = 0.0;        // h(x_k) - inf h
  double err_sq = 0.0;    // ||e_k||^2 for the step leaving x_k (0 at the last record)
  int m = 0;              // sample size used, 0 if not subsampling
  double dist_sq = -1.0;  // ||x_k - x*||^2 when x* was supplied, else -1
};

struct Trajectory {
  std::vector<IterateRecord> records;
  RateConstants constants;
  std::uint64_t seed = 0;

  double pi0() const { return records.empty() ? 0.0 : records.front().pi; }
};

struct OptimalValue {
  double h_star = 0.0;
  VectorXd x_star;
  long iterations = 0;
};

// Deterministic proximal-gradient solve to prox-residual <= tol. tol <= 0
// selects the default 1e-12 * max(1, ||x0||).
inline OptimalValue optimal_value_oracle(const ObjectiveSpec& spec, const FiniteSumData* data,
                                         const VectorXd& x0, double tol = 0.0,
                                         long max_iter = 1000000) {
  spec.validate();
  if (tol <= 0.0) tol = 1e-12 * std::max(1.0, x0.norm());
  const double step = 1.0 / spec.lipschitz;
  VectorXd x = x0;
  for (long it = 0; it < max_iter; ++it) {
    VectorXd next = prox(spec.nonsmooth, step, x - step * full_gradient(spec, data, x));
    const double residual = (x - next).norm();
    x = std::move(next);
    if (residual <= tol) {
      return OptimalValue{composite_value(spec, data, x), x, it + 1};
    }
  }
  throw numeric_error("optimal value oracle hit the iteration cap; best value " +
                          format_double(composite_value(spec, data, x)),
                      max_iter);
}

struct RunOptions {
  bool store_x = true;
  const VectorXd* x_star = nullptr;  // enables dist_sq bookkeeping
  std::uint64_t replicate = 0;       // substream key for the error model
};

namespace detail {

struct Step {
  VectorXd estimate;  // grad f(x_k) + e_k
  double err_sq = 0.0;
  int m = 0;
};

// One trajectory of x_{k+1} = prox_{1/L}(x_k - (1/L)(grad f(x_k) + e_k)).
// step_fn(k, x) supplies the gradient estimate, its exact squared error
// against the full gradient, and the sample size for step k.
template <class StepFn>
Trajectory run_core(const ObjectiveSpec& spec, const FiniteSumData* data, const VectorXd& x0,
                    int k_max, const RateConstants& constants, double h_star, StepFn&& step_fn,
                    const RunOptions& opts) {
  spec.validate();
  if (k_max < 1) throw std::invalid_argument("k_max must be >= 1");
  const double step = 1.0 / constants.lipschitz;
  Trajectory traj;
  traj.constants = constants;
  traj.records.reserve(static_cast<std::size_t>(k_max) + 1);
  VectorXd x = x0;
  for (int k = 0; k <= k_max; ++k) {
    IterateRecord rec;
    rec.k = k;
    rec.h_value = composite_value(spec, data, x);
    rec.pi = rec.h_value - h_star;
    if (!std::isfinite(rec.h_value)) throw numeric_error("non-finite objective value", k);
    if (opts.store_x) rec.x = x;
    if (opts.x_star != nullptr) rec.dist_sq = (x - *opts.x_star).squaredNorm();
    if (k < k_max) {
      Step st = step_fn(k, x);
      rec.err_sq = st.err_sq;
      rec.m = st.m;
      x = prox(spec.nonsmooth, step, x - step * st.estimate);
      if (!x.allFinite()) throw numeric_error("non-finite iterate", k + 1);
    }
    traj.records.push_back(std::move(rec));
  }
  return traj;
}

}  // namespace detail

inline Trajectory run(const ObjectiveSpec& spec, const FiniteSumData* data, const VectorXd& x0,
                      const ErrorModel& error_model, const SampleSchedule* schedule, int k_max,
                      const RateConstants& constants, double h_star, const RunOptions& opts = {}) {
  error_model.validate();
  const bool subsampling = error_model.kind == ErrorKind::subsample_with_replacement ||
                           error_model.kind == ErrorKind::subsample_without_replacement;
  if (subsampling && schedule == nullptr) {
    throw std::invalid_argument("subsampling error model needs a sample schedule");
  }
  Trajectory traj = detail::run_core(
      spec, data, x0, k_max, constants, h_star,
      [&](int k, const VectorXd& x) -> detail::Step {
        SubStream stream = SubStream::derive(error_model.rng_seed, opts.replicate,
                                             static_cast<std::uint64_t>(k));
        int m = 0;
        if (subsampling) {
          std::int64_t m64 = sample_size(*schedule, k);
          if (error_model.kind == ErrorKind::subsample_without_replacement) {
            m64 = std::min<std::int64_t>(m64, data->count());
          } else if (m64 > std::numeric_limits<int>::max()) {
            throw numeric_error("schedule sample size exceeds the supported range", k);
          }
          m = static_cast<int>(m64);
        }
        SampledGradient g = sampled_gradient(spec, data, x, m, error_model, stream);
        return {std::move(g.estimate), g.error.squaredNorm(), m};
      },
      opts);
  traj.seed = error_model.rng_seed;
  return traj;
}

// Deterministic error sequence, for hand-calculated cases. errors[k] is added
// to the exact gradient at step k; missing entries mean zero error.
inline Trajectory run_scripted(const ObjectiveSpec& spec, const FiniteSumData* data,
                               const VectorXd& x0, std::span<const VectorXd> errors, int k_max,
                               const RateConstants& constants, double h_star,
                               const RunOptions& opts = {}) {
  return detail::run_core(
      spec, data, x0, k_max, constants, h_star,
      [&](int k, const VectorXd& x) -> detail::Step {
        const VectorXd grad = full_gradient(spec, data, x);
        VectorXd estimate = grad;
        if (static_cast<std::size_t>(k) < errors.size()) estimate += errors[k];
        return {estimate, (estimate - grad).squaredNorm(), 0};
      },
      opts);
}

// Slack of the k-step objective-gap bound:
//   s_k = rho^k pi_0 + (1/theta) sum_{i<k} rho^{k-1-i} ||e_i||^2 - pi_k.
// Nonnegative (up to float slack) on every trajectory.
inline std::vector<double> check_pathwise_bound(const Trajectory& traj) {
  const double rho = traj.constants.rho;
  const double inv_theta = 1.0 / traj.constants.theta;
  std::vector<double> slack;
  slack.reserve(traj.records.size());
  double discounted = 0.0;  // sum_{i<k} rho^{k-1-i} ||e_i||^2
  double rho_k = 1.0;
  for (std::size_t k = 0; k < traj.records.size(); ++k) {
    if (k > 0) {
      discounted = rho * discounted + traj.records[k - 1].err_sq;
      rho_k *= rho;
    }
    slack.push_back(rho_k * traj.pi0() + inv_theta * discounted - traj.records[k].pi);
  }
  return slack;
}

// One-step decrease: pi_{k+1} <= rho pi_k + (rho/L) ||e_k||^2, since
// rho = 1 - 1/(1+40 tau^2) and the error weight is rho/L.
inline std::vector<bool> check_sufficient_decrease(const Trajectory& traj,
                                                   double rel_slack = 1e-9) {
  const double rho = traj.constants.rho;
  const double L = traj.constants.lipschitz;
  std::vector<bool> ok;
  for (std::size_t k = 0; k + 1 < traj.records.size(); ++k) {
    const double rhs = rho * traj.records[k].pi + (rho / L) * traj.records[k].err_sq;
    const double tol = rel_slack * std::max({1.0, std::abs(rhs), std::abs(traj.records[k].pi)});
    ok.push_back(traj.records[k + 1].pi <= rhs + tol);
  }
  return ok;
}

struct DistanceBoundReport {
  // Slacks (rhs - lhs) of the four bounds tying ||x_k - x*|| and
  // ||x_{k+1} - x*|| to the step length and the error norm, with the
  // published constants. The published squared forms (b) and (d) undercut
  // the achievable cross-term bound; b_corrected / d_corrected carry the
  // constants the squaring argument actually supports.
  double a = 0.0, b = 0.0, c = 0.0, d = 0.0;
  double b_corrected = 0.0, d_corrected = 0.0;
  bool all(double slack = 1e-9) const {
    return a >= -slack && b >= -slack && c >= -slack && d >= -slack;
  }
  bool all_certified(double slack = 1e-9) const {
    return a >= -slack && b_corrected >= -slack && c >= -slack && d_corrected >= -slack;
  }
};

// Requires stored iterates and a unique solution x*.
inline std::vector<DistanceBoundReport> check_solution_distance_bounds(const Trajectory& traj,
                                                                       const VectorXd& x_star) {
  const double tau = traj.constants.tau;
  const double L = traj.constants.lipschitz;
  std::vector<DistanceBoundReport> out;
  for (std::size_t k = 0; k + 1 < traj.records.size(); ++k) {
    const VectorXd& x = traj.records[k].x;
    const VectorXd& xn = traj.records[k + 1].x;
    if (x.size() == 0 || xn.size() == 0) {
      throw std::invalid_argument("distance bounds need stored iterates");
    }
    const double s = (x - xn).norm();
    const double u = std::sqrt(traj.records[k].err_sq) / L;
    const double dist = (x - x_star).norm();
    const double dist_next = (xn - x_star).norm();
    DistanceBoundReport r;
    r.a = tau * s + tau * u - dist;
    r.b = 2.0 * tau * tau * s * s + 1.25 * tau * tau * u * u - dist * dist;
    r.c = (1.0 + tau) * s + tau * u - dist_next;
    r.d = 0.5 * (2.0 + 5.0 * tau + 3.0 * tau * tau) * s * s +
          0.5 * (3.0 * tau * tau + tau) * u * u - dist_next * dist_next;
    r.b_corrected = 2.0 * tau * tau * (s * s + u * u) - dist * dist;
    r.d_corrected = (1.0 + 2.0 * tau) * ((1.0 + tau) * s * s + tau * u * u) -
                    dist_next * dist_next;
    out.push_back(r);
  }
  return out;
}

// Whether the conditional error variance stays below ||x_k - x*||^2/(10 tau^2),
// the regime in which the objective gap is a supermartingale.
inline std::vector<bool> supermartingale_condition(const Trajectory& traj, const VectorXd& x_star,
                                                   std::span<const double> conditional_err_var) {
  const double tau = traj.constants.tau;
  std::vector<bool> out;
  for (std::size_t k = 0; k + 1 < traj.records.size() && k < conditional_err_var.size(); ++k) {
    double dist_sq = traj.records[k].dist_sq;
    if (dist_sq < 0.0) {
      if (traj.records[k].x.size() == 0) {
        throw std::invalid_argument("supermartingale check needs iterates or dist_sq");
      }
      dist_sq = (traj.records[k].x - x_star).squaredNorm();
    }
    out.push_back(conditional_err_var[k] <= dist_sq / (10.0 * tau * tau));
  }
  return out;
}

inline void write_trajectory_csv_header(std::ostream& out) {
  out << "run_id,k,m,pi,err_sq,bound_pathwise\n";
}

inline void write_trajectory_csv_rows(std::ostream& out, const Trajectory& traj, int run_id) {
  const double rho = traj.constants.rho;
  const double inv_theta = 1.0 / traj.constants.theta;
  double discounted = 0.0;
  double rho_k = 1.0;
  for (std::size_t k = 0; k < traj.records.size(); ++k) {
    if (k > 0) {
      discounted = rho * discounted + traj.records[k - 1].err_sq;
      rho_k *= rho;
    }
    const double bound = rho_k * traj.pi0() + inv_theta * discounted;
    const auto& rec = traj.records[k];
    out << run_id << "," << rec.k << "," << rec.m << "," << format_double(rec.pi) << ","
        << format_double(rec.err_sq) << "," << format_double(bound) << "\n";
  }
}

}  // namespace proxtail
