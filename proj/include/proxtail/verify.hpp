#pragma once

#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "proxtail/bounds.hpp"
#include "proxtail/montecarlo.hpp"
#include "proxtail/sampling.hpp"
#include "proxtail/solver.hpp"

namespace proxtail {

enum class VerifySuite { lemmas, bounds, sampling, all };

struct VerifyOptions {
  bool coarse = false;
  // Negative control for the harness: flips the direction of the
  // Q-Pochhammer comparison so a correct implementation must report failures.
  bool negate_qpochhammer = false;
};

struct CheckResult {
  std::string name;
  long grid_points = 0;
  long violations = 0;
  double worst_margin = std::numeric_limits<double>::infinity();  // min(rhs - lhs)
  std::string note;
  bool informational = false;  // reported, not counted as a failure
};

namespace verify_detail {

class Margin {
 public:
  // margin >= -tol counts as holding.
  void add(double margin, double tol = 0.0) {
    ++points_;
    worst_ = std::min(worst_, margin);
    if (margin < -tol) ++violations_;
  }

  CheckResult finish(std::string name, std::string note = {}, bool informational = false) const {
    return CheckResult{std::move(name), points_, violations_, worst_, std::move(note),
                       informational};
  }

 private:
  long points_ = 0;
  long violations_ = 0;
  double worst_ = std::numeric_limits<double>::infinity();
};

struct RandomProblem {
  ObjectiveSpec spec;
  std::optional<FiniteSumData> data;
  const FiniteSumData* data_ptr() const { return data ? &*data : nullptr; }
};

inline RandomProblem random_quadratic(SubStream& rng, NonsmoothKind g_kind) {
  const int n = 1 + static_cast<int>(rng.uniform_below(4));
  VectorXd diag(n), center(n);
  for (int i = 0; i < n; ++i) {
    diag[i] = 0.2 + 2.8 * rng.uniform01();
    center[i] = -2.0 + 4.0 * rng.uniform01();
  }
  const double L = diag.maxCoeff();
  // L/m is the residual error-bound constant for g = 0; with a nonsmooth term
  // the certifiable constant from strong convexity is 3L/m.
  const double tau = (g_kind == NonsmoothKind::zero ? 1.0 : 3.0) * L / diag.minCoeff();
  Nonsmooth g;
  if (g_kind == NonsmoothKind::l1) {
    g = Nonsmooth::l1(0.1 + rng.uniform01());
  } else if (g_kind == NonsmoothKind::box) {
    VectorXd lo(n), hi(n);
    for (int i = 0; i < n; ++i) {
      lo[i] = -1.5 + rng.uniform01();
      hi[i] = lo[i] + 1.5 * rng.uniform01();
    }
    g = Nonsmooth::box(std::move(lo), std::move(hi));
  }
  RandomProblem p;
  p.spec = ObjectiveSpec::quadratic(std::move(diag), std::move(center), L, tau, 0.0, std::move(g));
  return p;
}

inline RandomProblem random_logistic(SubStream& rng) {
  const int M = 20 + static_cast<int>(rng.uniform_below(30));
  const int n = 2 + static_cast<int>(rng.uniform_below(4));
  RandomProblem p;
  p.data = generate_logistic_dataset(M, n, rng.next_u64());
  ObjectiveSpec probe = ObjectiveSpec::logistic(n, 1.0, 1.0, 0.0);
  const double L_data = estimate_lipschitz(probe, &*p.data);
  const double mu = 0.05 * L_data;
  p.spec = ObjectiveSpec::logistic(n, L_data + mu, (L_data + mu) / mu, mu);
  return p;
}

inline VectorXd random_point(SubStream& rng, int n, double scale) {
  VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = scale * rng.normal();
  return x;
}

inline VectorXd feasible_point(SubStream& rng, const Nonsmooth& g, int n, double scale) {
  VectorXd y = random_point(rng, n, scale);
  if (g.kind == NonsmoothKind::box) y = y.cwiseMax(g.lo).cwiseMin(g.hi);
  return y;
}

// Numeric infimum of the finite product form behind the main tail bound:
// inf_theta exp(-theta vartheta eps) prod_{i<k} (1 - theta n lambda a2^{k-1} y^i)^{-1}.
inline double product_form_numeric(const TailQuery& q, double lambda, double beta) {
  const double rho = q.constants.rho;
  const double alpha2 = std::max(beta, rho);
  const double y = beta == rho ? 1.0 : std::min(beta / rho, rho / beta);
  const double x = q.n * lambda * std::pow(alpha2, q.k - 1);
  auto log_obj = [&](double theta) {
    double acc = -theta * q.constants.theta * q.epsilon;
    double xy = x;
    for (int i = 0; i < q.k; ++i) {
      const double a = theta * xy;
      if (a >= 1.0) return std::numeric_limits<double>::infinity();
      acc -= std::log1p(-a);
      xy *= y;
    }
    return acc;
  };
  const auto res = detail::log_infimum_over_theta(1.0 / x, log_obj);
  return std::exp(res.log_value);
}

}  // namespace verify_detail

inline std::vector<CheckResult> verify_lemmas(const VerifyOptions& opts) {
  using namespace verify_detail;
  std::vector<CheckResult> out;
  const int problems = opts.coarse ? 12 : 40;
  const int points = opts.coarse ? 40 : 160;
  SubStream rng = SubStream::derive(0x70726f78ULL, 0, 0, 1);

  {  // three-point property of the prox step, with explicit gradient error
    Margin m;
    for (int p = 0; p < problems; ++p) {
      const NonsmoothKind kinds[] = {NonsmoothKind::zero, NonsmoothKind::l1, NonsmoothKind::box};
      RandomProblem prob = random_quadratic(rng, kinds[p % 3]);
      if (p % 5 == 4) prob = random_logistic(rng);
      const auto& spec = prob.spec;
      const double L = spec.lipschitz;
      for (int t = 0; t < points / 4; ++t) {
        const VectorXd x = random_point(rng, spec.dimension, 2.0);
        const VectorXd e = random_point(rng, spec.dimension, 0.5);
        const VectorXd y = feasible_point(rng, spec.nonsmooth, spec.dimension, 2.0);
        const VectorXd dir = full_gradient(spec, prob.data_ptr(), x) + e;
        const VectorXd xn = prox(spec.nonsmooth, 1.0 / L, x - dir / L);
        const double lhs = nonsmooth_value(spec.nonsmooth, y);
        const double rhs = nonsmooth_value(spec.nonsmooth, xn) + dir.dot(xn - y) +
                           0.5 * L * (xn - x).squaredNorm() + 0.5 * L * (y - xn).squaredNorm() -
                           0.5 * L * (y - x).squaredNorm();
        m.add(lhs - rhs, 1e-9 * std::max(1.0, std::abs(lhs)));
      }
    }
    out.push_back(m.finish("three_point_property"));
  }

  {  // prox is nonexpansive
    Margin m;
    for (int p = 0; p < problems; ++p) {
      const NonsmoothKind kinds[] = {NonsmoothKind::zero, NonsmoothKind::l1, NonsmoothKind::box};
      RandomProblem prob = random_quadratic(rng, kinds[p % 3]);
      for (int t = 0; t < points / 4; ++t) {
        const VectorXd z1 = random_point(rng, prob.spec.dimension, 3.0);
        const VectorXd z2 = random_point(rng, prob.spec.dimension, 3.0);
        const double alpha = 0.1 + 2.0 * rng.uniform01();
        const double lhs =
            (prox(prob.spec.nonsmooth, alpha, z1) - prox(prob.spec.nonsmooth, alpha, z2)).norm();
        m.add((z1 - z2).norm() - lhs, 1e-12);
      }
    }
    out.push_back(m.finish("prox_nonexpansive"));
  }

  {  // directional derivative of the smooth part matches the gradient
    Margin m;
    for (int p = 0; p < problems; ++p) {
      RandomProblem prob = p % 2 == 0 ? random_quadratic(rng, NonsmoothKind::zero)
                                      : random_logistic(rng);
      const auto& spec = prob.spec;
      for (int t = 0; t < 8; ++t) {
        const VectorXd x = random_point(rng, spec.dimension, 1.5);
        VectorXd d = random_point(rng, spec.dimension, 1.0);
        d.normalize();
        const double h = 1e-6;
        const double fd = (smooth_value(spec, prob.data_ptr(), x + h * d) -
                           smooth_value(spec, prob.data_ptr(), x - h * d)) /
                          (2.0 * h);
        const double exact = full_gradient(spec, prob.data_ptr(), x).dot(d);
        m.add(1e-5 - std::abs(fd - exact));
      }
    }
    out.push_back(m.finish("gradient_matches_directional_derivative"));
  }

  // Noisy trajectories exercise the pathwise bound chain.
  const int k_max = opts.coarse ? 25 : 60;
  {
    Margin pathwise, decrease, rate, linear, squared_printed, squared_corrected;
    for (int p = 0; p < problems; ++p) {
      RandomProblem prob = p % 3 == 2 ? random_logistic(rng)
                                      : random_quadratic(rng, p % 2 == 0 ? NonsmoothKind::zero
                                                                         : NonsmoothKind::l1);
      const auto& spec = prob.spec;
      const RateConstants rc = rate_constants(spec.lipschitz, spec.error_bound_tau);
      const VectorXd x0 = random_point(rng, spec.dimension, 2.0);
      const OptimalValue opt = optimal_value_oracle(spec, prob.data_ptr(), x0);
      RunOptions ropts;
      ropts.store_x = true;
      const ErrorModel noise = ErrorModel::gaussian(0.25, rng.next_u64());
      const Trajectory noisy =
          run(spec, prob.data_ptr(), x0, noise, nullptr, k_max, rc, opt.h_star, ropts);
      const double tol = 1e-9 * std::max(1.0, noisy.pi0());
      for (double s : check_pathwise_bound(noisy)) pathwise.add(s, tol);
      {
        const double rho = rc.rho, L = rc.lipschitz;
        for (std::size_t k = 0; k + 1 < noisy.records.size(); ++k) {
          const double rhs = rho * noisy.records[k].pi + (rho / L) * noisy.records[k].err_sq;
          decrease.add(rhs - noisy.records[k + 1].pi, 1e-9 * std::max(1.0, rhs));
        }
      }
      for (const auto& rep : check_solution_distance_bounds(noisy, opt.x_star)) {
        linear.add(rep.a, 1e-9);
        linear.add(rep.c, 1e-9);
        squared_printed.add(rep.b, 1e-9);
        squared_printed.add(rep.d, 1e-9);
        squared_corrected.add(rep.b_corrected, 1e-9);
        squared_corrected.add(rep.d_corrected, 1e-9);
      }
      const Trajectory clean = run(spec, prob.data_ptr(), x0, ErrorModel::none(), nullptr, k_max,
                                   rc, opt.h_star, ropts);
      double rho_k = 1.0;
      for (std::size_t k = 0; k < clean.records.size(); ++k) {
        rate.add(rho_k * clean.pi0() - clean.records[k].pi, tol);
        rho_k *= rc.rho;
      }
    }
    out.push_back(pathwise.finish("pathwise_objective_gap_bound"));
    out.push_back(decrease.finish("sufficient_decrease"));
    out.push_back(linear.finish("solution_distance_bounds_linear"));
    out.push_back(squared_corrected.finish("solution_distance_bounds_squared"));
    out.push_back(squared_printed.finish(
        "solution_distance_bounds_squared_published",
        "published cross-term constants can undercut the squared bounds (known discrepancy)",
        true));
    out.push_back(rate.finish("noiseless_linear_rate"));
  }

  {  // supermartingale flags match a direct recomputation
    Margin m;
    SubStream seed_rng = SubStream::derive(0x70726f78ULL, 0, 0, 2);
    RandomProblem prob = random_logistic(seed_rng);
    const auto& spec = prob.spec;
    const RateConstants rc = rate_constants(spec.lipschitz, spec.error_bound_tau);
    const VectorXd x0 = VectorXd::Zero(spec.dimension);
    const OptimalValue opt = optimal_value_oracle(spec, prob.data_ptr(), x0);
    SampleSchedule sched{1.0, 0.8, ScheduleMode::without_replacement, prob.data->count()};
    RunOptions ropts;
    ropts.store_x = true;
    ropts.x_star = &opt.x_star;
    const Trajectory traj = run(spec, prob.data_ptr(), x0, ErrorModel::subsample(false, 99),
                                &sched, opts.coarse ? 20 : 40, rc, opt.h_star, ropts);
    std::vector<double> cond_var;
    for (std::size_t k = 0; k + 1 < traj.records.size(); ++k) {
      const double S = population_variance(spec, *prob.data, traj.records[k].x);
      cond_var.push_back(error_variance_without_replacement(S, traj.records[k].m,
                                                            prob.data->count()));
    }
    const std::vector<bool> flags = supermartingale_condition(traj, opt.x_star, cond_var);
    for (std::size_t k = 0; k < flags.size(); ++k) {
      const double thresh = (traj.records[k].x - opt.x_star).squaredNorm() /
                            (10.0 * rc.tau * rc.tau);
      const bool direct = cond_var[k] <= thresh;
      m.add(flags[k] == direct ? 1.0 : -1.0, 0.0);
    }
    out.push_back(m.finish("supermartingale_condition_flags"));
  }

  return out;
}

inline std::vector<CheckResult> verify_bounds(const VerifyOptions& opts) {
  using namespace verify_detail;
  std::vector<CheckResult> out;
  const int grid = opts.coarse ? 50 : 100;

  {  // Gaussian closed form vs numeric infimum of the mixture bound
    Margin m;
    double worst_rel = 0.0;
    for (double tau : {1.0, 2.0}) {
      for (double L : {0.7, 1.0}) {
        const RateConstants rc = rate_constants(L, tau);
        for (int n : {1, 2, 3, 4, 5}) {
          for (double sigma : {0.1, 1.0, 3.0}) {
            for (int k : {1, 4, 12}) {
              const double R = discount_sum(rc.rho, k);
              const double thr = n * sigma * sigma * R / rc.theta;
              for (int j = 1; j <= (opts.coarse ? 6 : 20); ++j) {
                const double eps = thr * (1.0 + 0.35 * j);
                const double closed = gaussian_tail_bound_iid(n, sigma, rc.theta, R, eps);
                const TailQuery q{eps, k, rc, n};
                const double numeric = generic_tail_bound(q, MgfFamily::gaussian(sigma, n));
                const double rel = std::abs(closed - numeric) / closed;
                worst_rel = std::max(worst_rel, rel);
                m.add(1e-6 - rel);
              }
            }
          }
        }
      }
    }
    out.push_back(m.finish("gaussian_closed_form_vs_numeric_infimum",
                           "worst rel err " + format_double(worst_rel)));
  }

  {  // conjugate form agrees with the simple-mixture numeric bound
    Margin m;
    const RateConstants rc = rate_constants(40.0 / 41.0, 1.0);
    for (double sigma : {0.5, 1.0, 2.0}) {
      for (int n : {1, 2, 3}) {
        for (int k : {1, 3, 8}) {
          const double R = discount_sum(rc.rho, k);
          for (int j = 1; j <= 12; ++j) {
            const double eps = (n * sigma * sigma * R / rc.theta) * (1.0 + 0.4 * j);
            const TailQuery q{eps, k, rc, n};
            const MgfFamily gamma = MgfFamily::gaussian(sigma, n);
            const double via_conjugate = std::exp(conjugate_tail_bound(q, gamma));
            const double numeric = generic_tail_bound(q, gamma);
            m.add(1e-6 - std::abs(via_conjugate - numeric) / numeric);
          }
        }
      }
    }
    out.push_back(m.finish("conjugate_matches_mixture_bound"));
  }

  {  // product-form bound never exceeds the mixture bound built from the same families
    Margin m;
    for (double tau : {1.0, 3.0}) {
      const RateConstants rc = rate_constants(1.0, tau);
      for (double sigma : {0.3, 1.0}) {
        for (int n : {1, 3}) {
          for (int k : {2, 5, 10}) {
            std::vector<MgfFamily> fams(static_cast<std::size_t>(k),
                                        MgfFamily::gaussian(sigma, n));
            for (int j = 1; j <= 10; ++j) {
              const double eps = j * 0.8 * n * sigma * sigma / rc.theta;
              const TailQuery q{eps, k, rc, n};
              const double prod = unconditional_tail_bound(q, fams);
              const double mixture = generic_tail_bound(q, fams);
              m.add(mixture * (1.0 + 1e-7) - prod);
            }
          }
        }
      }
    }
    out.push_back(m.finish("product_bound_below_mixture_bound"));
  }

  {  // Q-Pochhammer lower bound
    Margin m;
    for (int i = 0; i <= grid; ++i) {
      for (int j = 1; j < grid; ++j) {
        const double x = static_cast<double>(i) / grid;
        const double y = static_cast<double>(j) / grid;
        const PairBound pb = qpochhammer_lower_bound(x, y);
        const double margin = opts.negate_qpochhammer ? pb.lhs - pb.rhs : pb.rhs - pb.lhs;
        m.add(margin, 1e-15);
      }
    }
    out.push_back(m.finish("qpochhammer_lower_bound"));
  }

  {  // finite product lower bound
    Margin m;
    for (int i = 0; i < grid; ++i) {
      for (int j = 1; j < grid; ++j) {
        const double y = static_cast<double>(j) / grid;
        const double x = y * static_cast<double>(i) / grid;  // x < y
        for (int N : {0, 1, 2, 5, 17}) {
          const PairBound pb = finite_product_lower_bound(x, y, N);
          m.add(pb.rhs - pb.lhs, 1e-15);
        }
      }
    }
    out.push_back(m.finish("finite_product_lower_bound"));
  }

  {  // closed-form cap on the discounted product infimum, exponents <= 1
    Margin m;
    const int steps = opts.coarse ? 8 : 14;
    for (int xi = 1; xi <= steps; ++xi) {
      for (int yi = 1; yi <= steps; ++yi) {
        for (double k_exp : {0.25, 0.5, 1.0}) {
          const double x = static_cast<double>(xi) / (steps + 1);
          const double y = static_cast<double>(yi) / (steps + 1);
          const double alpha = (1.0 / k_exp) * (1.0 / std::log(1.0 / y) + 1.0);
          for (double mult : {1.0, 1.5, 3.0, 8.0}) {
            const TediousResult r = tedious_bound(x, y, k_exp, 1.0, mult * alpha * x);
            m.add(r.closed_form - r.numeric_inf, 1e-9 * r.closed_form);
          }
        }
      }
    }
    out.push_back(m.finish("tedious_bound_domination"));
  }

  {  // published exponent breaks down for product powers above 1: report only
    Margin m;
    long failing = 0;
    for (double k_exp : {2.0, 4.0}) {
      for (double y : {0.3, 0.5, 0.7}) {
        for (double x : {0.25, 0.5, 0.75}) {
          const double alpha = (1.0 / k_exp) * (1.0 / std::log(1.0 / y) + 1.0);
          for (double mult : {2.0, 6.0}) {
            const TediousResult r = tedious_bound(x, y, k_exp, 1.0, mult * alpha * x);
            if (!r.dominates) ++failing;
            m.add(r.closed_form - r.numeric_inf, 0.0);
          }
        }
      }
    }
    CheckResult cr = m.finish("tedious_bound_exponent_above_one",
                              std::to_string(failing) +
                                  " points where the published form undercuts the product "
                                  "infimum (known discrepancy)",
                              true);
    out.push_back(std::move(cr));
  }

  {  // published Gaussian product closed form vs its numeric infimum: report only
    Margin m;
    long failing = 0;
    for (double rho : {0.5, 0.8, 0.95}) {
      const RateConstants rc = rate_constants_from_rho(rho);
      const double alpha = 1.0 - 1.0 / std::log(rho);
      for (double sigma : {0.5, 1.0}) {
        for (int n : {1, 2}) {
          for (int k : {3, 8}) {
            std::vector<MgfFamily> fams(static_cast<std::size_t>(k),
                                        MgfFamily::gaussian(sigma, n));
            for (double mult : {1.0, 2.0, 5.0}) {
              const double eps = mult * n * alpha * sigma * sigma / rc.theta;
              const double closed =
                  gaussian_tail_bound_unconditional(n, sigma, rc.theta, rho, eps);
              const TailQuery q{eps, k, rc, n};
              const double numeric = unconditional_tail_bound(q, fams);
              if (numeric > closed * (1.0 + 1e-9)) ++failing;
              m.add(closed - numeric, 0.0);
            }
          }
        }
      }
    }
    out.push_back(m.finish("gaussian_product_closed_form_domination",
                           std::to_string(failing) +
                               " points where the published closed form undercuts the product "
                               "infimum (known discrepancy in the trailing exponential)",
                           true));
  }

  {  // main bound dominates the numeric infimum of its product form
    Margin m;
    for (double tau : {1.0, 2.0}) {
      const RateConstants rc = rate_constants(1.0, tau);
      for (double beta : {0.5, 0.9}) {
        for (int n : {1, 2}) {
          for (int k : {1, 3, 7}) {
            const double thr = main_bound_threshold(k, 1.0, beta, n, rc);
            for (double mult : {1.05, 1.5, 3.0, 7.0}) {
              const TailQuery q{mult * thr, k, rc, n};
              const double closed = main_tail_bound(q, 1.0, beta);
              const double numeric = product_form_numeric(q, 1.0, beta);
              m.add(closed - numeric, 1e-9 * closed);
            }
          }
        }
      }
    }
    out.push_back(m.finish("main_bound_dominates_product_form"));
  }

  {  // main bound with k = 1 dominates the sharper Gaussian closed form
    Margin m;
    const RateConstants rc = rate_constants(1.0, 1.0);
    for (double sigma : {0.3, 1.0, 2.5}) {
      for (int n : {1, 2, 4}) {
        const double lambda = 2.0 * sigma * sigma;
        for (double mult : {0.4, 0.9, 1.2, 3.0, 9.0}) {
          const double eps = mult * n * lambda / rc.theta;
          const TailQuery q{eps, 1, rc, n};
          const double main = main_tail_bound(q, lambda, 0.5);
          const double gauss = gaussian_tail_bound_iid(n, sigma, rc.theta, 1.0, eps);
          m.add(main - gauss, 1e-12);
        }
      }
    }
    out.push_back(m.finish("main_bound_dominates_gaussian_closed_form_k1"));
  }

  {  // every tail bound lies in (0,1] and is nonincreasing in epsilon
    Margin m;
    const RateConstants rc = rate_constants(1.0, 1.5);
    for (int k : {1, 4, 10}) {
      double prev_iid = 2.0, prev_unc = 2.0, prev_main = 2.0;
      const double R = discount_sum(rc.rho, k);
      for (int j = 1; j <= 40; ++j) {
        const double eps = 0.15 * j;
        const double b1 = gaussian_tail_bound_iid(2, 0.8, rc.theta, R, eps);
        const double b2 = gaussian_tail_bound_unconditional(2, 0.8, rc.theta, rc.rho, eps);
        const TailQuery q{eps, k, rc, 2};
        const double b3 = main_tail_bound(q, 1.0, 0.7);
        for (double b : {b1, b2, b3}) m.add(b > 0.0 && b <= 1.0 ? 1.0 : -1.0, 0.0);
        m.add(prev_iid - b1, 1e-12);
        m.add(prev_unc - b2, 1e-12);
        m.add(prev_main - b3, 1e-12);
        prev_iid = b1;
        prev_unc = b2;
        prev_main = b3;
      }
    }
    out.push_back(m.finish("tail_bounds_in_unit_interval_and_monotone"));
  }

  {  // inverse of the main bound round-trips
    Margin m;
    const RateConstants rc = rate_constants_from_rho(0.9);
    for (int k : {1, 10, 60}) {
      for (int i = 1; i <= 10; ++i) {
        for (double p : {std::pow(10.0, -i), std::pow(10.0, -10.0 * i)}) {
          const double eps = invert_main_bound(p, k, 1.0, 0.9, 1, rc);
          const TailQuery q{eps, k, rc, 1};
          const double back = main_tail_bound(q, 1.0, 0.9);
          m.add(1e-9 - std::abs(std::log(back) - std::log(p)) / std::abs(std::log(p)));
        }
      }
    }
    out.push_back(m.finish("main_bound_inverse_round_trip"));
  }

  {  // the published mean floor is half the discounted-variance limit
    Margin m;
    for (double tau : {1.0, 2.0, 5.0}) {
      for (double L : {0.5, 1.0, 3.0}) {
        const RateConstants rc = rate_constants(L, tau);
        for (double sigma : {0.1, 1.0}) {
          for (int n : {1, 4}) {
            const double floor = gaussian_mean_floor(n, sigma, tau, L);
            const double limit = n * sigma * sigma / (rc.theta * (1.0 - rc.rho));
            m.add(1e-12 - std::abs(2.0 * floor - limit) / limit);
          }
        }
      }
    }
    out.push_back(m.finish("mean_floor_is_half_discounted_limit",
                           "published constant is 20 tau^2/L; the bound chain yields twice that"));
  }

  return out;
}

inline std::vector<CheckResult> verify_sampling(const VerifyOptions& opts) {
  using namespace verify_detail;
  std::vector<CheckResult> out;

  {  // schedule sizes match the exhaustive minimum-feasible scan
    Margin m;
    for (double beta : {0.5, 0.9, 0.97}) {
      SampleSchedule sched{1.0, beta, ScheduleMode::without_replacement, 100};
      for (int k = 0; k <= 100; ++k) {
        const double target = sched.lambda * std::pow(sched.beta, k);
        int expected = sched.cap_M;
        for (int cand = 1; cand <= sched.cap_M; ++cand) {
          if ((1.0 / cand) * (1.0 - static_cast<double>(cand - 1) / sched.cap_M) <= target) {
            expected = cand;
            break;
          }
        }
        m.add(sample_size(sched, k) == expected ? 1.0 : -1.0, 0.0);
      }
    }
    out.push_back(m.finish("schedule_matches_exhaustive_scan"));
  }

  {  // iid schedule keeps 1/m_k <= lambda beta^k
    Margin m;
    for (double lambda : {0.3, 1.0, 2.5}) {
      for (double beta : {0.5, 0.8, 0.95}) {
        SampleSchedule sched{lambda, beta, ScheduleMode::iid, 0};
        for (int k = 0; k <= 60; ++k) {
          const std::int64_t mk = sample_size(sched, k);
          m.add(lambda * std::pow(beta, k) - 1.0 / static_cast<double>(mk), 0.0);
        }
      }
    }
    out.push_back(m.finish("iid_schedule_invariant"));
  }

  {  // Serfling eta never exceeds Hoeffding eta, strictly below for m >= 2
    Margin m;
    const int M = 50;
    for (int mm = 1; mm <= M; ++mm) {
      const double h = concentration_eta(2.0, mm, std::nullopt, ConcentrationKind::hoeffding);
      const double s = concentration_eta(2.0, mm, M, ConcentrationKind::serfling);
      m.add(h - s, 0.0);
      if (mm >= 2) m.add(h - s - 1e-12, 0.0);
    }
    out.push_back(m.finish("serfling_below_hoeffding"));
  }

  {  // empirical sample-mean tails under both eta scales
    Margin m;
    const int M = 24;
    VectorXd pop(M);
    SubStream rng = SubStream::derive(0x73616d70ULL, 0, 0, 5);
    for (int i = 0; i < M; ++i) pop[i] = 2.0 * rng.uniform01();  // diameter <= 2
    const double d = pop.maxCoeff() - pop.minCoeff();
    const double mean = pop.mean();
    const int draws = opts.coarse ? 20000 : 100000;
    for (int mm : {2, 6, 12, 24}) {
      for (bool with_replacement : {true, false}) {
        if (with_replacement && mm == M) continue;
        std::vector<double> devs(static_cast<std::size_t>(draws));
        for (int r = 0; r < draws; ++r) {
          SubStream s = SubStream::derive(0x73616d70ULL, static_cast<std::uint64_t>(r),
                                          static_cast<std::uint64_t>(mm),
                                          with_replacement ? 7 : 8);
          double acc = 0.0;
          if (with_replacement) {
            for (int j = 0; j < mm; ++j) {
              acc += pop[static_cast<int>(s.uniform_below(M))];
            }
          } else {
            for (int idx : sample_subset(M, mm, s)) acc += pop[idx];
          }
          devs[static_cast<std::size_t>(r)] = acc / mm - mean;
        }
        const double eta = with_replacement
                               ? concentration_eta(d, mm, std::nullopt, ConcentrationKind::hoeffding)
                               : concentration_eta(d, mm, M, ConcentrationKind::serfling);
        for (double eps : {0.1, 0.25, 0.5, 0.8}) {
          long count = 0;
          for (double v : devs) {
            if (v >= eps) ++count;
          }
          const double p_hat = static_cast<double>(count) / draws;
          const double se = std::sqrt(std::max(p_hat * (1.0 - p_hat), 1.0 / draws) / draws);
          m.add(std::exp(-eps * eps / eta) + 3.0 * se - p_hat, 0.0);
        }
      }
    }
    out.push_back(m.finish("concentration_tail_domination"));
  }

  {  // without-replacement error variance formula, Monte Carlo
    Margin m;
    const FiniteSumData data = generate_logistic_dataset(60, 5, 123);
    ObjectiveSpec probe = ObjectiveSpec::logistic(5, 1.0, 1.0, 0.0);
    const double L_data = estimate_lipschitz(probe, &data);
    const double mu = 0.05 * L_data;
    const ObjectiveSpec spec = ObjectiveSpec::logistic(5, L_data + mu, (L_data + mu) / mu, mu);
    SubStream rng = SubStream::derive(0x73616d70ULL, 0, 0, 9);
    const VectorXd x = random_point(rng, 5, 1.0);
    const double S = population_variance(spec, data, x);
    const int draws = opts.coarse ? 20000 : 60000;
    const ErrorModel model = ErrorModel::subsample(false, 0x5eedULL);
    for (int mm : {1, 6, 20, 60}) {
      double acc = 0.0, acc2 = 0.0;
      for (int r = 0; r < draws; ++r) {
        SubStream s = SubStream::derive(model.rng_seed, static_cast<std::uint64_t>(r),
                                        static_cast<std::uint64_t>(mm));
        const double e2 = sampled_gradient(spec, &data, x, mm, model, s).error.squaredNorm();
        acc += e2;
        acc2 += e2 * e2;
      }
      const double mean_e2 = acc / draws;
      const double se = std::sqrt(std::max(0.0, acc2 / draws - mean_e2 * mean_e2) / draws);
      const double formula = error_variance_without_replacement(S, mm, data.count());
      if (mm == data.count()) {
        m.add(mean_e2 == 0.0 && formula == 0.0 ? 1.0 : -1.0, 0.0);
      } else {
        m.add(3.0 * se - std::abs(mean_e2 - formula), 0.0);
      }
    }
    out.push_back(m.finish("without_replacement_variance_formula"));
  }

  {  // vector MGF bound with per-coordinate eta, Monte Carlo domination
    Margin m;
    const FiniteSumData data = generate_logistic_dataset(50, 3, 321);
    ObjectiveSpec probe = ObjectiveSpec::logistic(3, 1.0, 1.0, 0.0);
    const double L_data = estimate_lipschitz(probe, &data);
    const double mu = 0.05 * L_data;
    const ObjectiveSpec spec = ObjectiveSpec::logistic(3, L_data + mu, (L_data + mu) / mu, mu);
    SubStream rng = SubStream::derive(0x73616d70ULL, 0, 0, 11);
    const VectorXd x = random_point(rng, 3, 0.8);
    const VectorXd diam = population_diameter(spec, data, x);
    const int mm = 10;
    const double nu = concentration_eta(diam.maxCoeff(), mm, data.count(),
                                        ConcentrationKind::serfling);
    const int draws = opts.coarse ? 20000 : 80000;
    std::vector<double> err_sq(static_cast<std::size_t>(draws));
    const ErrorModel model = ErrorModel::subsample(false, 0xabcdULL);
    for (int r = 0; r < draws; ++r) {
      SubStream s = SubStream::derive(model.rng_seed, static_cast<std::uint64_t>(r), 0);
      err_sq[static_cast<std::size_t>(r)] =
          sampled_gradient(spec, &data, x, mm, model, s).error.squaredNorm();
    }
    const double thetas[] = {0.0, 0.25 / (nu * 3), 0.5 / (nu * 3), 0.8 / (nu * 3)};
    for (const auto& row : empirical_mgf_check(err_sq, nu, 3, thetas)) {
      if (!row.skipped) m.add(row.exceeded ? -1.0 : 1.0, 0.0);
    }
    out.push_back(m.finish("vector_mgf_bound_domination"));
  }

  {  // fixed substream key reproduces the draw bit for bit
    Margin m;
    const FiniteSumData data = generate_logistic_dataset(30, 4, 9);
    ObjectiveSpec probe = ObjectiveSpec::logistic(4, 1.0, 1.0, 0.0);
    const double L_data = estimate_lipschitz(probe, &data);
    const double mu = 0.05 * L_data;
    const ObjectiveSpec spec = ObjectiveSpec::logistic(4, L_data + mu, (L_data + mu) / mu, mu);
    const VectorXd x = VectorXd::Ones(4);
    const ErrorModel model = ErrorModel::subsample(false, 7);
    for (int r = 0; r < 20; ++r) {
      SubStream s1 = SubStream::derive(7, static_cast<std::uint64_t>(r), 3);
      SubStream s2 = SubStream::derive(7, static_cast<std::uint64_t>(r), 3);
      const VectorXd a = sampled_gradient(spec, &data, x, 8, model, s1).estimate;
      const VectorXd b = sampled_gradient(spec, &data, x, 8, model, s2).estimate;
      m.add(a == b ? 1.0 : -1.0, 0.0);
    }
    out.push_back(m.finish("sampled_gradient_reproducible"));
  }

  return out;
}

inline std::vector<CheckResult> run_verification(VerifySuite suite, const VerifyOptions& opts) {
  std::vector<CheckResult> out;
  auto append = [&](std::vector<CheckResult>&& more) {
    for (auto& r : more) out.push_back(std::move(r));
  };
  if (suite == VerifySuite::lemmas || suite == VerifySuite::all) append(verify_lemmas(opts));
  if (suite == VerifySuite::bounds || suite == VerifySuite::all) append(verify_bounds(opts));
  if (suite == VerifySuite::sampling || suite == VerifySuite::all) append(verify_sampling(opts));
  return out;
}

inline long count_violations(const std::vector<CheckResult>& results) {
  long total = 0;
  for (const auto& r : results) {
    if (!r.informational) total += r.violations;
  }
  return total;
}

inline void print_verification_report(std::ostream& out, const std::vector<CheckResult>& results) {
  for (const auto& r : results) {
    out << (r.informational ? "[info] " : (r.violations == 0 ? "[ ok ] " : "[FAIL] ")) << r.name
        << ": points=" << r.grid_points << " violations=" << r.violations
        << " worst_margin=" << format_double(r.worst_margin);
    if (!r.note.empty()) out << "  (" << r.note << ")";
    out << "\n";
  }
}

}  // namespace proxtail
