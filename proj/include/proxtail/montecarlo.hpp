#pragma once

#include <boost/math/distributions/binomial.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "proxtail/bounds.hpp"
#include "proxtail/solver.hpp"

namespace proxtail {

struct ExperimentConfig {
  ObjectiveSpec spec;
  std::optional<FiniteSumData> data;
  VectorXd x0;
  ErrorModel error_model;
  std::optional<SampleSchedule> schedule;
  int k_max = 1;
  int replicates = 1;
  std::uint64_t master_seed = 0;
  int parallelism = 1;
  std::vector<double> epsilon_grid;
  int j_lo = -5, j_hi = 5;
  bool store_x = false;
  bool track_distance = false;  // record ||x_k - x*||^2 per iterate

  void validate() const {
    spec.validate();
    if (replicates < 1) throw std::invalid_argument("replicates must be >= 1");
    if (k_max < 1) throw std::invalid_argument("k_max must be >= 1");
    if (parallelism < 1) throw std::invalid_argument("parallelism must be >= 1");
    for (std::size_t i = 1; i < epsilon_grid.size(); ++i) {
      if (!(epsilon_grid[i] > epsilon_grid[i - 1])) {
        throw std::invalid_argument("epsilon grid must be strictly increasing");
      }
    }
  }
};

struct ResolvedProblem {
  RateConstants constants;
  double h_star = 0.0;
  VectorXd x_star;
};

inline ResolvedProblem resolve_problem(const ExperimentConfig& cfg) {
  cfg.validate();
  ResolvedProblem r;
  r.constants = rate_constants(cfg.spec.lipschitz, cfg.spec.error_bound_tau);
  const FiniteSumData* data = cfg.data ? &*cfg.data : nullptr;
  OptimalValue opt = optimal_value_oracle(cfg.spec, data, cfg.x0);
  r.h_star = opt.h_star;
  r.x_star = std::move(opt.x_star);
  return r;
}

// Runs replicates 0..N-1 across cfg.parallelism threads in fixed contiguous
// chunks. consume(r, traj) is called once per successful replicate and must
// only touch state indexed by r; results are then independent of scheduling.
// Returns the numeric failures (replicate, message), which are skipped.
template <class Consume>
std::vector<std::pair<int, std::string>> for_each_replicate(const ExperimentConfig& cfg,
                                                            const ResolvedProblem& resolved,
                                                            Consume&& consume) {
  cfg.validate();
  const int N = cfg.replicates;
  const int width = std::clamp(cfg.parallelism, 1, N);
  const FiniteSumData* data = cfg.data ? &*cfg.data : nullptr;
  const SampleSchedule* schedule = cfg.schedule ? &*cfg.schedule : nullptr;

  std::vector<std::vector<std::pair<int, std::string>>> failures(
      static_cast<std::size_t>(width));
  auto worker = [&](int t) {
    const int lo = static_cast<int>(static_cast<long>(N) * t / width);
    const int hi = static_cast<int>(static_cast<long>(N) * (t + 1) / width);
    for (int r = lo; r < hi; ++r) {
      RunOptions opts;
      opts.store_x = cfg.store_x;
      opts.replicate = static_cast<std::uint64_t>(r);
      if (cfg.track_distance) opts.x_star = &resolved.x_star;
      ErrorModel model = cfg.error_model;
      model.rng_seed = cfg.master_seed;
      try {
        Trajectory traj = run(cfg.spec, data, cfg.x0, model, schedule, cfg.k_max,
                              resolved.constants, resolved.h_star, opts);
        consume(r, std::move(traj));
      } catch (const numeric_error& e) {
        failures[static_cast<std::size_t>(t)].emplace_back(r, e.what());
      }
    }
  };
  if (width == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(width));
    for (int t = 0; t < width; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
  }
  std::vector<std::pair<int, std::string>> flat;
  for (auto& chunk : failures) {
    flat.insert(flat.end(), chunk.begin(), chunk.end());
  }
  std::sort(flat.begin(), flat.end());
  return flat;
}

struct ExperimentResult {
  std::vector<Trajectory> trajectories;  // ordered by replicate, failures skipped
  std::vector<std::pair<int, std::string>> failures;
  ResolvedProblem resolved;
};

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentResult out;
  out.resolved = resolve_problem(cfg);
  std::vector<std::optional<Trajectory>> slots(static_cast<std::size_t>(cfg.replicates));
  out.failures = for_each_replicate(cfg, out.resolved, [&](int r, Trajectory&& traj) {
    slots[static_cast<std::size_t>(r)] = std::move(traj);
  });
  out.trajectories.reserve(slots.size());
  for (auto& s : slots) {
    if (s) out.trajectories.push_back(std::move(*s));
  }
  return out;
}

// Quantile levels 0.5^j and 1-0.5^j for j in [j_lo, j_hi], keeping those in
// (0,1), sorted and deduplicated. Invalid levels are reported via skipped.
inline std::vector<double> quantile_levels(int j_lo, int j_hi,
                                           std::vector<double>* skipped = nullptr) {
  std::vector<double> levels;
  for (int j = j_lo; j <= j_hi; ++j) {
    for (double level : {std::pow(0.5, j), 1.0 - std::pow(0.5, j)}) {
      if (level > 0.0 && level < 1.0) {
        levels.push_back(level);
      } else if (skipped != nullptr) {
        skipped->push_back(level);
      }
    }
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  return levels;
}

// Nearest-rank empirical quantile: the ceil(q N)-th smallest value.
inline double nearest_rank_quantile(std::vector<double> values, double level) {
  if (values.empty()) throw std::invalid_argument("quantile of empty sample");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must be in (0,1)");
  const auto rank = static_cast<std::size_t>(
      std::ceil(level * static_cast<double>(values.size())));
  const std::size_t idx = std::max<std::size_t>(rank, 1) - 1;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(idx),
                   values.end());
  return values[idx];
}

struct QuantileRow {
  int k = 0;
  double level = 0.0;
  double pi_value = 0.0;
};

inline std::vector<QuantileRow> quantile_series(const std::vector<Trajectory>& trajs, int j_lo,
                                                int j_hi, std::ostream* warn = nullptr) {
  if (trajs.empty()) throw std::invalid_argument("no trajectories");
  std::vector<double> skipped;
  const std::vector<double> levels = quantile_levels(j_lo, j_hi, &skipped);
  if (warn != nullptr) {
    for (double level : skipped) {
      *warn << "quantile level " << format_double(level) << " outside (0,1), skipped\n";
    }
  }
  const std::size_t steps = trajs.front().records.size();
  std::vector<QuantileRow> rows;
  std::vector<double> column(trajs.size());
  for (std::size_t k = 0; k < steps; ++k) {
    for (std::size_t r = 0; r < trajs.size(); ++r) {
      column[r] = trajs[r].records[k].pi;
    }
    for (double level : levels) {
      rows.push_back({static_cast<int>(k), level, nearest_rank_quantile(column, level)});
    }
  }
  return rows;
}

struct BinomialCI {
  double low = 0.0;
  double high = 1.0;
};

// Exact (Clopper-Pearson) two-sided interval for a binomial proportion.
inline BinomialCI clopper_pearson(long successes, long trials, double confidence = 0.99) {
  if (trials < 1 || successes < 0 || successes > trials) {
    throw std::invalid_argument("clopper_pearson: bad counts");
  }
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw std::invalid_argument("confidence must be in (0,1)");
  }
  using boost::math::binomial_distribution;
  const double tail = 0.5 * (1.0 - confidence);
  BinomialCI ci;
  ci.low = binomial_distribution<double>::find_lower_bound_on_p(
      static_cast<double>(trials), static_cast<double>(successes), tail,
      binomial_distribution<double>::clopper_pearson_exact_interval);
  ci.high = binomial_distribution<double>::find_upper_bound_on_p(
      static_cast<double>(trials), static_cast<double>(successes), tail,
      binomial_distribution<double>::clopper_pearson_exact_interval);
  return ci;
}

struct TailEstimate {
  int k = 0;
  double epsilon = 0.0;
  double p_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 1.0;
  double bound_main = std::numeric_limits<double>::quiet_NaN();
  double bound_gaussian = std::numeric_limits<double>::quiet_NaN();
  double p_hat_from_mean = 0.0;
};

// Parameters for the theoretical curves attached to the empirical tails.
struct TailBoundAttachment {
  int n = 1;
  std::optional<std::pair<double, double>> main_lambda_beta;  // (lambda, beta)
  std::optional<double> gaussian_sigma;
};

inline std::vector<TailEstimate> empirical_tail(const std::vector<Trajectory>& trajs,
                                                const RateConstants& constants,
                                                std::span<const double> epsilon_grid,
                                                std::span<const int> k_set,
                                                const TailBoundAttachment& attach = {}) {
  if (trajs.empty()) throw std::invalid_argument("no trajectories");
  const double pi0 = trajs.front().pi0();
  for (const auto& t : trajs) {
    if (t.pi0() != pi0) throw std::invalid_argument("tail estimates need a common x0");
  }
  const long N = static_cast<long>(trajs.size());
  std::vector<TailEstimate> rows;
  std::vector<double> dev(trajs.size());
  for (int k : k_set) {
    if (k < 0 || static_cast<std::size_t>(k) >= trajs.front().records.size()) {
      throw std::invalid_argument("k outside trajectory range");
    }
    const double drift = std::pow(constants.rho, k) * pi0;
    double mean_pi = 0.0;
    for (std::size_t r = 0; r < trajs.size(); ++r) {
      dev[r] = trajs[r].records[static_cast<std::size_t>(k)].pi;
      mean_pi += dev[r];
    }
    mean_pi /= static_cast<double>(N);
    for (double eps : epsilon_grid) {
      TailEstimate row;
      row.k = k;
      row.epsilon = eps;
      long count = 0, count_mean = 0;
      for (double pi : dev) {
        if (pi - drift >= eps) ++count;
        if (pi - mean_pi >= eps) ++count_mean;
      }
      row.p_hat = static_cast<double>(count) / static_cast<double>(N);
      row.p_hat_from_mean = static_cast<double>(count_mean) / static_cast<double>(N);
      const BinomialCI ci = clopper_pearson(count, N);
      row.ci_low = ci.low;
      row.ci_high = ci.high;
      if (attach.main_lambda_beta) {
        TailQuery q{eps, std::max(k, 1), constants, attach.n};
        row.bound_main = main_tail_bound(q, attach.main_lambda_beta->first,
                                         attach.main_lambda_beta->second);
      }
      if (attach.gaussian_sigma) {
        row.bound_gaussian = gaussian_tail_bound_unconditional(
            attach.n, *attach.gaussian_sigma, constants.theta, constants.rho, eps);
      }
      rows.push_back(row);
    }
  }
  return rows;
}

struct MgfCheckRow {
  double theta = 0.0;
  double empirical = 0.0;
  double se = 0.0;
  double bound = 0.0;
  bool exceeded = false;
  bool skipped = false;
};

// Compares the empirical mean of exp(theta ||e||^2) against 1/(1 - theta nu n),
// flagging values beyond three standard errors of the mean.
inline std::vector<MgfCheckRow> empirical_mgf_check(std::span<const double> err_sq_samples,
                                                    double nu, int n,
                                                    std::span<const double> theta_grid) {
  if (err_sq_samples.empty()) throw std::invalid_argument("no error samples");
  std::vector<MgfCheckRow> rows;
  for (double theta : theta_grid) {
    MgfCheckRow row;
    row.theta = theta;
    if (theta < 0.0 || theta >= 1.0 / (nu * n)) {
      row.skipped = true;
      rows.push_back(row);
      continue;
    }
    double acc = 0.0, acc2 = 0.0;
    for (double s : err_sq_samples) {
      const double v = std::exp(theta * s);
      acc += v;
      acc2 += v * v;
    }
    const double N = static_cast<double>(err_sq_samples.size());
    row.empirical = acc / N;
    const double var = std::max(0.0, acc2 / N - row.empirical * row.empirical);
    row.se = std::sqrt(var / N);
    row.bound = theta == 0.0 ? 1.0 : mgf_bound_from_tail(nu, n, theta);
    row.exceeded = row.empirical > row.bound * (1.0 + 3.0 * row.se / row.empirical);
    rows.push_back(row);
  }
  return rows;
}

struct ExpectationRow {
  int k = 0;
  double mean_dev = 0.0;
  double se = 0.0;
  double bound_k_form = 0.0;
  double bound_sharp = std::numeric_limits<double>::quiet_NaN();
  bool ok = true;  // mean_dev + 3 se <= bound_k_form
};

inline std::vector<ExpectationRow> expectation_check(const std::vector<Trajectory>& trajs,
                                                     double lambda, double beta,
                                                     const RateConstants& constants) {
  if (trajs.empty()) throw std::invalid_argument("no trajectories");
  const double pi0 = trajs.front().pi0();
  const std::size_t steps = trajs.front().records.size();
  const double N = static_cast<double>(trajs.size());
  std::vector<ExpectationRow> rows;
  for (std::size_t k = 1; k < steps; ++k) {
    const double drift = std::pow(constants.rho, static_cast<int>(k)) * pi0;
    double acc = 0.0, acc2 = 0.0;
    for (const auto& t : trajs) {
      const double d = t.records[k].pi - drift;
      acc += d;
      acc2 += d * d;
    }
    ExpectationRow row;
    row.k = static_cast<int>(k);
    row.mean_dev = acc / N;
    row.se = std::sqrt(std::max(0.0, acc2 / N - row.mean_dev * row.mean_dev) / N);
    row.bound_k_form = expectation_rate_bound(lambda, beta, constants, row.k, false);
    if (beta != constants.rho) {
      row.bound_sharp = expectation_rate_bound(lambda, beta, constants, row.k, true);
    }
    row.ok = row.mean_dev + 3.0 * row.se <= row.bound_k_form;
    rows.push_back(row);
  }
  return rows;
}

inline void write_quantiles_csv(std::ostream& out, const std::vector<QuantileRow>& rows) {
  out << "k,level,pi_value\n";
  for (const auto& r : rows) {
    out << r.k << "," << format_double(r.level) << "," << format_double(r.pi_value) << "\n";
  }
}

inline void write_tails_csv(std::ostream& out, const std::vector<TailEstimate>& rows) {
  out << "k,epsilon,p_hat,ci_low,ci_high,bound_main,bound_gaussian,p_hat_from_mean\n";
  for (const auto& r : rows) {
    out << r.k << "," << format_double(r.epsilon) << "," << format_double(r.p_hat) << ","
        << format_double(r.ci_low) << "," << format_double(r.ci_high) << ",";
    if (!std::isnan(r.bound_main)) out << format_double(r.bound_main);
    out << ",";
    if (!std::isnan(r.bound_gaussian)) out << format_double(r.bound_gaussian);
    out << "," << format_double(r.p_hat_from_mean) << "\n";
  }
}

inline void write_expectation_csv(std::ostream& out, const std::vector<ExpectationRow>& rows) {
  out << "k,mean_dev,se,bound_k_form,bound_sharp\n";
  for (const auto& r : rows) {
    out << r.k << "," << format_double(r.mean_dev) << "," << format_double(r.se) << ","
        << format_double(r.bound_k_form) << ",";
    if (!std::isnan(r.bound_sharp)) out << format_double(r.bound_sharp);
    out << "\n";
  }
}

}  // namespace proxtail
