#pragma once

#include <cmath>
#include <cstdint>
#include <optional>

#include "proxtail/model.hpp"
#include "proxtail/rng.hpp"

namespace proxtail {

enum class ErrorKind { none, gaussian, subsample_with_replacement, subsample_without_replacement };

struct ErrorModel {
  ErrorKind kind = ErrorKind::none;
  double sigma = 0.0;  // gaussian only
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (kind == ErrorKind::gaussian && !(sigma > 0.0)) {
      throw std::invalid_argument("gaussian error model needs sigma > 0");
    }
  }

  static ErrorModel none() { return {}; }

  static ErrorModel gaussian(double sigma, std::uint64_t seed) {
    ErrorModel m{ErrorKind::gaussian, sigma, seed};
    m.validate();
    return m;
  }

  static ErrorModel subsample(bool with_replacement, std::uint64_t seed) {
    return ErrorModel{with_replacement ? ErrorKind::subsample_with_replacement
                                       : ErrorKind::subsample_without_replacement,
                      0.0, seed};
  }
};

enum class ScheduleMode { iid, without_replacement };

// Geometric batch growth: the iid form keeps 1/m_k <= lambda*beta^k, the
// finite-population form keeps (1/m_k)(1 - (m_k-1)/M) <= lambda*beta^k.
struct SampleSchedule {
  double lambda = 1.0;
  double beta = 0.5;
  ScheduleMode mode = ScheduleMode::iid;
  int cap_M = 0;  // without_replacement only

  void validate() const {
    if (!(lambda > 0.0)) throw std::invalid_argument("schedule lambda must be positive");
    if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("schedule beta must be in (0,1)");
    if (mode == ScheduleMode::without_replacement && cap_M < 1) {
      throw std::invalid_argument("without_replacement schedule needs cap M >= 1");
    }
  }
};

inline std::int64_t sample_size(const SampleSchedule& schedule, int k) {
  schedule.validate();
  if (k < 0) throw std::invalid_argument("iteration index must be nonnegative");
  const double target = schedule.lambda * std::pow(schedule.beta, k);
  if (schedule.mode == ScheduleMode::iid) {
    constexpr double kMax = 9.0e18;
    if (!(target > 1.0 / kMax)) return static_cast<std::int64_t>(kMax);
    double m = std::ceil(1.0 / target);
    if (m < 1.0) m = 1.0;
    if (m > kMax) return static_cast<std::int64_t>(kMax);
    auto mi = static_cast<std::int64_t>(m);
    while (1.0 / static_cast<double>(mi) > target) ++mi;  // round-off guard on the ceil
    return mi;
  }
  const int M = schedule.cap_M;
  auto lhs = [&](int m) { return (1.0 / m) * (1.0 - static_cast<double>(m - 1) / M); };
  if (lhs(M) > target) return M;  // infeasible below M: clamp, error becomes exactly 0
  // lhs is strictly decreasing in m; find the smallest feasible m.
  int lo = 1, hi = M;
  while (lo < hi) {
    const int mid = lo + (hi - lo) / 2;
    if (lhs(mid) <= target) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

struct SampledGradient {
  VectorXd estimate;
  VectorXd error;  // estimate - full gradient
};

// Stochastic gradient estimate plus its exact error against the full gradient.
// Gaussian ignores m; subsampling averages m member gradients.
inline SampledGradient sampled_gradient(const ObjectiveSpec& spec, const FiniteSumData* data,
                                        const VectorXd& x, int m, const ErrorModel& model,
                                        SubStream& stream) {
  model.validate();
  SampledGradient out;
  const VectorXd grad = full_gradient(spec, data, x);
  switch (model.kind) {
    case ErrorKind::none:
      out.estimate = grad;
      out.error = VectorXd::Zero(grad.size());
      return out;
    case ErrorKind::gaussian: {
      VectorXd z(grad.size());
      for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = model.sigma * stream.normal();
      out.estimate = grad + z;
      out.error = std::move(z);
      return out;
    }
    case ErrorKind::subsample_with_replacement:
    case ErrorKind::subsample_without_replacement:
      break;
  }
  if (data == nullptr) throw std::invalid_argument("subsampling needs finite-sum data");
  const int M = data->count();
  if (m < 1) throw std::invalid_argument("sample size must be >= 1");
  const bool without = model.kind == ErrorKind::subsample_without_replacement;
  if (without && m > M) throw std::invalid_argument("without replacement needs m <= M");

  // Accumulate data-part member gradients in a fixed index order, then scale;
  // with m = M this reproduces full_gradient bit for bit.
  VectorXd acc = VectorXd::Zero(spec.dimension);
  const VectorXd t = data->features * x;
  auto add_member = [&](int i) {
    const double w = -data->labels[i] / (1.0 + std::exp(data->labels[i] * t[i]));
    acc.noalias() += w * data->features.row(i).transpose();
  };
  if (without) {
    for (int i : sample_subset(M, m, stream)) add_member(i);
  } else {
    for (int j = 0; j < m; ++j) {
      add_member(static_cast<int>(stream.uniform_below(static_cast<std::uint64_t>(M))));
    }
  }
  out.estimate = acc / m;
  if (spec.ridge_mu != 0.0) out.estimate += spec.ridge_mu * x;
  out.error = out.estimate - grad;
  return out;
}

// S(x) = (1/(M-1)) sum_i ||grad f(x) - grad f_i(x)||^2.
inline double population_variance(const ObjectiveSpec& spec, const FiniteSumData& data,
                                  const VectorXd& x) {
  const int M = data.count();
  if (M < 2) throw std::invalid_argument("population variance needs M >= 2");
  const VectorXd grad = full_gradient(spec, &data, x);
  double acc = 0.0;
  for (int i = 0; i < M; ++i) {
    acc += (grad - member_gradient(spec, data, i, x)).squaredNorm();
  }
  return acc / (M - 1);
}

// Expected ||e||^2 for a uniform m-subset drawn without replacement.
inline double error_variance_without_replacement(double S_at_x, int m, int M) {
  if (m < 1 || m > M) throw std::invalid_argument("need 1 <= m <= M");
  if (S_at_x < 0.0) throw std::invalid_argument("population variance must be nonnegative");
  return (1.0 - static_cast<double>(m) / M) * S_at_x / m;
}

// Per-coordinate diameter of the member gradients at x.
inline VectorXd population_diameter(const ObjectiveSpec& spec, const FiniteSumData& data,
                                    const VectorXd& x) {
  const int M = data.count();
  VectorXd lo = member_gradient(spec, data, 0, x);
  VectorXd hi = lo;
  for (int i = 1; i < M; ++i) {
    const VectorXd g = member_gradient(spec, data, i, x);
    lo = lo.cwiseMin(g);
    hi = hi.cwiseMax(g);
  }
  return hi - lo;
}

enum class ConcentrationKind { hoeffding, serfling };

// Sub-Gaussian scale eta_m for sample-mean deviations of a population with
// per-element diameter d; the Serfling form carries the finite-population factor.
inline double concentration_eta(double d, int m, std::optional<int> M, ConcentrationKind kind) {
  if (d < 0.0) throw std::invalid_argument("diameter must be nonnegative");
  if (m < 1) throw std::invalid_argument("sample size must be >= 1");
  const double base = d * d / (2.0 * m);
  if (kind == ConcentrationKind::hoeffding) return base;
  if (!M.has_value()) throw std::invalid_argument("serfling needs the population size M");
  if (m > *M) throw std::invalid_argument("serfling needs m <= M");
  return base * (1.0 - static_cast<double>(m - 1) / *M);
}

}  // namespace proxtail
