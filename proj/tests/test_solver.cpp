#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "proxtail/solver.hpp"

using Catch::Approx;
using namespace proxtail;

namespace {

ObjectiveSpec scalar_quadratic(double q = 1.0, double center = 0.0, double L = 1.0,
                               double tau = 1.0, Nonsmooth g = Nonsmooth::none()) {
  return ObjectiveSpec::quadratic(VectorXd::Constant(1, q), VectorXd::Constant(1, center), L, tau,
                                  0.0, std::move(g));
}

}  // namespace

TEST_CASE("rate constants") {
  SECTION("tau = 1") {
    const RateConstants rc = rate_constants(1.0, 1.0);
    REQUIRE(rc.rho == Approx(40.0 / 41.0).epsilon(1e-15));
    REQUIRE(rc.rho == Approx(0.9756098).epsilon(1e-6));
    REQUIRE(rc.theta == Approx(41.0 / 40.0).epsilon(1e-15));
  }
  SECTION("general values") {
    const RateConstants rc = rate_constants(3.0, 2.0);
    REQUIRE(rc.rho == Approx(160.0 / 161.0).epsilon(1e-15));
    REQUIRE(rc.theta == Approx(3.0 * 161.0 / 160.0).epsilon(1e-15));
    REQUIRE(rc.rho > 0.0);
    REQUIRE(rc.rho < 1.0);
    REQUIRE(rc.theta > rc.lipschitz);
  }
  SECTION("scaling the objective leaves rho fixed and scales theta") {
    const RateConstants base = rate_constants(1.3, 2.5);
    const RateConstants scaled = rate_constants(7.0 * 1.3, 2.5);
    REQUIRE(scaled.rho == base.rho);
    REQUIRE(scaled.theta == Approx(7.0 * base.theta).epsilon(1e-15));
  }
  SECTION("tau below one rejected") {
    REQUIRE_THROWS_AS(rate_constants(1.0, 0.99), std::invalid_argument);
    REQUIRE_THROWS_AS(rate_constants(0.0, 1.0), std::invalid_argument);
  }
  SECTION("direct rho parameterization keeps theta = L / rho") {
    const RateConstants rc = rate_constants_from_rho(0.9, 2.0);
    REQUIRE(rc.rho == 0.9);
    REQUIRE(rc.theta == Approx(2.0 / 0.9).epsilon(1e-15));
    const RateConstants formula = rate_constants(1.0, 1.0);
    REQUIRE(formula.theta == Approx(formula.lipschitz / formula.rho).epsilon(1e-15));
  }
}

TEST_CASE("optimal value oracle") {
  SECTION("scalar quadratic") {
    const ObjectiveSpec spec = scalar_quadratic();
    const OptimalValue opt = optimal_value_oracle(spec, nullptr, VectorXd::Ones(1));
    REQUIRE(opt.h_star == Approx(0.0).margin(1e-20));
    REQUIRE(opt.x_star[0] == Approx(0.0).margin(1e-12));
  }
  SECTION("soft-threshold fixed point") {
    // f = (x-3)^2/2, g = |x|: minimizer 2, value 0.5 + 2.
    const ObjectiveSpec spec = scalar_quadratic(1.0, 3.0, 1.0, 1.0, Nonsmooth::l1(1.0));
    const OptimalValue opt = optimal_value_oracle(spec, nullptr, VectorXd::Zero(1));
    REQUIRE(opt.x_star[0] == Approx(2.0).margin(1e-10));
    REQUIRE(opt.h_star == Approx(2.5).margin(1e-10));
  }
  SECTION("two starts agree on a ridge logistic problem") {
    const FiniteSumData data = generate_logistic_dataset(20, 5, 31);
    ObjectiveSpec probe = ObjectiveSpec::logistic(5, 1.0, 1.0, 0.0);
    const double L_data = estimate_lipschitz(probe, &data);
    const double mu = 0.01 * L_data;
    const ObjectiveSpec spec = ObjectiveSpec::logistic(5, L_data + mu, (L_data + mu) / mu, mu);
    const OptimalValue a = optimal_value_oracle(spec, &data, VectorXd::Zero(5));
    const OptimalValue b = optimal_value_oracle(spec, &data, VectorXd::Constant(5, 2.0));
    REQUIRE(std::abs(a.h_star - b.h_star) < 1e-10);
  }
  SECTION("iteration cap raises a numeric error") {
    // flat curvature with a loose step contracts by 0.99 per iteration
    const ObjectiveSpec slow = scalar_quadratic(0.01, 0.0, 1.0, 100.0);
    REQUIRE_THROWS_AS(optimal_value_oracle(slow, nullptr, VectorXd::Ones(1), 1e-13, 3),
                      numeric_error);
  }
}

TEST_CASE("solver run") {
  const ObjectiveSpec spec = scalar_quadratic();
  const RateConstants rc = rate_constants(1.0, 1.0);

  SECTION("noiseless unit quadratic converges in one step") {
    const Trajectory traj = run(spec, nullptr, VectorXd::Ones(1), ErrorModel::none(), nullptr, 1,
                                rc, 0.0);
    REQUIRE(traj.records.size() == 2);
    REQUIRE(traj.records[1].pi == Approx(0.0).margin(1e-18));
    REQUIRE(traj.records[0].pi == Approx(0.5));
    REQUIRE(traj.records[0].err_sq == 0.0);
  }
  SECTION("noiseless runs satisfy the linear rate") {
    VectorXd diag(3), center(3);
    diag << 0.5, 1.0, 2.0;
    center << 1.0, -1.0, 0.5;
    const ObjectiveSpec q = ObjectiveSpec::quadratic(diag, center, 2.0, 4.0);
    const RateConstants c = rate_constants(2.0, 4.0);
    const OptimalValue opt = optimal_value_oracle(q, nullptr, VectorXd::Zero(3));
    const Trajectory traj = run(q, nullptr, VectorXd::Zero(3), ErrorModel::none(), nullptr, 40, c,
                                opt.h_star);
    double rho_k = 1.0;
    for (const auto& rec : traj.records) {
      REQUIRE(rec.pi <= rho_k * traj.pi0() + 1e-9);
      rho_k *= c.rho;
    }
  }
  SECTION("hand-checked single noisy step") {
    std::vector<VectorXd> errs{VectorXd::Constant(1, 0.1)};
    RunOptions opts;
    opts.store_x = true;
    const Trajectory traj =
        run_scripted(spec, nullptr, VectorXd::Ones(1), errs, 1, rc, 0.0, opts);
    REQUIRE(traj.records[1].x[0] == Approx(-0.1).epsilon(1e-15));
    REQUIRE(traj.records[1].pi == Approx(0.005).epsilon(1e-12));
    REQUIRE(traj.records[0].err_sq == Approx(0.01).epsilon(1e-13));
    // pi_1 below rho pi_0 + (1/theta) ||e_0||^2 = 0.48780 + 0.00976
    REQUIRE(traj.records[1].pi <= 0.48780 + 0.00976);
    const std::vector<double> slack = check_pathwise_bound(traj);
    REQUIRE(slack[0] == 0.0);
    REQUIRE(slack[1] == Approx(0.4926).margin(5e-5));
  }
  SECTION("numeric failures name the iteration") {
    // a huge scripted error overflows the quadratic within a few steps
    std::vector<VectorXd> errs{VectorXd::Constant(1, 1e200)};
    try {
      run_scripted(spec, nullptr, VectorXd::Ones(1), errs, 3, rc, 0.0);
      FAIL("expected numeric_error");
    } catch (const numeric_error& e) {
      REQUIRE(e.iteration() >= 1);
    }
  }
  SECTION("with-replacement batches may exceed the population size") {
    const FiniteSumData data = generate_logistic_dataset(3, 2, 12);
    ObjectiveSpec probe = ObjectiveSpec::logistic(2, 1.0, 1.0, 0.0);
    const double L_data = estimate_lipschitz(probe, &data);
    const double mu = 0.05 * L_data;
    const ObjectiveSpec lspec = ObjectiveSpec::logistic(2, L_data + mu, (L_data + mu) / mu, mu);
    const RateConstants lrc = rate_constants(lspec.lipschitz, lspec.error_bound_tau);
    const SampleSchedule sched{1.0, 0.5, ScheduleMode::iid, 0};
    const OptimalValue opt = optimal_value_oracle(lspec, &data, VectorXd::Zero(2));
    const Trajectory traj = run(lspec, &data, VectorXd::Zero(2), ErrorModel::subsample(true, 8),
                                &sched, 4, lrc, opt.h_star);
    REQUIRE(traj.records[3].m == 8);  // 1/(0.5^3) redraws from a population of 3
  }
  SECTION("trajectories are bit-reproducible for a fixed seed") {
    const ErrorModel noise = ErrorModel::gaussian(0.3, 999);
    const Trajectory a = run(spec, nullptr, VectorXd::Ones(1), noise, nullptr, 10, rc, 0.0);
    const Trajectory b = run(spec, nullptr, VectorXd::Ones(1), noise, nullptr, 10, rc, 0.0);
    for (std::size_t k = 0; k < a.records.size(); ++k) {
      REQUIRE(a.records[k].pi == b.records[k].pi);
      REQUIRE(a.records[k].err_sq == b.records[k].err_sq);
    }
  }
}

TEST_CASE("pathwise bound monitor") {
  const ObjectiveSpec spec = scalar_quadratic();
  const RateConstants rc = rate_constants(1.0, 1.0);
  SECTION("noiseless slack is nonnegative") {
    const Trajectory traj = run(spec, nullptr, VectorXd::Ones(1), ErrorModel::none(), nullptr, 20,
                                rc, 0.0);
    for (double s : check_pathwise_bound(traj)) REQUIRE(s >= 0.0);
  }
  SECTION("holds on noisy runs") {
    const Trajectory traj = run(spec, nullptr, VectorXd::Ones(1),
                                ErrorModel::gaussian(0.5, 4), nullptr, 50, rc, 0.0);
    const double tol = 1e-9 * std::max(1.0, traj.pi0());
    for (double s : check_pathwise_bound(traj)) REQUIRE(s >= -tol);
  }
}

TEST_CASE("sufficient decrease monitor") {
  const ObjectiveSpec spec = scalar_quadratic();
  const RateConstants rc = rate_constants(1.0, 1.0);
  SECTION("hand case") {
    std::vector<VectorXd> errs{VectorXd::Constant(1, 0.1)};
    const Trajectory traj = run_scripted(spec, nullptr, VectorXd::Ones(1), errs, 1, rc, 0.0);
    // 0.005 <= (40/41) 0.5 + (40/41) 0.01
    const std::vector<bool> ok = check_sufficient_decrease(traj);
    REQUIRE(ok.size() == 1);
    REQUIRE(ok[0]);
  }
  SECTION("noisy gaussian runs") {
    const Trajectory traj = run(spec, nullptr, VectorXd::Constant(1, 3.0),
                                ErrorModel::gaussian(0.4, 11), nullptr, 60, rc, 0.0);
    for (bool ok : check_sufficient_decrease(traj)) REQUIRE(ok);
  }
}

TEST_CASE("solution distance bounds") {
  const RateConstants rc = rate_constants(1.0, 1.0);
  SECTION("noiseless unit quadratic attains equality in the first bound") {
    const ObjectiveSpec spec = scalar_quadratic();
    RunOptions opts;
    opts.store_x = true;
    const Trajectory traj = run(spec, nullptr, VectorXd::Ones(1), ErrorModel::none(), nullptr, 1,
                                rc, 0.0, opts);
    const auto reports = check_solution_distance_bounds(traj, VectorXd::Zero(1));
    REQUIRE(reports.size() == 1);
    REQUIRE(reports[0].a == Approx(0.0).margin(1e-15));  // ||x0|| = ||x0 - x1||
    REQUIRE(reports[0].all());
  }
  SECTION("hand-checked noisy step") {
    const ObjectiveSpec spec = scalar_quadratic();
    std::vector<VectorXd> errs{VectorXd::Constant(1, 0.1)};
    RunOptions opts;
    opts.store_x = true;
    const Trajectory traj =
        run_scripted(spec, nullptr, VectorXd::Ones(1), errs, 1, rc, 0.0, opts);
    const auto reports = check_solution_distance_bounds(traj, VectorXd::Zero(1));
    // tau ||x0 - x1|| + (tau/L) |e| = 1.1 + 0.1 = 1.2 >= ||x0 - x*|| = 1
    REQUIRE(reports[0].a == Approx(0.2).epsilon(1e-12));
  }
  SECTION("published squared constants fail where the corrected ones hold") {
    // x0 = 1, e = -0.5 gives step length s = 0.5 equal to u = |e|/L, the
    // worst case for the cross term: dist^2 = 1 but 2 s^2 + 1.25 u^2 = 0.8125.
    const ObjectiveSpec spec = scalar_quadratic();
    std::vector<VectorXd> errs{VectorXd::Constant(1, -0.5)};
    RunOptions opts;
    opts.store_x = true;
    const Trajectory traj =
        run_scripted(spec, nullptr, VectorXd::Ones(1), errs, 1, rc, 0.0, opts);
    const auto reports = check_solution_distance_bounds(traj, VectorXd::Zero(1));
    REQUIRE(traj.records[1].x[0] == Approx(0.5));
    REQUIRE(reports[0].b == Approx(-0.1875).epsilon(1e-12));  // published pair undercuts
    REQUIRE(reports[0].b_corrected >= -1e-12);                // (2, 2) pair is tight here
    REQUIRE(reports[0].d_corrected >= -1e-12);
  }
  SECTION("corrected squared bounds hold under gaussian noise") {
    VectorXd diag(2), center(2);
    diag << 0.4, 1.0;
    center << 2.0, -1.0;
    const ObjectiveSpec spec = ObjectiveSpec::quadratic(diag, center, 1.0, 2.5);
    const RateConstants c = rate_constants(1.0, 2.5);
    const OptimalValue opt = optimal_value_oracle(spec, nullptr, VectorXd::Zero(2));
    RunOptions opts;
    opts.store_x = true;
    const Trajectory traj = run(spec, nullptr, VectorXd::Zero(2),
                                ErrorModel::gaussian(0.3, 21), nullptr, 40, c, opt.h_star, opts);
    for (const auto& r : check_solution_distance_bounds(traj, opt.x_star)) {
      REQUIRE(r.a >= -1e-9);
      REQUIRE(r.c >= -1e-9);
      REQUIRE(r.b_corrected >= -1e-9);
      REQUIRE(r.d_corrected >= -1e-9);
    }
  }
}

TEST_CASE("published squared distance bound has a counterexample") {
  // 1-D, tau = 1, x* = 0, equality in the linear bound with s = u = 1/2:
  // dist^2 = (s+u)^2 = 1 but 2 s^2 + 1.25 u^2 = 0.8125.
  const double s = 0.5, u = 0.5, dist = 1.0;
  REQUIRE(2.0 * s * s + 1.25 * u * u < dist * dist);
  REQUIRE(2.0 * (s * s + u * u) >= dist * dist);
}

TEST_CASE("supermartingale condition") {
  const ObjectiveSpec spec = scalar_quadratic();
  const RateConstants rc = rate_constants(1.0, 1.0);
  RunOptions opts;
  opts.store_x = true;
  SECTION("zero error satisfies the condition everywhere") {
    const Trajectory traj = run(spec, nullptr, VectorXd::Constant(1, 2.0), ErrorModel::none(),
                                nullptr, 10, rc, 0.0, opts);
    std::vector<double> cond(10, 0.0);
    for (bool ok : supermartingale_condition(traj, VectorXd::Zero(1), cond)) REQUIRE(ok);
  }
  SECTION("large gaussian variance fails at k = 0") {
    const Trajectory traj = run(spec, nullptr, VectorXd::Ones(1),
                                ErrorModel::gaussian(2.0, 5), nullptr, 2, rc, 0.0, opts);
    // n sigma^2 = 4 > ||x0 - x*||^2 / (10 tau^2) = 0.1
    std::vector<double> cond(2, 4.0);
    const auto flags = supermartingale_condition(traj, VectorXd::Zero(1), cond);
    REQUIRE_FALSE(flags[0]);
  }
}

TEST_CASE("trajectory CSV format") {
  const ObjectiveSpec spec = scalar_quadratic();
  const RateConstants rc = rate_constants(1.0, 1.0);
  const Trajectory traj = run(spec, nullptr, VectorXd::Ones(1), ErrorModel::none(), nullptr, 2,
                              rc, 0.0);
  std::ostringstream out;
  write_trajectory_csv_header(out);
  write_trajectory_csv_rows(out, traj, 7);
  const std::string text = out.str();
  REQUIRE(text.rfind("run_id,k,m,pi,err_sq,bound_pathwise\n", 0) == 0);
  REQUIRE(text.find("\n7,0,0,0.5,0,0.5\n") != std::string::npos);
}
