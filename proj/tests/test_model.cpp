#include <catch2/catch_amalgamated.hpp>

#include <Eigen/SVD>

#include <cmath>
#include <sstream>

#include "proxtail/model.hpp"

using Catch::Approx;
using namespace proxtail;

namespace {

ObjectiveSpec unit_quadratic(int n) {
  return ObjectiveSpec::quadratic(VectorXd::Ones(n), VectorXd::Zero(n), 1.0, 1.0);
}

}  // namespace

TEST_CASE("composite value") {
  SECTION("logistic at zero is log 2") {
    const FiniteSumData data = generate_logistic_dataset(12, 3, 4);
    const ObjectiveSpec spec = ObjectiveSpec::logistic(3, 1.0, 1.0, 0.0);
    REQUIRE(composite_value(spec, &data, VectorXd::Zero(3)) == Approx(std::log(2.0)).epsilon(1e-14));
  }
  SECTION("unit quadratic at (1,1)") {
    VectorXd x(2);
    x << 1.0, 1.0;
    REQUIRE(composite_value(unit_quadratic(2), nullptr, x) == Approx(1.0).epsilon(1e-15));
  }
  SECTION("matches per-term summation oracle") {
    const FiniteSumData data = generate_logistic_dataset(3, 4, 11);
    const ObjectiveSpec spec = ObjectiveSpec::logistic(4, 1.0, 1.0, 0.0);
    SubStream rng(5);
    VectorXd x(4);
    for (int i = 0; i < 4; ++i) x[i] = rng.normal();
    double oracle = 0.0;
    for (int i = 0; i < 3; ++i) {
      oracle += std::log(1.0 + std::exp(-data.labels[i] * data.features.row(i).dot(x)));
    }
    oracle /= 3.0;
    REQUIRE(composite_value(spec, &data, x) == Approx(oracle).epsilon(1e-12));
  }
  SECTION("box indicator is infinite outside") {
    VectorXd lo = VectorXd::Zero(2), hi = VectorXd::Ones(2);
    const ObjectiveSpec spec = ObjectiveSpec::quadratic(VectorXd::Ones(2), VectorXd::Zero(2), 1.0,
                                                        1.0, 0.0, Nonsmooth::box(lo, hi));
    VectorXd x(2);
    x << 0.5, 1.5;
    REQUIRE(std::isinf(composite_value(spec, nullptr, x)));
  }
  SECTION("dimension mismatch rejected") {
    REQUIRE_THROWS_AS(composite_value(unit_quadratic(2), nullptr, VectorXd::Zero(3)),
                      std::invalid_argument);
  }
}

TEST_CASE("full gradient") {
  SECTION("unit quadratic") {
    VectorXd x(2);
    x << 2.0, -3.0;
    REQUIRE((full_gradient(unit_quadratic(2), nullptr, x) - x).norm() == 0.0);
  }
  SECTION("logistic at zero uses sigmoid(0) = 1/2") {
    const FiniteSumData data = generate_logistic_dataset(7, 3, 2);
    const ObjectiveSpec spec = ObjectiveSpec::logistic(3, 1.0, 1.0, 0.0);
    VectorXd expected = VectorXd::Zero(3);
    for (int i = 0; i < 7; ++i) {
      expected -= 0.5 * data.labels[i] * data.features.row(i).transpose();
    }
    expected /= 7.0;
    REQUIRE((full_gradient(spec, &data, VectorXd::Zero(3)) - expected).norm() < 1e-15);
  }
  SECTION("matches central finite differences") {
    const FiniteSumData data = generate_logistic_dataset(9, 4, 3);
    const ObjectiveSpec spec = ObjectiveSpec::logistic(4, 1.0, 1.0, 0.0);
    SubStream rng(17);
    VectorXd x(4);
    for (int i = 0; i < 4; ++i) x[i] = rng.normal();
    const VectorXd grad = full_gradient(spec, &data, x);
    const double h = 1e-6;
    for (int j = 0; j < 4; ++j) {
      VectorXd e = VectorXd::Zero(4);
      e[j] = h;
      const double fd = (composite_value(spec, &data, x + e) - composite_value(spec, &data, x - e)) /
                        (2.0 * h);
      REQUIRE(std::abs(fd - grad[j]) < 1e-5);
    }
  }
  SECTION("ridge adds mu x") {
    const ObjectiveSpec plain = unit_quadratic(2);
    ObjectiveSpec ridged =
        ObjectiveSpec::quadratic(VectorXd::Ones(2), VectorXd::Zero(2), 1.5, 3.0, 0.5);
    VectorXd x(2);
    x << 1.0, -2.0;
    const VectorXd diff = full_gradient(ridged, nullptr, x) - full_gradient(plain, nullptr, x);
    REQUIRE((diff - 0.5 * x).norm() < 1e-15);
  }
}

TEST_CASE("member gradients average to the full gradient") {
  const FiniteSumData data = generate_logistic_dataset(11, 3, 8);
  const ObjectiveSpec spec = ObjectiveSpec::logistic(3, 1.2, 12.0, 0.1);
  SubStream rng(3);
  VectorXd x(3);
  for (int i = 0; i < 3; ++i) x[i] = rng.normal();
  VectorXd mean = VectorXd::Zero(3);
  for (int i = 0; i < 11; ++i) mean += member_gradient(spec, data, i, x);
  mean /= 11.0;
  REQUIRE((mean - full_gradient(spec, &data, x)).norm() < 1e-14);
}

TEST_CASE("prox") {
  SECTION("zero is the identity") {
    VectorXd z(2);
    z << 5.0, -2.0;
    REQUIRE((prox(Nonsmooth::none(), 0.7, z) - z).norm() == 0.0);
  }
  SECTION("l1 soft-thresholds") {
    VectorXd z(2);
    z << 3.0, -0.5;
    const VectorXd y = prox(Nonsmooth::l1(2.0), 0.5, z);  // alpha * w = 1
    REQUIRE(y[0] == Approx(2.0));
    REQUIRE(y[1] == 0.0);
  }
  SECTION("box clips") {
    VectorXd z(2);
    z << 1.7, -0.3;
    const VectorXd y = prox(Nonsmooth::box(VectorXd::Zero(2), VectorXd::Ones(2)), 1.0, z);
    REQUIRE(y[0] == 1.0);
    REQUIRE(y[1] == 0.0);
  }
  SECTION("box ties are allowed") {
    VectorXd point = VectorXd::Constant(2, 0.25);
    const VectorXd y = prox(Nonsmooth::box(point, point), 1.0, VectorXd::Ones(2));
    REQUIRE((y - point).norm() == 0.0);
  }
  SECTION("alpha must be positive") {
    REQUIRE_THROWS_AS(prox(Nonsmooth::none(), 0.0, VectorXd::Zero(1)), std::invalid_argument);
  }
  SECTION("prox minimizes its objective against nearby points") {
    SubStream rng(29);
    const Nonsmooth g = Nonsmooth::l1(0.8);
    for (int t = 0; t < 50; ++t) {
      VectorXd z(3);
      for (int i = 0; i < 3; ++i) z[i] = 3.0 * rng.normal();
      const double alpha = 0.2 + rng.uniform01();
      const VectorXd y = prox(g, alpha, z);
      const double fy = alpha * nonsmooth_value(g, y) + 0.5 * (z - y).squaredNorm();
      for (int s = 0; s < 8; ++s) {
        VectorXd w = y;
        for (int i = 0; i < 3; ++i) w[i] += 0.1 * rng.normal();
        const double fw = alpha * nonsmooth_value(g, w) + 0.5 * (z - w).squaredNorm();
        REQUIRE(fy <= fw + 1e-12);
      }
    }
  }
}

TEST_CASE("lipschitz estimate") {
  SECTION("diagonal quadratic returns the top eigenvalue") {
    VectorXd diag(2);
    diag << 1.0, 4.0;
    const ObjectiveSpec spec =
        ObjectiveSpec::quadratic(diag, VectorXd::Zero(2), 4.0, 4.0);
    REQUIRE(estimate_lipschitz(spec, nullptr) == Approx(4.0).epsilon(1e-7));
  }
  SECTION("identity features give 1/(4M)") {
    FiniteSumData data;
    data.features = MatrixXd::Identity(5, 5);
    data.labels = VectorXd::Ones(5);
    const ObjectiveSpec spec = ObjectiveSpec::logistic(5, 1.0, 1.0, 0.0);
    REQUIRE(estimate_lipschitz(spec, &data) == Approx(1.0 / 20.0).epsilon(1e-7));
  }
  SECTION("matches a dense SVD oracle") {
    const FiniteSumData data = generate_logistic_dataset(20, 5, 77);
    const ObjectiveSpec spec = ObjectiveSpec::logistic(5, 1.0, 1.0, 0.0);
    Eigen::JacobiSVD<MatrixXd> svd(data.features);
    const double smax = svd.singularValues()[0];
    const double oracle = smax * smax / (4.0 * 20.0);
    REQUIRE(estimate_lipschitz(spec, &data) == Approx(oracle).epsilon(1e-6));
  }
}

TEST_CASE("gradient is L-Lipschitz at the estimated constant") {
  const FiniteSumData data = generate_logistic_dataset(25, 4, 13);
  ObjectiveSpec spec = ObjectiveSpec::logistic(4, 1.0, 1.0, 0.0);
  spec.lipschitz = estimate_lipschitz(spec, &data);
  SubStream rng(31);
  for (int t = 0; t < 60; ++t) {
    VectorXd x(4), y(4);
    for (int i = 0; i < 4; ++i) {
      x[i] = 2.0 * rng.normal();
      y[i] = 2.0 * rng.normal();
    }
    const double lhs = (full_gradient(spec, &data, y) - full_gradient(spec, &data, x)).norm();
    REQUIRE(lhs <= spec.lipschitz * (y - x).norm() + 1e-12);
  }
}

TEST_CASE("dataset generation") {
  SECTION("deterministic in the seed") {
    const FiniteSumData a = generate_logistic_dataset(100, 10, 7);
    const FiniteSumData b = generate_logistic_dataset(100, 10, 7);
    REQUIRE(a.features == b.features);
    REQUIRE(a.labels == b.labels);
    const FiniteSumData c = generate_logistic_dataset(100, 10, 8);
    REQUIRE(a.features != c.features);
  }
  SECTION("labels are plus or minus one") {
    const FiniteSumData d = generate_logistic_dataset(64, 3, 21);
    for (int i = 0; i < 64; ++i) {
      REQUIRE((d.labels[i] == 1.0 || d.labels[i] == -1.0));
    }
  }
  SECTION("feature mean passes a CLT band") {
    const int M = 100000;
    const FiniteSumData d = generate_logistic_dataset(M, 1, 99);
    REQUIRE(std::abs(d.features.col(0).mean()) < 0.02);  // 3 sigma is ~0.0095
  }
}

TEST_CASE("dataset CSV round-trips bit-exactly") {
  const FiniteSumData d = generate_logistic_dataset(17, 4, 55);
  std::stringstream buf;
  write_dataset_csv(buf, d);
  const std::string first = buf.str();
  REQUIRE(first.rfind("b,a_1,a_2,a_3,a_4\n", 0) == 0);
  REQUIRE(std::count(first.begin(), first.end(), '\n') == 18);  // header + M rows
  std::stringstream in(first);
  const FiniteSumData back = read_dataset_csv(in);
  REQUIRE(back.features == d.features);
  REQUIRE(back.labels == d.labels);
  std::stringstream again;
  write_dataset_csv(again, back);
  REQUIRE(again.str() == first);
}

TEST_CASE("objective spec validation") {
  REQUIRE_THROWS_AS(ObjectiveSpec::logistic(3, 1.0, 0.5, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(ObjectiveSpec::logistic(3, -1.0, 1.0, 0.0), std::invalid_argument);
  // with ridge and g = 0, tau is pinned to L/mu
  REQUIRE_THROWS_AS(ObjectiveSpec::logistic(3, 1.0, 5.0, 0.1), std::invalid_argument);
  REQUIRE_NOTHROW(ObjectiveSpec::logistic(3, 1.0, 10.0, 0.1));
}
