#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "lowrank/errors.hpp"
#include "lowrank/linalg.hpp"
#include "lowrank/rng.hpp"
#include "oracles.hpp"

using namespace lowrank;

namespace {

Eigen::MatrixXd random_spd(int k, RngStream& rng) {
  Eigen::MatrixXd b(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) b(i, j) = rng.next_gaussian();
  return b * b.transpose() + 0.5 * Eigen::MatrixXd::Identity(k, k);
}

}  // namespace

TEST_SUITE("linalg") {

TEST_CASE("cholesky of a known matrix") {
  Eigen::MatrixXd a(2, 2);
  a << 4.0, 2.0, 2.0, 3.0;
  Eigen::MatrixXd l = cholesky_lower(a);
  CHECK(l(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(l(1, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(l(1, 1) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK(l(0, 1) == 0.0);
}

TEST_CASE("cholesky factors random SPD matrices") {
  RngStream rng(31);
  for (int t = 0; t < 120; ++t) {
    int k = 1 + static_cast<int>(rng.next_double() * 8);
    Eigen::MatrixXd a = random_spd(k, rng);
    Eigen::MatrixXd l = cholesky_lower(a);
    CHECK((l * l.transpose() - a).cwiseAbs().maxCoeff() <
          1e-10 * a.cwiseAbs().maxCoeff());
    for (int i = 0; i < k; ++i)
      for (int j = i + 1; j < k; ++j) CHECK(l(i, j) == 0.0);
  }
}

TEST_CASE("cholesky reports the failing minor") {
  Eigen::MatrixXd bad1(1, 1);
  bad1 << -1.0;
  CHECK_THROWS_AS(cholesky_lower(bad1), numerical_error);
  try {
    cholesky_lower(bad1);
  } catch (const numerical_error& e) {
    CHECK(e.detail() == 1);
  }

  Eigen::MatrixXd bad2(2, 2);
  bad2 << 1.0, 2.0, 2.0, 1.0;  // indefinite, fails at the second minor
  try {
    cholesky_lower(bad2);
    CHECK(false);
  } catch (const numerical_error& e) {
    CHECK(e.detail() == 2);
  }

  Eigen::MatrixXd bad3 = Eigen::MatrixXd::Identity(3, 3);
  bad3(2, 2) = -1.0;
  try {
    cholesky_lower(bad3);
    CHECK(false);
  } catch (const numerical_error& e) {
    CHECK(e.detail() == 3);
  }
}

TEST_CASE("cholesky solve and inverse agree with the explicit inverse") {
  RngStream rng(32);
  for (int t = 0; t < 120; ++t) {
    int k = 1 + static_cast<int>(rng.next_double() * 6);
    Eigen::MatrixXd a = random_spd(k, rng);
    Eigen::VectorXd b(k);
    for (int i = 0; i < k; ++i) b(i) = rng.next_gaussian();
    Eigen::MatrixXd l = cholesky_lower(a);

    Eigen::VectorXd x = cholesky_solve(l, b);
    CHECK((a * x - b).cwiseAbs().maxCoeff() < 1e-9 * b.cwiseAbs().maxCoeff());

    Eigen::MatrixXd inv = cholesky_inverse(l);
    CHECK((a * inv - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() <
          1e-9);
    CHECK((inv - inv.transpose()).cwiseAbs().maxCoeff() <
          1e-12 * inv.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("precision-form sampler: standard normal case") {
  RngStream rng(33);
  Eigen::MatrixXd prec = Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd lin = Eigen::VectorXd::Zero(3);
  const int n = 100000;
  Eigen::MatrixXd draws(n, 3);
  for (int i = 0; i < n; ++i)
    draws.row(i) = sample_mvn_from_precision(prec, lin, rng).transpose();
  for (int j = 0; j < 3; ++j) {
    std::vector<double> col(draws.col(j).data(), draws.col(j).data() + n);
    CHECK(std::abs(oracle::sample_mean(col)) < 0.02);
    CHECK(std::abs(oracle::sample_variance(col) - 1.0) < 0.05);
  }
}

TEST_CASE("precision-form sampler: scalar case with a shift") {
  RngStream rng(34);
  Eigen::MatrixXd prec(1, 1);
  prec << 4.0;
  Eigen::VectorXd lin(1);
  lin << 8.0;  // mean = 8/4 = 2, variance = 1/4
  const int n = 100000;
  std::vector<double> xs(n);
  for (int i = 0; i < n; ++i) xs[i] = sample_mvn_from_precision(prec, lin, rng)(0);
  CHECK(std::abs(oracle::sample_mean(xs) - 2.0) < 0.01);
  CHECK(std::abs(oracle::sample_variance(xs) - 0.25) < 0.01);
}

TEST_CASE("precision-form sampler: correlated 2x2 case") {
  RngStream rng(35);
  Eigen::MatrixXd prec(2, 2);
  prec << 2.0, 1.0, 1.0, 2.0;
  Eigen::VectorXd lin(2);
  lin << 1.0, 1.0;  // mean = prec^-1 lin = (1/3, 1/3)
  const int n = 100000;
  std::vector<double> x0(n), x1(n);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x = sample_mvn_from_precision(prec, lin, rng);
    x0[i] = x(0);
    x1[i] = x(1);
  }
  CHECK(std::abs(oracle::sample_mean(x0) - 1.0 / 3.0) < 0.01);
  CHECK(std::abs(oracle::sample_mean(x1) - 1.0 / 3.0) < 0.01);
}

TEST_CASE("diagonal precision gives uncorrelated coordinates") {
  RngStream rng(36);
  Eigen::MatrixXd prec = Eigen::VectorXd::LinSpaced(3, 1.0, 4.0).asDiagonal();
  Eigen::VectorXd lin = Eigen::VectorXd::Zero(3);
  const int n = 100000;
  Eigen::MatrixXd draws(n, 3);
  for (int i = 0; i < n; ++i)
    draws.row(i) = sample_mvn_from_precision(prec, lin, rng).transpose();
  Eigen::RowVectorXd mean = draws.colwise().mean();
  Eigen::MatrixXd centered = draws.rowwise() - mean;
  Eigen::MatrixXd cov = centered.transpose() * centered / (n - 1);
  CHECK(std::abs(cov(0, 1)) < 0.02);
  CHECK(std::abs(cov(0, 2)) < 0.02);
  CHECK(std::abs(cov(1, 2)) < 0.02);
}

TEST_CASE("sampler propagates factorization failure") {
  RngStream rng(37);
  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(sample_mvn_from_precision(bad, Eigen::VectorXd::Zero(2), rng),
                  numerical_error);
}

}  // TEST_SUITE
