#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "lowrank/errors.hpp"
#include "lowrank/model.hpp"
#include "lowrank/rng.hpp"
#include "oracles.hpp"

using namespace lowrank;

namespace {

FactorState random_state(int m1, int m2, int k, RngStream& rng) {
  FactorState s;
  s.row_factors = Eigen::MatrixXd(m1, k);
  s.col_factors = Eigen::MatrixXd(m2, k);
  for (int i = 0; i < m1; ++i)
    for (int h = 0; h < k; ++h) s.row_factors(i, h) = rng.next_gaussian();
  for (int j = 0; j < m2; ++j)
    for (int h = 0; h < k; ++h) s.col_factors(j, h) = rng.next_gaussian();
  s.column_scales = Eigen::VectorXd::Ones(k);
  return s;
}

std::vector<Observation> random_entries(int m1, int m2, int n, RngStream& rng) {
  std::vector<Observation> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    int i = std::min(m1 - 1, static_cast<int>(rng.next_double() * m1));
    int j = std::min(m2 - 1, static_cast<int>(rng.next_double() * m2));
    out.push_back({i, j, rng.next_gaussian()});
  }
  return out;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("observation set indexes rows and columns, duplicates kept") {
  std::vector<Observation> entries = {
      {0, 1, 5.0}, {1, 0, 3.0}, {0, 1, 2.0}, {2, 2, 7.0}};
  ObservationSet obs(3, 3, entries);
  CHECK(obs.rows() == 3);
  CHECK(obs.cols() == 3);
  CHECK(obs.size() == 4);

  auto r0 = obs.row_entries(0);
  REQUIRE(r0.size() == 2);
  CHECK(r0[0] == 0);
  CHECK(r0[1] == 2);
  CHECK(obs.row_entries(1).size() == 1);
  CHECK(obs.row_entries(1)[0] == 1);
  CHECK(obs.row_entries(2)[0] == 3);

  auto c1 = obs.col_entries(1);
  REQUIRE(c1.size() == 2);
  CHECK(c1[0] == 0);
  CHECK(c1[1] == 2);
  CHECK(obs.col_entries(0)[0] == 1);
  CHECK(obs.col_entries(2)[0] == 3);

  CHECK(obs.entry(2).value == 2.0);
}

TEST_CASE("observation set rejects bad input") {
  CHECK_THROWS_AS(ObservationSet(0, 3, {}), usage_error);
  CHECK_THROWS_AS(ObservationSet(3, -1, {}), usage_error);
  CHECK_THROWS_AS(ObservationSet(2, 2, {{2, 0, 1.0}}), usage_error);
  CHECK_THROWS_AS(ObservationSet(2, 2, {{0, -1, 1.0}}), usage_error);
  CHECK_THROWS_AS(ObservationSet(2, 2, {{0, 0, std::nan("")}}), usage_error);
  ObservationSet ok(2, 2, {});
  CHECK(ok.empty());
  CHECK(ok.row_entries(0).empty());
  CHECK_THROWS_AS(ok.row_entries(2), usage_error);
  CHECK_THROWS_AS(ok.col_entries(-1), usage_error);
}

TEST_CASE("observation index is a permutation of entry positions") {
  RngStream rng(41);
  for (int t = 0; t < 120; ++t) {
    int m1 = 1 + static_cast<int>(rng.next_double() * 10);
    int m2 = 1 + static_cast<int>(rng.next_double() * 10);
    int n = static_cast<int>(rng.next_double() * 40);
    ObservationSet obs(m1, m2, random_entries(m1, m2, n, rng));

    std::vector<int> seen_by_row, seen_by_col;
    for (int i = 0; i < m1; ++i) {
      auto span = obs.row_entries(i);
      for (std::size_t a = 0; a < span.size(); ++a) {
        CHECK(obs.entry(span[a]).row == i);
        if (a > 0) CHECK(span[a - 1] < span[a]);
        seen_by_row.push_back(span[a]);
      }
    }
    for (int j = 0; j < m2; ++j)
      for (auto k : obs.col_entries(j)) {
        CHECK(obs.entry(k).col == j);
        seen_by_col.push_back(k);
      }
    CHECK(seen_by_row.size() == static_cast<std::size_t>(n));
    CHECK(seen_by_col.size() == static_cast<std::size_t>(n));
    std::sort(seen_by_row.begin(), seen_by_row.end());
    CHECK(std::adjacent_find(seen_by_row.begin(), seen_by_row.end()) ==
          seen_by_row.end());
  }
}

TEST_CASE("transposed set swaps roles and keeps entry order") {
  RngStream rng(42);
  ObservationSet obs(4, 6, random_entries(4, 6, 25, rng));
  ObservationSet t = obs.transposed();
  CHECK(t.rows() == 6);
  CHECK(t.cols() == 4);
  REQUIRE(t.size() == obs.size());
  for (std::int64_t k = 0; k < obs.size(); ++k) {
    CHECK(t.entry(k).row == obs.entry(k).col);
    CHECK(t.entry(k).col == obs.entry(k).row);
    CHECK(t.entry(k).value == obs.entry(k).value);
  }
  for (int i = 0; i < 4; ++i) {
    auto a = obs.row_entries(i);
    auto b = t.col_entries(i);
    REQUIRE(a.size() == b.size());
    for (std::size_t q = 0; q < a.size(); ++q) CHECK(a[q] == b[q]);
  }
}

TEST_CASE("predict_entry") {
  FactorState zero;
  zero.row_factors = Eigen::MatrixXd::Zero(2, 3);
  zero.col_factors = Eigen::MatrixXd::Zero(2, 3);
  zero.column_scales = Eigen::VectorXd::Ones(3);
  CHECK(predict_entry(zero, 1, 1) == 0.0);

  FactorState s;
  s.row_factors = Eigen::MatrixXd::Constant(1, 1, 2.0);
  s.col_factors = Eigen::MatrixXd::Constant(1, 1, 3.0);
  s.column_scales = Eigen::VectorXd::Ones(1);
  CHECK(predict_entry(s, 0, 0) == 6.0);
  CHECK_THROWS_AS(predict_entry(s, 1, 0), usage_error);
  CHECK_THROWS_AS(predict_entry(s, 0, -1), usage_error);

  RngStream rng(43);
  FactorState r = random_state(3, 3, 2, rng);
  Eigen::MatrixXd theta =
      oracle::dense_matmul(r.row_factors, r.col_factors.transpose());
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(predict_entry(r, i, j) ==
            doctest::Approx(theta(i, j)).epsilon(1e-12));
}

TEST_CASE("rmse basics") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(4, 4);
  CHECK(rmse(a, a) == 0.0);

  Eigen::MatrixXd x(1, 1), y(1, 1);
  x << 3.0;
  y << 1.0;
  CHECK(rmse(x, y) == 2.0);

  CHECK(rmse(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Ones(2, 2)) == 1.0);
  CHECK_THROWS_AS(rmse(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(3, 2)),
                  usage_error);
}

TEST_CASE("rmse is invariant under transposing both arguments") {
  RngStream rng(44);
  for (int t = 0; t < 120; ++t) {
    int m1 = 1 + static_cast<int>(rng.next_double() * 8);
    int m2 = 1 + static_cast<int>(rng.next_double() * 8);
    Eigen::MatrixXd a(m1, m2), b(m1, m2);
    for (int i = 0; i < m1; ++i)
      for (int j = 0; j < m2; ++j) {
        a(i, j) = rng.next_gaussian();
        b(i, j) = rng.next_gaussian();
      }
    double d = rmse(a, b);
    CHECK(rmse(a.transpose(), b.transpose()) ==
          doctest::Approx(d).epsilon(1e-12));
  }
}

TEST_CASE("holdout rmse basics") {
  RngStream rng(45);
  FactorState s = random_state(4, 5, 2, rng);

  // test set that the state reproduces exactly
  std::vector<Observation> exact;
  for (int i = 0; i < 4; ++i) exact.push_back({i, i, predict_entry(s, i, i)});
  CHECK(holdout_rmse(s, ObservationSet(4, 5, exact)) == 0.0);

  std::vector<Observation> off = {{1, 2, predict_entry(s, 1, 2) + 0.5}};
  CHECK(holdout_rmse(s, ObservationSet(4, 5, off)) ==
        doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS_AS(holdout_rmse(s, ObservationSet(4, 5, {})), usage_error);
}

TEST_CASE("holdout rmse matches a direct loop") {
  RngStream rng(46);
  for (int t = 0; t < 120; ++t) {
    FactorState s = random_state(5, 6, 3, rng);
    auto entries = random_entries(5, 6, 10, rng);
    if (entries.empty()) continue;
    ObservationSet test(5, 6, entries);
    double direct = oracle::direct_holdout_rmse(s, entries);
    CHECK(holdout_rmse(s, test) == doctest::Approx(direct).epsilon(1e-12));

    Eigen::MatrixXd est = s.row_factors * s.col_factors.transpose();
    CHECK(holdout_rmse(est, test) == doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("holdout rmse over the full grid equals the matrix rmse") {
  RngStream rng(47);
  for (int t = 0; t < 100; ++t) {
    int m = 2 + static_cast<int>(rng.next_double() * 19);  // up to 20
    int k = 1 + static_cast<int>(rng.next_double() * 5);
    FactorState s = random_state(m, m, k, rng);
    Eigen::MatrixXd truth(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) truth(i, j) = rng.next_gaussian();
    std::vector<Observation> grid;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) grid.push_back({i, j, truth(i, j)});
    ObservationSet full(m, m, grid);
    Eigen::MatrixXd est = s.row_factors * s.col_factors.transpose();
    double dense = rmse(est, truth);
    CHECK(holdout_rmse(est, full) == doctest::Approx(dense).epsilon(1e-12));
    CHECK(holdout_rmse(s, full) == doctest::Approx(dense).epsilon(1e-10));
  }
}

TEST_CASE("holdout rmse honors clipping") {
  FactorState s;
  s.row_factors = Eigen::MatrixXd::Constant(1, 1, 2.0);
  s.col_factors = Eigen::MatrixXd::Constant(1, 1, 3.0);  // predicts 6
  s.column_scales = Eigen::VectorXd::Ones(1);
  ObservationSet test(1, 1, {{0, 0, 5.0}});
  CHECK(holdout_rmse(s, test) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(holdout_rmse(s, test, std::make_pair(1.0, 5.0)) == 0.0);
}

TEST_CASE("holdout rmse rejects an estimate smaller than the grid") {
  ObservationSet test(3, 3, {{2, 2, 1.0}});
  CHECK_THROWS_AS(holdout_rmse(Eigen::MatrixXd::Zero(2, 2), test), usage_error);
}

TEST_CASE("posterior summary lookup") {
  PosteriorSummary dense;
  dense.theta_mean = Eigen::MatrixXd::Constant(2, 2, 1.25);
  dense.retained_count = 1;
  CHECK(dense.dense());
  CHECK(dense.value_at(1, 0) == 1.25);
  CHECK_THROWS_AS(dense.value_at(2, 0), usage_error);

  PosteriorSummary sparse;
  sparse.cell_means = {{0, 0, 1.5}, {2, 3, -2.0}};
  sparse.retained_count = 1;
  CHECK_FALSE(sparse.dense());
  CHECK(sparse.value_at(2, 3) == -2.0);
  try {
    sparse.value_at(1, 1);
    CHECK(false);
  } catch (const usage_error& e) {
    CHECK(std::string(e.what()).find("tracked") != std::string::npos);
  }
}

TEST_CASE("sampler config") {
  SamplerConfig c;
  CHECK(c.rank == 5);
  CHECK(c.iterations == 1000);
  CHECK(c.burn_in == 100);
  CHECK(c.thinning == 10);
  c.validate();
  CHECK(c.retained_count() == 90);

  SamplerConfig tail;
  tail.iterations = 100;
  tail.burn_in = 99;
  tail.thinning = 1;
  CHECK(tail.retained_count() == 1);

  SamplerConfig lam;
  lam.noise_sd = 2.0;
  CHECK(lam.lambda_for(100) == doctest::Approx(12.5).epsilon(1e-15));
  lam.lambda = 3.25;
  CHECK(lam.lambda_for(100) == 3.25);

  SamplerConfig bad = c;
  bad.iterations = 0;
  CHECK_THROWS_AS(bad.validate(), usage_error);
  bad = c;
  bad.burn_in = 1000;
  CHECK_THROWS_AS(bad.validate(), usage_error);
  bad = c;
  bad.thinning = 0;
  CHECK_THROWS_AS(bad.validate(), usage_error);
  bad = c;
  bad.noise_sd = 0.0;
  CHECK_THROWS_AS(bad.validate(), usage_error);
  bad = c;
  bad.lambda = -1.0;
  CHECK_THROWS_AS(bad.validate(), usage_error);
}

TEST_CASE("prior validation and description") {
  validate(PriorSpec{FixedPrior{0.2}});
  validate(PriorSpec{InverseGammaPrior{1.0, 0.015}});
  validate(PriorSpec{GammaPrior{22.36}});
  validate(PriorSpec{DiscretePrior{0.05, 1.0, 0.05}});
  validate(PriorSpec{DiscretePrior{0.05, 0.05, 0.5}});  // degenerate allowed

  CHECK_THROWS_AS(validate(PriorSpec{FixedPrior{0.0}}), usage_error);
  CHECK_THROWS_AS(validate(PriorSpec{InverseGammaPrior{0.0, 1.0}}), usage_error);
  CHECK_THROWS_AS(validate(PriorSpec{InverseGammaPrior{1.0, 0.0}}), usage_error);
  CHECK_THROWS_AS(validate(PriorSpec{GammaPrior{0.0}}), usage_error);
  CHECK_THROWS_AS(validate(PriorSpec{DiscretePrior{1.0, 0.05, 0.5}}), usage_error);
  CHECK_THROWS_AS(validate(PriorSpec{DiscretePrior{0.05, 1.0, 0.0}}), usage_error);
  CHECK_THROWS_AS(validate(PriorSpec{DiscretePrior{0.05, 1.0, 1.0}}), usage_error);

  CHECK(prior_family(PriorSpec{FixedPrior{0.2}}) == "fixed");
  CHECK(prior_family(PriorSpec{InverseGammaPrior{1.0, 0.1}}) == "invgamma");
  CHECK(prior_family(PriorSpec{GammaPrior{1.0}}) == "gamma");
  CHECK(prior_family(PriorSpec{DiscretePrior{0.05, 1.0, 0.05}}) == "discrete");
  CHECK(describe(PriorSpec{FixedPrior{0.2}}) == "fixed(gamma0=0.2)");
  CHECK(prior_params(PriorSpec{InverseGammaPrior{1.0, 0.1}}) == "a=1;b=0.1");
}

TEST_CASE("factor state validation") {
  FactorState s;
  s.row_factors = Eigen::MatrixXd::Zero(2, 2);
  s.col_factors = Eigen::MatrixXd::Zero(3, 2);
  s.column_scales = Eigen::VectorXd::Ones(2);
  s.validate();
  CHECK(s.rank() == 2);

  FactorState wide = s;
  wide.col_factors = Eigen::MatrixXd::Zero(3, 3);
  CHECK_THROWS_AS(wide.validate(), usage_error);

  FactorState neg = s;
  neg.column_scales(1) = 0.0;
  CHECK_THROWS_AS(neg.validate(), usage_error);
}

}  // TEST_SUITE
