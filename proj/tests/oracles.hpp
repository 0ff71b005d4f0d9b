#pragma once

// Deliberately naive reference implementations used to cross-check the
// library. Everything here favors obviousness over speed: triple loops,
// explicit inverses, textbook formulas.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "lowrank/model.hpp"

namespace oracle {

inline bool bitwise_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.array() == b.array()).all();
}

inline Eigen::MatrixXd dense_matmul(const Eigen::MatrixXd& a,
                                    const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      for (Eigen::Index k = 0; k < a.cols(); ++k)
        out(i, j) += a(i, k) * b(k, j);
  return out;
}

struct RidgePosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

// Conjugate Gaussian posterior of one factor row under
//   y_k ~ N(x_k . u, 1/w),  u ~ N(0, diag(prior_var)),
// computed with an explicit matrix inverse.
inline RidgePosterior ridge_posterior(const Eigen::MatrixXd& design,
                                      const Eigen::VectorXd& responses,
                                      const Eigen::VectorXd& prior_var,
                                      double w) {
  const Eigen::Index k = prior_var.size();
  Eigen::MatrixXd precision = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index h = 0; h < k; ++h) precision(h, h) = 1.0 / prior_var(h);
  precision += w * design.transpose() * design;
  RidgePosterior out;
  out.covariance = precision.inverse();
  out.mean = out.covariance * (w * design.transpose() * responses);
  return out;
}

inline double direct_rmse(const Eigen::MatrixXd& estimate,
                          const Eigen::MatrixXd& truth) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < estimate.rows(); ++i)
    for (Eigen::Index j = 0; j < estimate.cols(); ++j) {
      double d = estimate(i, j) - truth(i, j);
      acc += d * d;
    }
  return std::sqrt(acc / static_cast<double>(estimate.size()));
}

inline double direct_holdout_rmse(const lowrank::FactorState& state,
                                  const std::vector<lowrank::Observation>& test) {
  double acc = 0.0;
  for (const auto& obs : test) {
    double pred = state.row_factors.row(obs.row)
                      .dot(state.col_factors.row(obs.col));
    acc += (pred - obs.value) * (pred - obs.value);
  }
  return std::sqrt(acc / static_cast<double>(test.size()));
}

inline std::vector<double> ar1_series(double phi, int n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(n);
  double x = normal(gen) / std::sqrt(1.0 - phi * phi);
  for (int t = 0; t < n; ++t) {
    x = phi * x + normal(gen);
    out[t] = x;
  }
  return out;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Inverse-Gaussian distribution function (mean mu, shape lam).
inline double inv_gaussian_cdf(double x, double mu, double lam) {
  if (x <= 0.0) return 0.0;
  double s = std::sqrt(lam / x);
  return normal_cdf(s * (x / mu - 1.0)) +
         std::exp(2.0 * lam / mu) * normal_cdf(-s * (x / mu + 1.0));
}

// Kolmogorov-Smirnov statistic of a sample against a continuous CDF.
inline double ks_statistic(std::vector<double> sample,
                           const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    double f = cdf(sample[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

inline double sample_mean(const std::vector<double>& xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

inline double sample_variance(const std::vector<double>& xs) {
  double m = sample_mean(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return acc / static_cast<double>(xs.size() - 1);
}

// Two-point scale posterior computed without any log-space care; only valid
// while the direct powers stay inside double range.
inline double naive_two_point_prob(double spike, double slab, double slab_prob,
                                   double sq_norm, int rows_plus_cols) {
  double q = static_cast<double>(rows_plus_cols) / 2.0;
  double wh = slab_prob * std::pow(slab, -q) * std::exp(-sq_norm / (2.0 * slab));
  double wl = (1.0 - slab_prob) * std::pow(spike, -q) *
              std::exp(-sq_norm / (2.0 * spike));
  return wh / (wh + wl);
}

// Posterior of the single matrix entry theta = u * v for a 1 x 1 problem with
// rank 1 and a fixed scale: integrates
//   exp(-w (y - u v)^2 / 2) N(u; 0, g) N(v; 0, g)
// on a Simpson grid and exposes the mean and the CDF of theta.
struct MicroPosterior {
  double mean = 0.0;
  std::vector<double> theta;   // sorted cell products
  std::vector<double> weight;  // matching cumulative mass (prefix-normalized)

  double cdf(double t) const {
    auto it = std::upper_bound(theta.begin(), theta.end(), t);
    if (it == theta.begin()) return 0.0;
    return weight[static_cast<std::size_t>(it - theta.begin()) - 1];
  }
};

inline MicroPosterior micro_posterior(double y, double w, double g,
                                      int grid = 601) {
  const double span = 6.0 * std::sqrt(g) + 3.0;
  const double step = 2.0 * span / static_cast<double>(grid - 1);
  std::vector<double> simpson(grid);
  for (int i = 0; i < grid; ++i)
    simpson[i] = (i == 0 || i == grid - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);

  std::vector<std::pair<double, double>> cells;
  cells.reserve(static_cast<std::size_t>(grid) * grid);
  double mass = 0.0, first = 0.0;
  for (int i = 0; i < grid; ++i) {
    double u = -span + step * i;
    for (int j = 0; j < grid; ++j) {
      double v = -span + step * j;
      double t = u * v;
      double p = simpson[i] * simpson[j] *
                 std::exp(-0.5 * w * (y - t) * (y - t) -
                          (u * u + v * v) / (2.0 * g));
      cells.emplace_back(t, p);
      mass += p;
      first += p * t;
    }
  }
  std::sort(cells.begin(), cells.end());

  MicroPosterior out;
  out.mean = first / mass;
  out.theta.resize(cells.size());
  out.weight.resize(cells.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    out.theta[k] = cells[k].first;
    acc += cells[k].second;
    out.weight[k] = acc / mass;
  }
  return out;
}

}  // namespace oracle
