#include "lowrank/linalg.hpp"

#include <cmath>

#include "lowrank/errors.hpp"

namespace lowrank {

Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& spd) {
  const Eigen::Index k = spd.rows();
  if (spd.cols() != k) throw usage_error("cholesky_lower: matrix not square");
  Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    double diag = spd(j, j) - lower.row(j).head(j).squaredNorm();
    if (!(diag > 0.0) || !std::isfinite(diag))
      throw numerical_error(
          "cholesky_lower: leading minor " + std::to_string(j + 1) +
              " is not positive definite",
          static_cast<int>(j + 1));
    lower(j, j) = std::sqrt(diag);
    for (Eigen::Index i = j + 1; i < k; ++i) {
      double s = spd(i, j) - lower.row(i).head(j).dot(lower.row(j).head(j));
      lower(i, j) = s / lower(j, j);
    }
  }
  return lower;
}

Eigen::VectorXd cholesky_solve(const Eigen::MatrixXd& lower,
                               const Eigen::VectorXd& b) {
  Eigen::VectorXd y =
      lower.triangularView<Eigen::Lower>().solve(b);
  return lower.transpose().triangularView<Eigen::Upper>().solve(y);
}

Eigen::MatrixXd cholesky_inverse(const Eigen::MatrixXd& lower) {
  const Eigen::Index k = lower.rows();
  Eigen::MatrixXd inv_l = lower.triangularView<Eigen::Lower>().solve(
      Eigen::MatrixXd::Identity(k, k));
  return inv_l.transpose() * inv_l;
}

Eigen::VectorXd sample_mvn_from_precision(const Eigen::MatrixXd& precision,
                                          const Eigen::VectorXd& linear_term,
                                          RngStream& rng) {
  if (precision.rows() != linear_term.size())
    throw usage_error(
        "sample_mvn_from_precision: precision and linear_term sizes differ");
  Eigen::MatrixXd lower = cholesky_lower(precision);
  Eigen::VectorXd mean = cholesky_solve(lower, linear_term);
  Eigen::VectorXd z(linear_term.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.next_gaussian();
  // L^T x = z  =>  cov(x) = precision^{-1}
  Eigen::VectorXd noise =
      lower.transpose().triangularView<Eigen::Upper>().solve(z);
  return mean + noise;
}

}  // namespace lowrank
