#pragma once

#include <Eigen/Dense>

#include "lowrank/rng.hpp"

namespace lowrank {

// Lower Cholesky factor of a symmetric positive-definite matrix. Throws
// numerical_error carrying the 1-based index of the failing leading minor.
Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& spd);

// Solve spd * x = b given the lower Cholesky factor of spd.
Eigen::VectorXd cholesky_solve(const Eigen::MatrixXd& lower,
                               const Eigen::VectorXd& b);

// Inverse of spd given its lower Cholesky factor.
Eigen::MatrixXd cholesky_inverse(const Eigen::MatrixXd& lower);

// Draw x ~ N(mean, precision^{-1}) with mean = precision^{-1} linear_term.
// Factors the precision, solves for the mean, and back-solves a standard
// normal vector; the covariance is never formed.
Eigen::VectorXd sample_mvn_from_precision(const Eigen::MatrixXd& precision,
                                          const Eigen::VectorXd& linear_term,
                                          RngStream& rng);

}  // namespace lowrank
