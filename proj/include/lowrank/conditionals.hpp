#pragma once

#include <Eigen/Dense>
#include <variant>
#include <vector>

#include "lowrank/model.hpp"
#include "lowrank/rng.hpp"

namespace lowrank {

/// Gaussian full conditional of one factor row, kept in precision form:
/// mean solves precision * mean = linear_term, covariance = precision^-1.
struct RowConditional {
  Eigen::MatrixXd precision;   // K x K, symmetric positive definite
  Eigen::VectorXd linear_term; // K
};

/// Full conditional of one column scale, tagged by prior family.
struct DiracScale {
  double value;
};
struct InvGammaScale {
  double shape;
  double rate;
};
/// Parameters of the inverse-Gaussian law followed by the RECIPROCAL of the
/// scale: the conditional density gamma^{-1/2} exp(-(shape*gamma + mu_num/gamma)/2)
/// turns into InverseGaussian(mean, shape) under gamma -> 1/gamma.
struct InvGaussianScale {
  double mean;   // beta / sqrt(S_h)
  double shape;  // beta^2
};
struct TwoPointScale {
  double prob_high;  // posterior probability of the slab value
  double low;        // spike
  double high;       // slab
};

using ScaleConditional =
    std::variant<DiracScale, InvGammaScale, InvGaussianScale, TwoPointScale>;

/// S_h = squared Euclidean norm of column h of the row factors plus that of
/// column h of the column factors.
Eigen::VectorXd column_sq_norms(const Eigen::MatrixXd& row_factors,
                                const Eigen::MatrixXd& col_factors);

/// Conditional of row i of the row factors given the column factors and the
/// column scales: precision = diag(scales)^-1 + w * sum of outer products of
/// the column-factor rows observed with row i, linear_term = w * sum of
/// rating-weighted column-factor rows, where w = 2*lambda/n. A row with no
/// observations falls back to its prior.
RowConditional row_factor_conditional(const ObservationSet& data,
                                      const Eigen::MatrixXd& col_factors,
                                      const Eigen::VectorXd& column_scales,
                                      double lambda, int i);

/// Mirror image for column j of the column factors.
RowConditional col_factor_conditional(const ObservationSet& data,
                                      const Eigen::MatrixXd& row_factors,
                                      const Eigen::VectorXd& column_scales,
                                      double lambda, int j);

/// Per-column full conditionals of the scales given both factor matrices.
std::vector<ScaleConditional> scale_conditionals(
    const PriorSpec& prior, const Eigen::MatrixXd& row_factors,
    const Eigen::MatrixXd& col_factors);

/// Same, from precomputed column square norms; rows_plus_cols = m1 + m2.
std::vector<ScaleConditional> scale_conditionals(const PriorSpec& prior,
                                                 const Eigen::VectorXd& sq_norms,
                                                 int rows_plus_cols);

/// Draw one scale from its conditional.
double sample_scale(const ScaleConditional& cond, RngStream& rng);

/// Log of the marginal prior of the factors under the gamma prior on the
/// scales, up to an additive constant: -beta * sum_h sqrt(S_h).
/// Integrating each scale out yields a group penalty on factor columns.
double group_penalty_log_marginal(const Eigen::MatrixXd& row_factors,
                                  const Eigen::MatrixXd& col_factors,
                                  double beta);

/// The one-dimensional scale integral behind the marginal above:
/// integral over gamma in (0, inf) of gamma^(-1/2)
/// * exp(-sq_norm/(2 gamma) - beta^2 gamma / 2).
/// Closed form: sqrt(2 pi) / beta * exp(-beta * sqrt(sq_norm)).
double scale_integral_closed_form(double sq_norm, double beta);
/// Adaptive-quadrature evaluation of the same integral, for cross-checking.
double scale_integral_quadrature(double sq_norm, double beta);

}  // namespace lowrank
