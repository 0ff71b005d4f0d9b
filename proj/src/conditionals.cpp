#include "lowrank/conditionals.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "lowrank/errors.hpp"

namespace lowrank {

namespace {

constexpr double kMinSqNorm = 1e-12;  // guards mu = beta/sqrt(S) on dead columns

double log_sigmoid_ratio(double log_high, double log_low) {
  double d = log_high - log_low;
  if (d >= 0.0) return 1.0 / (1.0 + std::exp(-d));
  double e = std::exp(d);
  return e / (1.0 + e);
}

void check_scales(const Eigen::VectorXd& column_scales) {
  if ((column_scales.array() <= 0.0).any())
    throw usage_error("row conditional: column scales must be positive");
}

RowConditional conditional_impl(std::span<const std::int32_t> positions,
                                const std::vector<Observation>& entries,
                                const Eigen::MatrixXd& other_factors,
                                const Eigen::VectorXd& column_scales,
                                double weight, bool by_row) {
  const int K = static_cast<int>(column_scales.size());
  RowConditional out;
  out.precision = column_scales.cwiseInverse().asDiagonal();
  out.linear_term = Eigen::VectorXd::Zero(K);
  for (std::int32_t k : positions) {
    const Observation& e = entries[k];
    auto other = other_factors.row(by_row ? e.col : e.row);
    out.precision.noalias() += weight * (other.transpose() * other);
    out.linear_term.noalias() += (weight * e.value) * other.transpose();
  }
  return out;
}

double likelihood_weight(const ObservationSet& data, double lambda) {
  if (data.empty()) return 0.0;  // conditional equals the prior; lambda unused
  if (!(lambda > 0.0))
    throw usage_error("row conditional: lambda must be positive");
  return 2.0 * lambda / static_cast<double>(data.size());
}

}  // namespace

Eigen::VectorXd column_sq_norms(const Eigen::MatrixXd& row_factors,
                                const Eigen::MatrixXd& col_factors) {
  if (row_factors.cols() != col_factors.cols())
    throw usage_error("column_sq_norms: factor widths disagree");
  return row_factors.colwise().squaredNorm().transpose() +
         col_factors.colwise().squaredNorm().transpose();
}

RowConditional row_factor_conditional(const ObservationSet& data,
                                      const Eigen::MatrixXd& col_factors,
                                      const Eigen::VectorXd& column_scales,
                                      double lambda, int i) {
  check_scales(column_scales);
  if (col_factors.rows() != data.cols())
    throw usage_error("row_factor_conditional: column-factor height mismatch");
  double w = likelihood_weight(data, lambda);
  return conditional_impl(data.row_entries(i), data.entries(), col_factors,
                          column_scales, w, true);
}

RowConditional col_factor_conditional(const ObservationSet& data,
                                      const Eigen::MatrixXd& row_factors,
                                      const Eigen::VectorXd& column_scales,
                                      double lambda, int j) {
  check_scales(column_scales);
  if (row_factors.rows() != data.rows())
    throw usage_error("col_factor_conditional: row-factor height mismatch");
  double w = likelihood_weight(data, lambda);
  return conditional_impl(data.col_entries(j), data.entries(), row_factors,
                          column_scales, w, false);
}

std::vector<ScaleConditional> scale_conditionals(const PriorSpec& prior,
                                                 const Eigen::VectorXd& sq_norms,
                                                 int rows_plus_cols) {
  if (rows_plus_cols <= 0)
    throw usage_error("scale_conditionals: rows_plus_cols must be positive");
  validate(prior);
  const double q = 0.5 * static_cast<double>(rows_plus_cols);
  std::vector<ScaleConditional> out;
  out.reserve(sq_norms.size());
  for (Eigen::Index h = 0; h < sq_norms.size(); ++h) {
    const double s = sq_norms[h];
    if (s < 0.0)
      throw usage_error("scale_conditionals: negative square norm");
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, FixedPrior>) {
            out.push_back(DiracScale{p.gamma0});
          } else if constexpr (std::is_same_v<T, InverseGammaPrior>) {
            out.push_back(InvGammaScale{p.shape + q, p.rate + 0.5 * s});
          } else if constexpr (std::is_same_v<T, GammaPrior>) {
            double sc = std::max(s, kMinSqNorm);
            out.push_back(InvGaussianScale{p.beta / std::sqrt(sc),
                                           p.beta * p.beta});
          } else {
            double log_high =
                std::log(p.slab_prob) - q * std::log(p.slab) - s / (2.0 * p.slab);
            double log_low = std::log1p(-p.slab_prob) - q * std::log(p.spike) -
                             s / (2.0 * p.spike);
            out.push_back(TwoPointScale{log_sigmoid_ratio(log_high, log_low),
                                        p.spike, p.slab});
          }
        },
        prior);
  }
  return out;
}

std::vector<ScaleConditional> scale_conditionals(
    const PriorSpec& prior, const Eigen::MatrixXd& row_factors,
    const Eigen::MatrixXd& col_factors) {
  return scale_conditionals(
      prior, column_sq_norms(row_factors, col_factors),
      static_cast<int>(row_factors.rows() + col_factors.rows()));
}

double sample_scale(const ScaleConditional& cond, RngStream& rng) {
  return std::visit(
      [&rng](const auto& c) -> double {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, DiracScale>) {
          return c.value;
        } else if constexpr (std::is_same_v<T, InvGammaScale>) {
          return sample_inverse_gamma(c.shape, c.rate, rng);
        } else if constexpr (std::is_same_v<T, InvGaussianScale>) {
          // The scale's conditional density is proportional to
          // gamma^(-1/2) exp(-(shape * gamma + (shape/mean^2) / gamma) / 2),
          // which is the law of the reciprocal of an
          // InverseGaussian(mean, shape) variable.
          return 1.0 / sample_inverse_gaussian(c.mean, c.shape, rng);
        } else {
          return sample_bernoulli(c.prob_high, rng) ? c.high : c.low;
        }
      },
      cond);
}

double group_penalty_log_marginal(const Eigen::MatrixXd& row_factors,
                                  const Eigen::MatrixXd& col_factors,
                                  double beta) {
  if (!(beta > 0.0))
    throw usage_error("group_penalty_log_marginal: beta must be positive");
  return -beta * column_sq_norms(row_factors, col_factors)
                     .array()
                     .sqrt()
                     .sum();
}

double scale_integral_closed_form(double sq_norm, double beta) {
  if (!(beta > 0.0) || sq_norm < 0.0)
    throw usage_error("scale_integral: need beta > 0 and sq_norm >= 0");
  return std::sqrt(2.0 * M_PI) / beta * std::exp(-beta * std::sqrt(sq_norm));
}

namespace {

// Integrand after the substitution gamma = t^2, which removes the
// inverse-square-root singularity: 2 * exp(-S/(2 t^2) - beta^2 t^2 / 2).
struct ScaleIntegrand {
  double s;
  double beta2;
  double operator()(double t) const {
    if (t <= 0.0) return s > 0.0 ? 0.0 : 2.0;
    return 2.0 * std::exp(-s / (2.0 * t * t) - 0.5 * beta2 * t * t);
  }
};

struct SimpsonSlice {
  double a, fa, m, fm, b, fb, estimate;
};

double simpson_estimate(const ScaleIntegrand& f, double a, double fa, double b,
                        double fb, double& m, double& fm) {
  m = 0.5 * (a + b);
  fm = f(m);
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_simpson(const ScaleIntegrand& f, double a, double fa, double b,
                        double fb, double m, double fm, double whole,
                        double eps, int depth) {
  double lm, flm, rm, frm;
  double left = simpson_estimate(f, a, fa, m, fm, lm, flm);
  double right = simpson_estimate(f, m, fm, b, fb, rm, frm);
  double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * eps)
    return left + right + delta / 15.0;
  return adaptive_simpson(f, a, fa, m, fm, lm, flm, left, 0.5 * eps,
                          depth - 1) +
         adaptive_simpson(f, m, fm, b, fb, rm, frm, right, 0.5 * eps,
                          depth - 1);
}

}  // namespace

double scale_integral_quadrature(double sq_norm, double beta) {
  if (!(beta > 0.0) || sq_norm < 0.0)
    throw usage_error("scale_integral: need beta > 0 and sq_norm >= 0");
  ScaleIntegrand f{sq_norm, beta * beta};
  // Peak of the transformed integrand sits at t* = S^(1/4)/sqrt(beta); the
  // upper limit puts the Gaussian tail 64 nats below the peak.
  double peak = std::pow(sq_norm, 0.25) / std::sqrt(beta);
  double hi = std::sqrt(2.0 * (beta * std::sqrt(sq_norm) + 64.0)) / beta;
  std::vector<double> knots{0.0};
  for (double t : {0.5 * peak, peak, 2.0 * peak, 1.0 / beta})
    if (t > 0.0 && t < hi) knots.push_back(t);
  knots.push_back(hi);
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  // First pass: plain Simpson on each slice to size the error budget.
  std::vector<SimpsonSlice> slices;
  double rough = 0.0;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    SimpsonSlice s;
    s.a = knots[i];
    s.b = knots[i + 1];
    s.fa = f(s.a);
    s.fb = f(s.b);
    s.estimate = simpson_estimate(f, s.a, s.fa, s.b, s.fb, s.m, s.fm);
    rough += s.estimate;
    slices.push_back(s);
  }
  double eps = std::max(1e-13 * std::abs(rough), 1e-300);
  double total = 0.0;
  for (const auto& s : slices)
    total += adaptive_simpson(f, s.a, s.fa, s.b, s.fb, s.m, s.fm, s.estimate,
                              eps, 60);
  return total;
}

}  // namespace lowrank
