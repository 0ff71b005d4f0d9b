#include "lowrank/vb.hpp"

#include <cmath>
#include <sstream>

#include "lowrank/errors.hpp"
#include "lowrank/linalg.hpp"

namespace lowrank {

double VBConfig::lambda_for(std::int64_t n_observations) const {
  if (lambda) return *lambda;
  return static_cast<double>(n_observations) / (2.0 * noise_sd * noise_sd);
}

void VBConfig::validate() const {
  if (rank <= 0) throw usage_error("VBConfig: rank must be positive");
  if (!(noise_sd > 0.0)) throw usage_error("VBConfig: noise_sd must be positive");
  if (lambda && !(*lambda > 0.0))
    throw usage_error("VBConfig: lambda must be positive");
  if (!(prior_shape > 0.0) || !(prior_rate > 0.0))
    throw usage_error("VBConfig: prior shape and rate must be positive");
  if (!(tolerance > 0.0)) throw usage_error("VBConfig: tolerance must be positive");
  if (max_iterations <= 0)
    throw usage_error("VBConfig: max_iterations must be positive");
}

VBState vb_init(int rows, int cols, const VBConfig& config) {
  config.validate();
  if (rows <= 0 || cols <= 0)
    throw usage_error("vb_init: dimensions must be positive");
  VBState state;
  const int K = config.rank;
  const double sd = std::sqrt(0.1);
  RngStream rng(config.seed);
  state.row_means.resize(rows, K);
  state.col_means.resize(cols, K);
  for (int i = 0; i < rows; ++i)
    for (int h = 0; h < K; ++h) state.row_means(i, h) = sd * rng.next_gaussian();
  for (int j = 0; j < cols; ++j)
    for (int h = 0; h < K; ++h) state.col_means(j, h) = sd * rng.next_gaussian();
  state.row_covs.assign(rows, 0.1 * Eigen::MatrixXd::Identity(K, K));
  state.col_covs.assign(cols, 0.1 * Eigen::MatrixXd::Identity(K, K));
  state.scale_rates = Eigen::VectorXd::Constant(
      K, config.prior_rate + (rows + cols) / 20.0);
  state.scale_shape = config.prior_shape + 0.5 * (rows + cols);
  return state;
}

namespace {

// Shared core of the two factor-side updates. Updates (means, covs) of the
// side whose index is selected by by_row, reading the other side's means and
// covariances; data terms use the other side's second moments cov + mean
// mean^T.
void update_side(Eigen::MatrixXd& means, std::vector<Eigen::MatrixXd>& covs,
                 const Eigen::MatrixXd& other_means,
                 const std::vector<Eigen::MatrixXd>& other_covs,
                 const ObservationSet& obs, bool by_row, double lambda,
                 const Eigen::VectorXd& scale_rates, double scale_shape,
                 const char* what) {
  const int K = static_cast<int>(scale_rates.size());
  const int count = static_cast<int>(means.rows());
  const double w =
      obs.empty() ? 0.0 : 2.0 * lambda / static_cast<double>(obs.size());
  if (!obs.empty() && !(lambda > 0.0))
    throw usage_error("vb update: lambda must be positive");
  const Eigen::MatrixXd prior_precision =
      (scale_shape * scale_rates.cwiseInverse()).asDiagonal();

  for (int idx = 0; idx < count; ++idx) {
    Eigen::MatrixXd precision = prior_precision;
    Eigen::VectorXd linear = Eigen::VectorXd::Zero(K);
    auto positions = by_row ? obs.row_entries(idx) : obs.col_entries(idx);
    for (std::int32_t k : positions) {
      const Observation& e = obs.entry(k);
      int other = by_row ? e.col : e.row;
      auto mu = other_means.row(other);
      precision.noalias() += w * other_covs[other];
      precision.noalias() += w * (mu.transpose() * mu);
      linear.noalias() += (w * e.value) * mu.transpose();
    }
    try {
      Eigen::MatrixXd lower = cholesky_lower(precision);
      covs[idx] = cholesky_inverse(lower);
      means.row(idx) = cholesky_solve(lower, linear).transpose();
    } catch (const numerical_error& e) {
      std::ostringstream msg;
      msg << what << " failed at row " << idx << ": " << e.what();
      throw numerical_error(msg.str(), e.detail());
    }
  }
}

void check_state(const VBState& state, const ObservationSet& obs) {
  if (state.row_means.rows() != obs.rows() ||
      state.col_means.rows() != obs.cols())
    throw usage_error("vb update: state does not match the observation grid");
  if (state.row_covs.size() != static_cast<std::size_t>(obs.rows()) ||
      state.col_covs.size() != static_cast<std::size_t>(obs.cols()))
    throw usage_error("vb update: covariance list sizes disagree");
  if ((state.scale_rates.array() <= 0.0).any() || !(state.scale_shape > 0.0))
    throw usage_error("vb update: scale factor parameters must be positive");
}

}  // namespace

void vb_update_row_factors(VBState& state, const ObservationSet& obs,
                           double lambda) {
  check_state(state, obs);
  update_side(state.row_means, state.row_covs, state.col_means, state.col_covs,
              obs, true, lambda, state.scale_rates, state.scale_shape,
              "row-factor update");
}

void vb_update_col_factors(VBState& state, const ObservationSet& obs,
                           double lambda) {
  check_state(state, obs);
  update_side(state.col_means, state.col_covs, state.row_means, state.row_covs,
              obs, false, lambda, state.scale_rates, state.scale_shape,
              "column-factor update");
}

void vb_update_scales(VBState& state, double prior_rate) {
  if (!(prior_rate > 0.0))
    throw usage_error("vb_update_scales: prior rate must be positive");
  const int K = state.rank();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(K);
  for (Eigen::Index i = 0; i < state.row_means.rows(); ++i)
    acc += state.row_means.row(i).array().square().matrix().transpose() +
           state.row_covs[i].diagonal();
  for (Eigen::Index j = 0; j < state.col_means.rows(); ++j)
    acc += state.col_means.row(j).array().square().matrix().transpose() +
           state.col_covs[j].diagonal();
  state.scale_rates = 0.5 * acc.array() + prior_rate;
}

double vb_predict_entry(const VBState& state, int i, int j) {
  if (i < 0 || i >= state.row_means.rows())
    throw usage_error("vb_predict_entry: row index out of range");
  if (j < 0 || j >= state.col_means.rows())
    throw usage_error("vb_predict_entry: column index out of range");
  return state.row_means.row(i).dot(state.col_means.row(j));
}

FactorState vb_point_estimate(const VBState& state) {
  FactorState out;
  out.row_factors = state.row_means;
  out.col_factors = state.col_means;
  if (state.scale_shape > 1.0)
    out.column_scales = state.scale_rates / (state.scale_shape - 1.0);
  else
    out.column_scales = Eigen::VectorXd::Ones(state.rank());
  return out;
}

VBResult run_vb(const ObservationSet& obs, const VBConfig& config,
                const std::optional<VBState>& init) {
  config.validate();
  VBResult result;
  result.state = init ? *init : vb_init(obs.rows(), obs.cols(), config);
  check_state(result.state, obs);
  if (init && result.state.rank() != config.rank)
    throw usage_error("run_vb: init state rank disagrees with config");

  const double lambda = config.lambda_for(obs.size());
  std::vector<double> prev(obs.entries().size());
  for (std::size_t k = 0; k < prev.size(); ++k) {
    const Observation& e = obs.entry(static_cast<std::int64_t>(k));
    prev[k] = vb_predict_entry(result.state, e.row, e.col);
  }

  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    vb_update_row_factors(result.state, obs, lambda);
    vb_update_col_factors(result.state, obs, lambda);
    vb_update_scales(result.state, config.prior_rate);
    result.iterations = iter;

    double delta = 0.0;
    for (std::size_t k = 0; k < prev.size(); ++k) {
      const Observation& e = obs.entry(static_cast<std::int64_t>(k));
      double p = vb_predict_entry(result.state, e.row, e.col);
      delta = std::max(delta, std::abs(p - prev[k]));
      prev[k] = p;
    }
    result.delta_trace.push_back(delta);
    // One full cycle must confirm stability, so convergence can be declared
    // at the second cycle at the earliest.
    if (iter >= 2 && delta < config.tolerance) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace lowrank
