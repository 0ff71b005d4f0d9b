#include "lowrank/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>

#include "lowrank/errors.hpp"
#include "lowrank/linalg.hpp"

namespace lowrank {

namespace {

// Child ids of the per-iteration fork: 0 reserved for initialization,
// iteration t uses 1 + t. Blocks within an iteration fork by index.
enum Block : std::uint64_t { kRowBlock = 0, kColBlock = 1, kScaleBlock = 2 };

double initial_scale(const PriorSpec& prior, int rows_plus_cols) {
  return std::visit(
      [rows_plus_cols](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, FixedPrior>) {
          return p.gamma0;
        } else if constexpr (std::is_same_v<T, InverseGammaPrior>) {
          return p.shape > 1.0 ? p.rate / (p.shape - 1.0) : 1.0;
        } else if constexpr (std::is_same_v<T, GammaPrior>) {
          return (rows_plus_cols + 1) / (p.beta * p.beta);
        } else {
          // Start at the prior mode. Starting every column in the slab locks
          // the chain: with q = (rows+cols)/2 draws per column the squared
          // norm of a slab column sits near rows+cols, far above the point
          // where the two-point conditional would ever switch it off.
          return p.slab_prob > 0.5 ? p.slab : p.spike;
        }
      },
      prior);
}

void fill_gaussian_rows(Eigen::MatrixXd& mat, const Eigen::VectorXd& scales,
                        RngStream& rng) {
  Eigen::VectorXd sd = scales.array().sqrt();
  for (Eigen::Index i = 0; i < mat.rows(); ++i)
    for (Eigen::Index h = 0; h < mat.cols(); ++h)
      mat(i, h) = sd[h] * rng.next_gaussian();
}

// Runs fn(index) for index in [0, count), capturing the first failure so a
// future parallel-for can stay exception-free inside the loop body.
template <typename Fn>
void for_each_row(int count, const char* what, Fn&& fn) {
  std::string error;
  int error_detail = 0;
  bool failed = false;
  for (int idx = 0; idx < count; ++idx) {
    if (failed) break;
    try {
      fn(idx);
    } catch (const numerical_error& e) {
      failed = true;
      std::ostringstream msg;
      msg << what << " failed at row " << idx << ": " << e.what();
      error = msg.str();
      error_detail = e.detail();
    }
  }
  if (failed) throw numerical_error(error, error_detail);
}

}  // namespace

FactorState init_state(int rows, int cols, const SamplerConfig& config,
                       const PriorSpec& prior, RngStream& rng) {
  config.validate();
  validate(prior);
  if (rows <= 0 || cols <= 0)
    throw usage_error("init_state: dimensions must be positive");
  FactorState state;
  state.column_scales =
      Eigen::VectorXd::Constant(config.rank, initial_scale(prior, rows + cols));
  state.row_factors.resize(rows, config.rank);
  state.col_factors.resize(cols, config.rank);
  fill_gaussian_rows(state.row_factors, state.column_scales, rng);
  fill_gaussian_rows(state.col_factors, state.column_scales, rng);
  return state;
}

void gibbs_sweep(FactorState& state, const ObservationSet& obs,
                 const PriorSpec& prior, double lambda,
                 const RngStream& sweep_stream) {
  state.validate();
  if (state.row_factors.rows() != obs.rows() ||
      state.col_factors.rows() != obs.cols())
    throw usage_error("gibbs_sweep: state does not match the observation grid");

  const int m1 = obs.rows();
  const int m2 = obs.cols();

  RngStream row_block = sweep_stream.fork(kRowBlock);
  for_each_row(m1, "row-factor update", [&](int i) {
    RowConditional cond = row_factor_conditional(obs, state.col_factors,
                                                 state.column_scales, lambda, i);
    RngStream row_rng = row_block.fork(static_cast<std::uint64_t>(i));
    state.row_factors.row(i) =
        sample_mvn_from_precision(cond.precision, cond.linear_term, row_rng);
  });

  RngStream col_block = sweep_stream.fork(kColBlock);
  for_each_row(m2, "column-factor update", [&](int j) {
    RowConditional cond = col_factor_conditional(obs, state.row_factors,
                                                 state.column_scales, lambda, j);
    RngStream col_rng = col_block.fork(static_cast<std::uint64_t>(j));
    state.col_factors.row(j) =
        sample_mvn_from_precision(cond.precision, cond.linear_term, col_rng);
  });

  RngStream scale_block = sweep_stream.fork(kScaleBlock);
  auto conds = scale_conditionals(prior, state.row_factors, state.col_factors);
  for (int h = 0; h < state.rank(); ++h) {
    RngStream scale_rng = scale_block.fork(static_cast<std::uint64_t>(h));
    state.column_scales[h] = sample_scale(conds[h], scale_rng);
  }
}

std::vector<std::pair<int, int>> diagnostic_cells(int rows, int cols) {
  std::vector<int> ri{0, rows / 2, rows - 1};
  std::vector<int> ci{0, cols / 2, cols - 1};
  std::sort(ri.begin(), ri.end());
  ri.erase(std::unique(ri.begin(), ri.end()), ri.end());
  std::sort(ci.begin(), ci.end());
  ci.erase(std::unique(ci.begin(), ci.end()), ci.end());
  std::vector<std::pair<int, int>> cells;
  for (int i : ri)
    for (int j : ci) cells.emplace_back(i, j);
  return cells;
}

GibbsRun run_gibbs(const ObservationSet& obs, const PriorSpec& prior,
                   const SamplerConfig& config, const Eigen::MatrixXd* reference,
                   const std::vector<std::pair<int, int>>& extra_tracked) {
  config.validate();
  validate(prior);
  const int m1 = obs.rows();
  const int m2 = obs.cols();
  if (reference && (reference->rows() != m1 || reference->cols() != m2))
    throw usage_error("run_gibbs: reference matrix has the wrong shape");

  const double lambda = config.lambda_for(obs.size());
  const bool dense =
      static_cast<std::int64_t>(m1) * m2 <= kDenseCellLimit;

  std::vector<std::pair<int, int>> tracked = diagnostic_cells(m1, m2);
  tracked.insert(tracked.end(), extra_tracked.begin(), extra_tracked.end());
  for (auto [i, j] : tracked)
    if (i < 0 || i >= m1 || j < 0 || j >= m2)
      throw usage_error("run_gibbs: tracked cell outside the matrix");
  std::sort(tracked.begin(), tracked.end());
  tracked.erase(std::unique(tracked.begin(), tracked.end()), tracked.end());
  const auto diag = diagnostic_cells(m1, m2);

  GibbsRun run{config, prior, {}, {}, {}};
  RngStream base(config.seed);
  RngStream init_rng = base.fork(0);
  run.state = init_state(m1, m2, config, prior, init_rng);

  const int retained_target = config.retained_count();
  Eigen::MatrixXd theta;          // scratch for the current iterate
  Eigen::MatrixXd theta_sum;      // dense accumulation
  std::vector<double> cell_sums(tracked.size(), 0.0);
  if (dense) theta_sum = Eigen::MatrixXd::Zero(m1, m2);
  const bool need_dense_iterate = dense || reference != nullptr;

  for (const auto& [i, j] : diag)
    run.entry_traces.push_back({i, j, {}});
  for (auto& t : run.entry_traces) t.values.reserve(retained_target);
  run.summary.gamma_trace.reserve(retained_target);

  int retained = 0;
  for (int t = 0; t < config.iterations; ++t) {
    RngStream sweep_stream = base.fork(1 + static_cast<std::uint64_t>(t));
    gibbs_sweep(run.state, obs, prior, lambda, sweep_stream);

    const int iteration = t + 1;
    const bool keep = iteration > config.burn_in &&
                      (iteration - config.burn_in) % config.thinning == 0;
    if (need_dense_iterate && (keep || reference)) {
      theta.noalias() = run.state.row_factors * run.state.col_factors.transpose();
    }
    if (reference) run.summary.rmse_trace.push_back(rmse(theta, *reference));
    if (!keep) continue;

    ++retained;
    if (dense) {
      theta_sum += theta;
    } else {
      for (std::size_t c = 0; c < tracked.size(); ++c)
        cell_sums[c] +=
            predict_entry(run.state, tracked[c].first, tracked[c].second);
    }
    run.summary.gamma_trace.push_back(run.state.column_scales);
    for (auto& tr : run.entry_traces)
      tr.values.push_back(predict_entry(run.state, tr.row, tr.col));
  }

  run.summary.retained_count = retained;
  if (retained > 0) {
    if (dense) {
      run.summary.theta_mean = theta_sum / static_cast<double>(retained);
    } else {
      run.summary.cell_means.reserve(tracked.size());
      for (std::size_t c = 0; c < tracked.size(); ++c)
        run.summary.cell_means.push_back(
            {tracked[c].first, tracked[c].second,
             cell_sums[c] / static_cast<double>(retained)});
    }
  }
  return run;
}

AcfResult acf(const std::vector<double>& trace, int max_lag) {
  if (max_lag <= 0) throw usage_error("acf: max_lag must be positive");
  const int n = static_cast<int>(trace.size());
  if (n <= max_lag) throw usage_error("acf: trace no longer than max_lag");
  double mean = 0.0;
  for (double x : trace) mean += x;
  mean /= n;
  AcfResult out;
  out.values = Eigen::VectorXd::Zero(max_lag + 1);
  out.values[0] = 1.0;
  double c0 = 0.0;
  for (double x : trace) c0 += (x - mean) * (x - mean);
  if (c0 <= 0.0) {
    out.constant = true;
    return out;
  }
  for (int lag = 1; lag <= max_lag; ++lag) {
    double c = 0.0;
    for (int t = 0; t + lag < n; ++t)
      c += (trace[t] - mean) * (trace[t + lag] - mean);
    out.values[lag] = c / c0;
  }
  return out;
}

}  // namespace lowrank
