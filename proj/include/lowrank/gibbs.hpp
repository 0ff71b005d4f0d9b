#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "lowrank/conditionals.hpp"
#include "lowrank/model.hpp"
#include "lowrank/rng.hpp"

namespace lowrank {

/// Retained-iteration trace of one tracked matrix entry.
struct EntryTrace {
  int row;
  int col;
  std::vector<double> values;
};

/// Everything produced by one sampler run: final state, posterior summary,
/// and per-entry traces for mixing diagnostics.
struct GibbsRun {
  SamplerConfig config;
  PriorSpec prior;
  FactorState state;
  PosteriorSummary summary;
  std::vector<EntryTrace> entry_traces;
};

/// Draw an initial state from the prior structure: column scales at a
/// deterministic prior center (mean, or mode for the two-point prior),
/// factor entries Normal(0, scale).
FactorState init_state(int rows, int cols, const SamplerConfig& config,
                       const PriorSpec& prior, RngStream& rng);

/// One full sweep in place: all row-factor rows, all column-factor rows,
/// then all column scales. sweep_stream is forked per (block, row) so row
/// updates can run concurrently with reproducible results.
void gibbs_sweep(FactorState& state, const ObservationSet& obs,
                 const PriorSpec& prior, double lambda,
                 const RngStream& sweep_stream);

/// Full sampler: init, config.iterations sweeps, posterior-mean accumulation
/// on retained iterations (past burn-in, every thinning-th), scale and
/// diagnostic traces. reference (same size as the full matrix) turns on the
/// per-iteration RMSE trace. extra_tracked adds cells to the tracked set;
/// when the matrix exceeds the dense budget only tracked cells are averaged.
GibbsRun run_gibbs(const ObservationSet& obs, const PriorSpec& prior,
                   const SamplerConfig& config,
                   const Eigen::MatrixXd* reference = nullptr,
                   const std::vector<std::pair<int, int>>& extra_tracked = {});

/// Up to nine fixed cells in a corner / center pattern, for mixing traces.
std::vector<std::pair<int, int>> diagnostic_cells(int rows, int cols);

struct AcfResult {
  Eigen::VectorXd values;  // lags 0..max_lag, values[0] == 1 unless constant
  bool constant = false;   // trace had zero variance; values are 1,0,0,...
};

/// Sample autocorrelation, mean-centered, normalized by the lag-0
/// autocovariance.
AcfResult acf(const std::vector<double>& trace, int max_lag);

}  // namespace lowrank
