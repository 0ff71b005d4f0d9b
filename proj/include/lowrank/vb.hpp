#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "lowrank/model.hpp"
#include "lowrank/rng.hpp"

namespace lowrank {

/// Mean-field approximation: Gaussian factors per row of each factor matrix
/// (full K x K covariances) and an inverse-gamma factor per column scale
/// whose shape is fixed at prior_shape + (m1 + m2) / 2, leaving only the
/// rates free.
struct VBState {
  Eigen::MatrixXd row_means;               // m1 x K
  std::vector<Eigen::MatrixXd> row_covs;   // m1 matrices, K x K
  Eigen::MatrixXd col_means;               // m2 x K
  std::vector<Eigen::MatrixXd> col_covs;   // m2 matrices, K x K
  Eigen::VectorXd scale_rates;             // K
  double scale_shape = 0.0;

  int rank() const { return static_cast<int>(scale_rates.size()); }
};

struct VBConfig {
  int rank = 5;
  std::uint64_t seed = 1;
  double noise_sd = 1.0;
  std::optional<double> lambda;   // explicit inverse temperature, else n/(2 s^2)
  double prior_shape = 1.0;       // inverse-gamma prior on the column scales
  double prior_rate = 0.1;
  double tolerance = 1e-4;        // max change of predicted training entries
  int max_iterations = 100;

  double lambda_for(std::int64_t n_observations) const;
  void validate() const;
};

struct VBResult {
  VBState state;
  int iterations = 0;
  bool converged = false;
  std::vector<double> delta_trace;  // per-iteration prediction change
};

/// Seeded starting point: small Gaussian means, 0.1 * identity covariances,
/// rates at prior_rate + (m1 + m2) / 20.
VBState vb_init(int rows, int cols, const VBConfig& config);

/// Coordinate updates. Each refreshes one block given the other two and is
/// deterministic; lambda is the inverse temperature of the tempered
/// likelihood (the weight 2 * lambda / n multiplies every data term).
void vb_update_row_factors(VBState& state, const ObservationSet& obs,
                           double lambda);
void vb_update_col_factors(VBState& state, const ObservationSet& obs,
                           double lambda);
void vb_update_scales(VBState& state, double prior_rate);

/// Full coordinate ascent: row factors, column factors, scales per cycle,
/// stopping once the largest change of any predicted training entry drops
/// below config.tolerance (checked from the second cycle on) or the
/// iteration cap is reached. init overrides the seeded starting point.
VBResult run_vb(const ObservationSet& obs, const VBConfig& config,
                const std::optional<VBState>& init = std::nullopt);

/// Predicted entry: inner product of the variational mean rows.
double vb_predict_entry(const VBState& state, int i, int j);

/// Collapse to a point estimate: mean factors plus posterior-mean scales.
FactorState vb_point_estimate(const VBState& state);

}  // namespace lowrank
