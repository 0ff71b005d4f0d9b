#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "lowrank/model.hpp"
#include "lowrank/rng.hpp"

namespace lowrank {

/// Square synthetic completion problem: rank-r truth with Gaussian factor
/// entries, a uniform sample of noisy entries observed.
struct SyntheticSpec {
  int m = 100;                    // side length, m1 = m2 = m
  int r = 2;                      // true rank
  double entry_sd = 1.0;          // sd of the truth-factor entries
  double observe_fraction = 0.2;  // n = round(fraction * m^2)
  double noise_sd = 1.0;
  std::uint64_t seed = 1;
  bool with_replacement = true;   // false: exact-fraction masking

  std::int64_t observation_count() const;
  void validate() const;
};

/// The benchmark protocol at side length m: rank 2, factor-entry variance
/// 20 / sqrt(m), 20% observed with replacement, unit noise.
SyntheticSpec protocol_spec(int m, std::uint64_t seed);

struct SyntheticData {
  Eigen::MatrixXd truth;  // m x m, rank r
  ObservationSet observations;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec, RngStream& rng);

struct ExperimentResult {
  int m = 0;
  int rank = 0;  // fitted rank K
  std::string prior;
  std::string hyperparams;
  std::uint64_t seed = 0;
  double rmse = 0.0;
  double seconds = 0.0;
  int retained = 0;
  bool converged = true;
};

/// One grid cell: generate data from spec, fit with run_gibbs, score the
/// posterior mean against the truth over all cells.
ExperimentResult run_cell(const SyntheticSpec& spec, const PriorSpec& prior,
                          const SamplerConfig& config);

/// Cross product of specs and (prior, config) pairs.
std::vector<ExperimentResult> run_grid(
    const std::vector<SyntheticSpec>& specs,
    const std::vector<std::pair<PriorSpec, SamplerConfig>>& priors);

/// Fixed-column emission: m, K, prior, hyperparams, seed, rmse, seconds.
std::string experiment_csv(const std::vector<ExperimentResult>& results);
std::string experiment_json(const std::vector<ExperimentResult>& results);

}  // namespace lowrank
