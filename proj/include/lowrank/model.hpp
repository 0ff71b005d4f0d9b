#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace lowrank {

struct Observation {
  int row;
  int col;
  double value;

  bool operator==(const Observation&) const = default;
};

/// Incomplete-matrix data: rating triplets plus per-row / per-column
/// indexes into the triplet list. Duplicate (row, col) pairs are allowed
/// and kept as distinct terms in all likelihood sums (observations are
/// sampled with replacement).
class ObservationSet {
 public:
  ObservationSet(int rows, int cols, std::vector<Observation> entries);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::int64_t size() const { return static_cast<std::int64_t>(entries_.size()); }
  bool empty() const { return entries_.empty(); }

  const Observation& entry(std::int64_t k) const { return entries_[k]; }
  const std::vector<Observation>& entries() const { return entries_; }

  /// Positions k with entry(k).row == i, in increasing k.
  std::span<const std::int32_t> row_entries(int i) const;
  /// Positions k with entry(k).col == j, in increasing k.
  std::span<const std::int32_t> col_entries(int j) const;

  /// Same data with the roles of rows and columns exchanged.
  ObservationSet transposed() const;

 private:
  int rows_;
  int cols_;
  std::vector<Observation> entries_;
  std::vector<std::int64_t> row_ptr_, col_ptr_;
  std::vector<std::int32_t> row_pos_, col_pos_;
};

/// Current factorization state: the estimated matrix is
/// row_factors * col_factors^T, and column_scales[h] is the prior variance
/// shared by column h of both factor matrices.
struct FactorState {
  Eigen::MatrixXd row_factors;   // m1 x K
  Eigen::MatrixXd col_factors;   // m2 x K
  Eigen::VectorXd column_scales; // K, strictly positive

  int rank() const { return static_cast<int>(column_scales.size()); }
  void validate() const;
};

// -- Priors on the column scales ------------------------------------------

struct FixedPrior {
  double gamma0;  // point mass: every column scale equals gamma0
};

struct InverseGammaPrior {
  double shape;  // a
  double rate;   // b
};

// Gamma(shape (m1+m2+1)/2, rate beta^2/2) on each column scale; beta is the
// group-penalty weight of the equivalent marginal formulation.
struct GammaPrior {
  double beta;
};

// Two-point prior (1-slab_prob) at spike + slab_prob at slab, spike <= slab.
struct DiscretePrior {
  double spike;      // epsilon
  double slab;       // C
  double slab_prob;  // p in (0,1)
};

using PriorSpec =
    std::variant<FixedPrior, InverseGammaPrior, GammaPrior, DiscretePrior>;

void validate(const PriorSpec& prior);
std::string prior_family(const PriorSpec& prior);  // "fixed", "invgamma", ...
std::string prior_params(const PriorSpec& prior);  // "gamma0=0.2", "a=1;b=0.1", ...
std::string describe(const PriorSpec& prior);      // family(params)

// -- Sampler configuration --------------------------------------------------

struct SamplerConfig {
  int rank = 5;       // number of factor columns K
  int iterations = 1000;
  int burn_in = 100;
  int thinning = 10;
  std::uint64_t seed = 1;
  double noise_sd = 1.0;  // noise-scale proxy s; sets the default tempering
  std::optional<double> lambda;  // explicit inverse temperature, else n/(2 s^2)

  double lambda_for(std::int64_t n_observations) const;
  int retained_count() const { return (iterations - burn_in) / thinning; }
  void validate() const;
};

// -- Posterior summary --------------------------------------------------------

struct CellMean {
  int row;
  int col;
  double value;
};

/// Posterior-mean estimate accumulated over retained iterations, either as
/// a dense matrix or on an up-front list of tracked cells, plus traces.
struct PosteriorSummary {
  std::optional<Eigen::MatrixXd> theta_mean;
  std::vector<CellMean> cell_means;  // sorted by (row, col); sparse path only
  std::vector<Eigen::VectorXd> gamma_trace;  // per retained iteration
  std::vector<double> rmse_trace;            // per iteration, if reference given
  int retained_count = 0;

  bool dense() const { return theta_mean.has_value(); }
  /// Posterior-mean prediction at (i, j); sparse path requires a tracked cell.
  double value_at(int i, int j) const;
};

// Dense accumulation is used when rows*cols stays within this budget.
inline constexpr std::int64_t kDenseCellLimit = 10'000'000;

// -- Shared operations -------------------------------------------------------

/// Inner product of row i of the row factors with row j of the column factors.
double predict_entry(const FactorState& state, int i, int j);

/// Root-mean-square error over all cells of two equally-sized matrices.
double rmse(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth);

using ClipRange = std::optional<std::pair<double, double>>;

/// RMSE over the test triplets only, predicting with the current factors.
double holdout_rmse(const FactorState& state, const ObservationSet& test,
                    ClipRange clip = std::nullopt);
/// Same, predicting from a dense estimate.
double holdout_rmse(const Eigen::MatrixXd& estimate, const ObservationSet& test,
                    ClipRange clip = std::nullopt);
/// Same, predicting from a posterior summary (test cells must be tracked).
double holdout_rmse(const PosteriorSummary& summary, const ObservationSet& test,
                    ClipRange clip = std::nullopt);

}  // namespace lowrank
