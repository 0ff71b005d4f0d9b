#include "lowrank/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "lowrank/errors.hpp"

namespace lowrank {

namespace {

// CSR-style index: ptr[i]..ptr[i+1] delimit the positions of entries whose
// key equals i.
void build_index(const std::vector<Observation>& entries, int bins,
                 bool by_row, std::vector<std::int64_t>& ptr,
                 std::vector<std::int32_t>& pos) {
  ptr.assign(bins + 1, 0);
  for (const auto& e : entries) ++ptr[(by_row ? e.row : e.col) + 1];
  for (int i = 0; i < bins; ++i) ptr[i + 1] += ptr[i];
  pos.resize(entries.size());
  std::vector<std::int64_t> cursor(ptr.begin(), ptr.end() - 1);
  for (std::int32_t k = 0; k < static_cast<std::int32_t>(entries.size()); ++k) {
    int key = by_row ? entries[k].row : entries[k].col;
    pos[cursor[key]++] = k;
  }
}

double clipped(double v, const ClipRange& clip) {
  if (!clip) return v;
  return std::clamp(v, clip->first, clip->second);
}

}  // namespace

ObservationSet::ObservationSet(int rows, int cols,
                               std::vector<Observation> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
  if (rows_ <= 0 || cols_ <= 0)
    throw usage_error("ObservationSet: matrix dimensions must be positive");
  if (entries_.size() >= static_cast<std::size_t>(
                             std::numeric_limits<std::int32_t>::max()))
    throw usage_error("ObservationSet: too many entries");
  for (const auto& e : entries_) {
    if (e.row < 0 || e.row >= rows_ || e.col < 0 || e.col >= cols_) {
      std::ostringstream msg;
      msg << "ObservationSet: entry (" << e.row << "," << e.col
          << ") outside " << rows_ << "x" << cols_ << " matrix";
      throw usage_error(msg.str());
    }
    if (!std::isfinite(e.value))
      throw usage_error("ObservationSet: non-finite rating value");
  }
  build_index(entries_, rows_, true, row_ptr_, row_pos_);
  build_index(entries_, cols_, false, col_ptr_, col_pos_);
}

std::span<const std::int32_t> ObservationSet::row_entries(int i) const {
  if (i < 0 || i >= rows_)
    throw usage_error("ObservationSet::row_entries: row index out of range");
  return {row_pos_.data() + row_ptr_[i],
          static_cast<std::size_t>(row_ptr_[i + 1] - row_ptr_[i])};
}

std::span<const std::int32_t> ObservationSet::col_entries(int j) const {
  if (j < 0 || j >= cols_)
    throw usage_error("ObservationSet::col_entries: column index out of range");
  return {col_pos_.data() + col_ptr_[j],
          static_cast<std::size_t>(col_ptr_[j + 1] - col_ptr_[j])};
}

ObservationSet ObservationSet::transposed() const {
  std::vector<Observation> swapped;
  swapped.reserve(entries_.size());
  for (const auto& e : entries_) swapped.push_back({e.col, e.row, e.value});
  return ObservationSet(cols_, rows_, std::move(swapped));
}

void FactorState::validate() const {
  const int k = rank();
  if (row_factors.cols() != k || col_factors.cols() != k)
    throw usage_error("FactorState: factor widths disagree with scale count");
  if ((column_scales.array() <= 0.0).any())
    throw usage_error("FactorState: column scales must be strictly positive");
}

void validate(const PriorSpec& prior) {
  std::visit(
      [](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, FixedPrior>) {
          if (!(p.gamma0 > 0.0))
            throw usage_error("FixedPrior: gamma0 must be positive");
        } else if constexpr (std::is_same_v<T, InverseGammaPrior>) {
          if (!(p.shape > 0.0) || !(p.rate > 0.0))
            throw usage_error("InverseGammaPrior: shape and rate must be positive");
        } else if constexpr (std::is_same_v<T, GammaPrior>) {
          if (!(p.beta > 0.0))
            throw usage_error("GammaPrior: beta must be positive");
        } else {
          if (!(p.spike > 0.0) || !(p.slab > 0.0))
            throw usage_error("DiscretePrior: spike and slab must be positive");
          // Equality is allowed: the two-point law then collapses to a point
          // mass, which is a useful degenerate case in tests.
          if (!(p.spike <= p.slab))
            throw usage_error("DiscretePrior: spike must not exceed slab");
          if (!(p.slab_prob > 0.0) || !(p.slab_prob < 1.0))
            throw usage_error("DiscretePrior: slab_prob must lie inside (0,1)");
        }
      },
      prior);
}

std::string prior_family(const PriorSpec& prior) {
  return std::visit(
      [](const auto& p) -> std::string {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, FixedPrior>) return "fixed";
        if constexpr (std::is_same_v<T, InverseGammaPrior>) return "invgamma";
        if constexpr (std::is_same_v<T, GammaPrior>) return "gamma";
        return "discrete";
      },
      prior);
}

std::string prior_params(const PriorSpec& prior) {
  std::ostringstream out;
  std::visit(
      [&out](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, FixedPrior>) {
          out << "gamma0=" << p.gamma0;
        } else if constexpr (std::is_same_v<T, InverseGammaPrior>) {
          out << "a=" << p.shape << ";b=" << p.rate;
        } else if constexpr (std::is_same_v<T, GammaPrior>) {
          out << "beta2=" << p.beta * p.beta;
        } else {
          out << "eps=" << p.spike << ";C=" << p.slab << ";p=" << p.slab_prob;
        }
      },
      prior);
  return out.str();
}

std::string describe(const PriorSpec& prior) {
  return prior_family(prior) + "(" + prior_params(prior) + ")";
}

double SamplerConfig::lambda_for(std::int64_t n_observations) const {
  if (lambda) return *lambda;
  return static_cast<double>(n_observations) / (2.0 * noise_sd * noise_sd);
}

void SamplerConfig::validate() const {
  if (rank <= 0) throw usage_error("SamplerConfig: rank must be positive");
  if (iterations <= 0)
    throw usage_error("SamplerConfig: iterations must be positive");
  if (burn_in < 0 || burn_in >= iterations)
    throw usage_error("SamplerConfig: burn_in must lie in [0, iterations)");
  if (thinning <= 0)
    throw usage_error("SamplerConfig: thinning must be positive");
  if (!(noise_sd > 0.0))
    throw usage_error("SamplerConfig: noise_sd must be positive");
  if (lambda && !(*lambda > 0.0))
    throw usage_error("SamplerConfig: lambda must be positive");
}

double PosteriorSummary::value_at(int i, int j) const {
  if (theta_mean) {
    if (i < 0 || i >= theta_mean->rows() || j < 0 || j >= theta_mean->cols())
      throw usage_error("PosteriorSummary::value_at: index out of range");
    return (*theta_mean)(i, j);
  }
  auto it = std::lower_bound(
      cell_means.begin(), cell_means.end(), std::make_pair(i, j),
      [](const CellMean& c, const std::pair<int, int>& key) {
        return std::make_pair(c.row, c.col) < key;
      });
  if (it == cell_means.end() || it->row != i || it->col != j) {
    std::ostringstream msg;
    msg << "PosteriorSummary::value_at: cell (" << i << "," << j
        << ") was not tracked";
    throw usage_error(msg.str());
  }
  return it->value;
}

double predict_entry(const FactorState& state, int i, int j) {
  if (i < 0 || i >= state.row_factors.rows())
    throw usage_error("predict_entry: row index out of range");
  if (j < 0 || j >= state.col_factors.rows())
    throw usage_error("predict_entry: column index out of range");
  return state.row_factors.row(i).dot(state.col_factors.row(j));
}

double rmse(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
    throw usage_error("rmse: dimension mismatch");
  double n = static_cast<double>(estimate.size());
  return (estimate - truth).norm() / std::sqrt(n);
}

namespace {

template <typename Predict>
double holdout_rmse_impl(Predict&& predict, const ObservationSet& test,
                         const ClipRange& clip) {
  if (test.empty()) throw usage_error("holdout_rmse: empty test set");
  double sq = 0.0;
  for (const auto& e : test.entries()) {
    double d = clipped(predict(e.row, e.col), clip) - e.value;
    sq += d * d;
  }
  return std::sqrt(sq / static_cast<double>(test.size()));
}

}  // namespace

double holdout_rmse(const FactorState& state, const ObservationSet& test,
                    ClipRange clip) {
  return holdout_rmse_impl(
      [&state](int i, int j) { return predict_entry(state, i, j); }, test,
      clip);
}

double holdout_rmse(const Eigen::MatrixXd& estimate, const ObservationSet& test,
                    ClipRange clip) {
  if (estimate.rows() < test.rows() || estimate.cols() < test.cols())
    throw usage_error("holdout_rmse: estimate smaller than the test grid");
  return holdout_rmse_impl(
      [&estimate](int i, int j) { return estimate(i, j); }, test, clip);
}

double holdout_rmse(const PosteriorSummary& summary, const ObservationSet& test,
                    ClipRange clip) {
  return holdout_rmse_impl(
      [&summary](int i, int j) { return summary.value_at(i, j); }, test, clip);
}

}  // namespace lowrank
