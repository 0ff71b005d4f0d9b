#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lowrank/experiments.hpp"
#include "lowrank/gibbs.hpp"
#include "lowrank/model.hpp"
#include "lowrank/vb.hpp"

namespace lowrank {

enum class RatingsFileFormat {
  TabSeparated,  // user<TAB>item<TAB>rating[<TAB>timestamp]
  DoubleColon,   // user::item::rating::timestamp
  CSVHeader,     // header line, then user,item,rating[,timestamp]
};

RatingsFileFormat ratings_format_from_name(const std::string& name);
std::string ratings_format_name(RatingsFileFormat format);

/// Dense zero-based reindexing of the raw ids, in order of first appearance.
struct IdMaps {
  std::vector<long long> user_ids;  // index -> raw id
  std::vector<long long> item_ids;
  std::unordered_map<long long, int> user_index;  // raw id -> index
  std::unordered_map<long long, int> item_index;
};

struct RatingsData {
  ObservationSet observations;
  IdMaps ids;
};

/// Parse a ratings file; malformed lines are rejected with their line number.
RatingsData parse_ratings(const std::filesystem::path& path,
                          RatingsFileFormat format);

/// Inverse of parse_ratings up to timestamps (written as 0).
std::string serialize_ratings(const RatingsData& data,
                              RatingsFileFormat format);

/// Uniform random partition of the entry positions; round(ratio * n) entries
/// land in the train part. Both parts keep the full grid dimensions.
std::pair<ObservationSet, ObservationSet> train_test_split(
    const ObservationSet& obs, double ratio, std::uint64_t seed);

/// Everything needed to reproduce one run.
struct RunManifest {
  std::string backend = "gibbs";  // "gibbs" or "vb"
  std::optional<std::string> dataset_path;
  std::optional<RatingsFileFormat> dataset_format;
  std::optional<SyntheticSpec> synthetic;
  PriorSpec prior = FixedPrior{1.0};
  SamplerConfig sampler;       // rank/seed/noise shared by both backends
  double vb_tolerance = 1e-4;
  int vb_max_iterations = 100;
  double split_ratio = 0.8;
  std::uint64_t split_seed = 1;
  bool global_mean_offset = false;
  std::string output_dir = ".";

  void validate() const;
};

std::string manifest_json(const RunManifest& manifest);
RunManifest manifest_from_json(const std::string& text);

// -- Bit-stable emission ------------------------------------------------------
// Traces carry 17 significant digits so a read-back reproduces every bit.

std::string trace_gamma_csv(const std::vector<Eigen::VectorXd>& trace);
std::string trace_rmse_csv(const std::vector<double>& trace);
std::string trace_entries_csv(const std::vector<EntryTrace>& traces);
std::vector<EntryTrace> parse_trace_entries_csv(const std::string& text);
std::string acf_csv(const std::vector<EntryTrace>& traces, int max_lag);
std::string theta_mean_csv(const PosteriorSummary& summary);
std::string factor_csv(const Eigen::MatrixXd& factors);
Eigen::MatrixXd parse_factor_csv(const std::string& text);
std::string id_map_csv(const std::vector<long long>& ids);
std::vector<long long> parse_id_map_csv(const std::string& text);

void write_text_file(const std::filesystem::path& path,
                     const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

/// CLI entry point; returns the process exit code (0 ok, 1 usage, 2 data,
/// 3 numerical).
int run_cli(int argc, const char* const* argv);

}  // namespace lowrank
