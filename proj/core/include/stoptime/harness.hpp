#ifndef STOPTIME_HARNESS_HPP
#define STOPTIME_HARNESS_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stoptime/metrics.hpp"
#include "stoptime/quantize.hpp"
#include "stoptime/sources.hpp"

namespace stoptime {

inline constexpr const char* kArtifactVersion = "0.1.0";
inline constexpr int kCsvSchemaVersion = 1;

// Malformed configuration (unknown key, wrong type, out-of-range value).
// Maps to process exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A replicate ran out of samples before completing the demanded level.
// Maps to process exit code 2.
struct BudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string name = "custom";
  SourceSpec source;
  std::uint64_t seed = 1;
  std::int64_t replicates = 1;
  std::int64_t budget = 100000;  // samples per replicate
  int max_level = 4;
  int min_level = 0;  // demand at least this level per replicate
  std::int64_t snapshot_depth = 0;  // 0 disables snapshots.csv
  bool run_exact_variant = false;
  bool verify_matcher = false;  // cross-check stops against the naive scanner
  std::optional<int> stationarity_level;
  int threads = 0;  // 0 = hardware concurrency
};

// Strict parse: unknown keys, wrong types, and out-of-range values all throw
// ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config_file(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& config);

// The documented experiment families. Known names: convergence-markov,
// convergence-iid, continuity-ar1, divergence-counterexample. Throws
// ConfigError for anything else.
ExperimentConfig preset(const std::string& name);

// Backward window recorded at a completion, with the discounted distance to
// the window of the previous completion of the same replicate.
struct SnapshotRecord {
  std::int64_t replicate = 0;
  int n = 0;
  std::int64_t lambda = 0;
  std::int64_t depth = 0;
  std::optional<double> distance_to_previous;
  PastVector window;
};

struct ReplicateResult {
  std::vector<TraceRecord> quantized_rows;
  std::vector<TraceRecord> exact_rows;
  std::vector<SnapshotRecord> snapshots;
  int deepest_level = 0;
  int deepest_level_exact = 0;
  std::int64_t samples_used = 0;
  // Stationarity material: the sample at index 1 and the sample one step
  // after the stop at the configured level, when both exist.
  std::optional<DyadicValue> sample_at_one;
  std::optional<DyadicValue> sample_after_stop;
};

// Run one seeded replicate to budget/max_level. Throws BudgetError when
// min_level is demanded but not reached, InvariantError if verification
// fails.
ReplicateResult run_replicate(const ExperimentConfig& config,
                              std::int64_t replicate);

struct LevelAggregate {
  int n = 0;
  std::int64_t count = 0;
  std::int64_t count_exact = 0;
  std::optional<double> mean_gap;
  std::optional<double> median_gap;
  std::optional<double> mean_estimate;
  std::optional<double> mean_lambda;
  std::optional<double> mean_gap_exact;
  std::optional<double> median_gap_exact;
  std::optional<double> mean_estimate_exact;
  std::optional<double> event_an_frequency;
  std::optional<double> event_an_given_h_frequency;
};

struct SummaryReport {
  std::int64_t replicates = 0;
  std::int64_t rows = 0;
  double coverage = 0.8;
  // Deepest level reached by at least `coverage` of the replicates, per
  // estimator; -1 when no level qualifies.
  int deepest_common_level = -1;
  int deepest_common_level_exact = -1;
  std::vector<LevelAggregate> levels;
  std::optional<StationarityReport> stationarity;
};

// Aggregate rows; replicate count is taken from the distinct replicate ids.
SummaryReport summarize(const std::vector<TraceRecord>& rows,
                        double coverage = 0.8);

nlohmann::json summary_to_json(const SummaryReport& report);

// CSV serialization. The column set is fixed; optional fields serialize as
// empty, exact dyadic values as shortest decimals or "m*2^e" literals,
// booleans as 1/0. Output is byte-stable for identical inputs.
std::string trace_csv_header();
std::string to_csv_row(const TraceRecord& record);
void write_trace_csv(const std::filesystem::path& path,
                     const std::vector<TraceRecord>& rows);
std::vector<TraceRecord> read_trace_csv(const std::filesystem::path& path);

struct ExperimentOutput {
  std::filesystem::path directory;
  std::vector<TraceRecord> rows;
  SummaryReport summary;
};

// Run all replicates (worker threads over a shared queue, results reassembled
// in replicate order), then write trace.csv, summary.json, metadata.json and,
// when snapshots are enabled, snapshots.csv into out_dir. With
// per_seed_files, each replicate's rows are also written under
// out_dir/per_seed/.
ExperimentOutput run_experiment(const ExperimentConfig& config,
                                const std::filesystem::path& out_dir,
                                bool per_seed_files = false);

}  // namespace stoptime

#endif
