#ifndef STOPTIME_METRICS_HPP
#define STOPTIME_METRICS_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "stoptime/dyadic.hpp"
#include "stoptime/sources.hpp"

namespace stoptime {

// One emitted row of an experiment: a completion of either the quantized
// estimator (estimate set) or the exact-match variant (exact_estimate set),
// together with the oracle values captured at the stop.
//
// oracle_stop is the conditional mean of the next sample given everything
// observed up to the stop; oracle_limit is the conditional mean given the
// state at the stop, the quantity the estimates approach. For every shipped
// source kind a one-step statistic determines both, so they coincide.
struct TraceRecord {
  std::int64_t replicate = 0;
  int n = 0;
  std::int64_t lambda = 0;
  std::optional<double> estimate;
  std::optional<double> exact_estimate;
  std::optional<double> oracle_stop;
  std::optional<double> oracle_limit;
  std::optional<double> gap;
  DyadicValue value_at_stop;
  bool event_an = false;
  bool event_h_prefix = false;
};

// True when the stop value is positive yet below 2^-(n+1): it then shares
// its level-n cell with 0 while having a different conditional-mean future.
// Exact dyadic comparison, no rounding.
bool detect_event_an(const DyadicValue& value_at_stop, int n);

// True when the path opens with the exact values (0, 1). Requires at least
// two samples.
bool detect_event_h_prefix(const std::vector<DyadicValue>& history);

// Total-variation distance between the empirical laws of two value samples,
// computed on the merged exact-value support.
double empirical_tv(const std::vector<DyadicValue>& a,
                    const std::vector<DyadicValue>& b);

struct StationarityReport {
  int level = 0;
  std::int64_t replicates_requested = 0;
  std::int64_t replicates_used = 0;
  double tv_distance = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

// Empirical check that the sample one step after the level-k stop has the
// same distribution as the sample at index 1: runs fresh replicates of the
// source, collects both values from each, and compares their laws by total
// variation. Only kinds with countable alphabets are meaningful here;
// continuous kinds are rejected with std::invalid_argument. Throws
// std::runtime_error when no replicate completes level k within the horizon.
StationarityReport stationarity_check(const SourceSpec& spec, int level,
                                      std::int64_t horizon,
                                      std::int64_t replicates,
                                      std::uint64_t seed,
                                      double threshold = 0.05);

}  // namespace stoptime

#endif
