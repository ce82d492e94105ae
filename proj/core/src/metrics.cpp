#include "stoptime/metrics.hpp"

#include <cstdlib>
#include <map>
#include <stdexcept>

#include "stoptime/estimator.hpp"

namespace stoptime {

bool detect_event_an(const DyadicValue& value_at_stop, int n) {
  if (n < 0) throw std::invalid_argument("detect_event_an: negative level");
  if (value_at_stop.is_zero() || value_at_stop < DyadicValue())
    return false;
  return value_at_stop < DyadicValue::pow2(-(static_cast<std::int64_t>(n) + 1));
}

bool detect_event_h_prefix(const std::vector<DyadicValue>& history) {
  if (history.size() < 2)
    throw std::invalid_argument("detect_event_h_prefix: need two samples");
  return history[0] == DyadicValue::from_integer(0) &&
         history[1] == DyadicValue::from_integer(1);
}

double empirical_tv(const std::vector<DyadicValue>& a,
                    const std::vector<DyadicValue>& b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("empirical_tv: empty sample");
  struct Less {
    bool operator()(const DyadicValue& x, const DyadicValue& y) const {
      return x.compare(y) < 0;
    }
  };
  std::map<DyadicValue, std::pair<std::int64_t, std::int64_t>, Less> counts;
  for (const auto& v : a) counts[v].first++;
  for (const auto& v : b) counts[v].second++;
  double tv = 0.0;
  for (const auto& [value, c] : counts) {
    double pa = static_cast<double>(c.first) / static_cast<double>(a.size());
    double pb = static_cast<double>(c.second) / static_cast<double>(b.size());
    tv += std::abs(pa - pb);
  }
  return 0.5 * tv;
}

StationarityReport stationarity_check(const SourceSpec& spec, int level,
                                      std::int64_t horizon,
                                      std::int64_t replicates,
                                      std::uint64_t seed, double threshold) {
  if (spec.kind == SourceSpec::Kind::ar1 ||
      spec.kind == SourceSpec::Kind::iid_uniform)
    throw std::invalid_argument(
        "stationarity_check: source has no countable alphabet");
  if (level < 1) throw std::invalid_argument("stationarity_check: level < 1");
  if (horizon < 2)
    throw std::invalid_argument("stationarity_check: horizon too small");
  if (replicates < 1)
    throw std::invalid_argument("stationarity_check: no replicates");

  std::vector<DyadicValue> after_stop;
  std::vector<DyadicValue> at_one;
  for (std::int64_t r = 0; r < replicates; ++r) {
    auto source = make_source(spec, Rng::mix(seed, static_cast<std::uint64_t>(r)));
    QuantizedEstimator est(level);
    for (std::int64_t t = 0; t < horizon; ++t) {
      est.advance(source->next());
      if (est.done() && est.time() > est.stop_times().back()) break;
    }
    if (!est.done()) continue;
    std::int64_t stop = est.stop_times().back();
    const auto& history = est.history();
    if (static_cast<std::int64_t>(history.size()) <= stop + 1) continue;
    after_stop.push_back(history[static_cast<std::size_t>(stop + 1)]);
    at_one.push_back(history[1]);
  }
  if (after_stop.empty())
    throw std::runtime_error("stationarity_check: no replicate completed");

  StationarityReport report;
  report.level = level;
  report.replicates_requested = replicates;
  report.replicates_used = static_cast<std::int64_t>(after_stop.size());
  report.tv_distance = empirical_tv(after_stop, at_one);
  report.threshold = threshold;
  report.pass = report.tv_distance < threshold;
  return report;
}

}  // namespace stoptime
