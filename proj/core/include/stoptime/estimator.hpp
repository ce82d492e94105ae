#ifndef STOPTIME_ESTIMATOR_HPP
#define STOPTIME_ESTIMATOR_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "stoptime/dyadic.hpp"
#include "stoptime/matcher.hpp"
#include "stoptime/quantize.hpp"

namespace stoptime {

// Thrown when an internal consistency check fails (streaming matcher
// disagreeing with the reference scanner, an impossible match position,
// stop times out of order). Maps to process exit code 3.
struct InvariantError : std::logic_error {
  using std::logic_error::logic_error;
};

// One estimate becoming available: at sample index stop_time the level-n
// recurrence completed and the running average over the n recorded terms is
// emitted.
struct LevelCompletion {
  int n = 0;
  std::int64_t stop_time = 0;
  double estimate = 0.0;
  DyadicValue value_at_stop;
};

// Symbol policy for the quantized scheme: match on level-n cell indices,
// average cell representatives.
struct QuantizedMatchPolicy {
  using Symbol = std::int64_t;
  static Symbol project(const DyadicValue& x, int level) {
    return cell_index(x, level);
  }
  static double term(const DyadicValue& x, int level) {
    return quantize(x, level).to_double();
  }
};

// Symbol policy for the exact-match variant: match on raw values, average
// raw values. Intended for sources with countable alphabets.
struct ExactMatchPolicy {
  using Symbol = DyadicValue;
  static Symbol project(const DyadicValue& x, int) { return x; }
  static double term(const DyadicValue& x, int) { return x.to_double(); }
};

/**
 * Streaming estimator of the conditional mean along recurrence stopping
 * times.
 *
 * Feed the samples in order. The estimator maintains a ladder of stopping
 * times: stop 0 is index 0, and stop n is the first index at which the
 * level-n projection of the initial block (indices 0..stop_{n-1}) reappears
 * as a window starting at index >= 1. When stop n completes, the emitted
 * estimate is the average of the terms recorded one step after each earlier
 * stop, and the matcher is rebuilt one level deeper over the longer prefix,
 * replaying the already-seen symbols.
 *
 * Structural guarantees, checked at runtime: stop times are strictly
 * increasing with stop n >= n, and the replay of old symbols can never
 * complete a match (the new pattern is longer than the replayed range), so
 * at most one completion is emitted per advance().
 */
template <typename Policy>
class RecurrenceEstimator {
 public:
  explicit RecurrenceEstimator(int max_level) : max_level_(max_level) {
    if (max_level < 1)
      throw std::invalid_argument("RecurrenceEstimator: max_level < 1");
  }

  // Consume the next sample; report a completion if one ends here.
  std::optional<LevelCompletion> advance(const DyadicValue& x) {
    ++time_;
    history_.push_back(x);
    if (done_) return std::nullopt;
    if (time_ == 0) {
      rebuild_matcher();
      pending_term_level_ = 0;
      return std::nullopt;
    }
    if (pending_term_level_ >= 0) {
      sum_ += Policy::term(x, pending_term_level_);
      pending_term_level_ = -1;
    }
    if (!matcher_->feed(Policy::project(x, level_))) return std::nullopt;

    int n = level_;
    std::int64_t prev = n == 1 ? 0 : stops_.back();
    if (time_ <= prev || time_ < n)
      throw InvariantError("stop time out of order");
    stops_.push_back(time_);
    LevelCompletion done{n, time_, sum_ / n, x};
    if (n == max_level_) {
      done_ = true;
      matcher_.reset();
      return done;
    }
    ++level_;
    pending_term_level_ = n;
    rebuild_matcher();
    return done;
  }

  bool done() const { return done_; }
  int active_level() const { return level_; }
  std::int64_t time() const { return time_; }
  const std::vector<DyadicValue>& history() const { return history_; }

  // Completed stop times, index 0 holding stop 1.
  const std::vector<std::int64_t>& stop_times() const { return stops_; }

  // The latest backward window (X_stop, X_{stop-1}, ..., X_{stop-depth}).
  // Requires a completion and depth <= latest stop time.
  PastVector backward_snapshot(std::int64_t depth) const {
    if (stops_.empty())
      throw std::logic_error("backward_snapshot: no completion yet");
    std::int64_t stop = stops_.back();
    if (depth < 0 || depth > stop)
      throw std::out_of_range("backward_snapshot: depth exceeds stop time");
    PastVector past;
    past.reserve(static_cast<std::size_t>(depth) + 1);
    for (std::int64_t i = 0; i <= depth; ++i)
      past.push_back(history_[static_cast<std::size_t>(stop - i)]);
    return past;
  }

 private:
  void rebuild_matcher() {
    std::int64_t prefix_end = level_ == 1 ? 0 : stops_.back();
    std::vector<typename Policy::Symbol> pattern;
    pattern.reserve(static_cast<std::size_t>(prefix_end) + 1);
    for (std::int64_t i = 0; i <= prefix_end; ++i)
      pattern.push_back(
          Policy::project(history_[static_cast<std::size_t>(i)], level_));
    matcher_.emplace(std::move(pattern));
    for (std::int64_t i = 1; i <= prefix_end; ++i)
      if (matcher_->feed(
              Policy::project(history_[static_cast<std::size_t>(i)], level_)))
        throw InvariantError("match completed during replay");
  }

  int max_level_;
  int level_ = 1;
  std::int64_t time_ = -1;
  bool done_ = false;
  double sum_ = 0.0;
  int pending_term_level_ = -1;
  std::vector<DyadicValue> history_;
  std::vector<std::int64_t> stops_;
  std::optional<StreamMatcher<typename Policy::Symbol>> matcher_;
};

using QuantizedEstimator = RecurrenceEstimator<QuantizedMatchPolicy>;
using ExactMatchEstimator = RecurrenceEstimator<ExactMatchPolicy>;

// Reference scanner for the next stop time: the smallest index lambda =
// prev_stop + t with t >= 1 whose level-projected window (indices
// t..lambda) equals the projected prefix (indices 0..prev_stop). Returns -1
// when no recurrence lies within the history. Brute force, used as the
// independent oracle for the streaming matcher.
std::int64_t naive_next_stop(const std::vector<DyadicValue>& history,
                             std::int64_t prev_stop, int level);

// Same scan with raw-value equality instead of cell equality.
std::int64_t naive_next_stop_exact(const std::vector<DyadicValue>& history,
                                   std::int64_t prev_stop);

// Recompute the level-n estimate offline from recorded stop times: the
// average over j < n of the term at index stop_j + 1. Matches the streamed
// value bit for bit (same summation order).
double recompute_estimate(const std::vector<DyadicValue>& history,
                          const std::vector<std::int64_t>& stops, int n,
                          bool exact_terms);

}  // namespace stoptime

#endif
