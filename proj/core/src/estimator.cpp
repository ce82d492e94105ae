#include "stoptime/estimator.hpp"

namespace stoptime {

namespace {

template <typename Equal>
std::int64_t scan(const std::vector<DyadicValue>& history,
                  std::int64_t prev_stop, Equal&& equal) {
  auto size = static_cast<std::int64_t>(history.size());
  if (prev_stop < 0 || prev_stop >= size)
    throw std::invalid_argument("naive_next_stop: prev_stop out of range");
  for (std::int64_t t = 1; prev_stop + t < size; ++t) {
    bool hit = true;
    for (std::int64_t i = 0; i <= prev_stop; ++i) {
      if (!equal(history[static_cast<std::size_t>(t + i)],
                 history[static_cast<std::size_t>(i)])) {
        hit = false;
        break;
      }
    }
    if (hit) return prev_stop + t;
  }
  return -1;
}

}  // namespace

std::int64_t naive_next_stop(const std::vector<DyadicValue>& history,
                             std::int64_t prev_stop, int level) {
  return scan(history, prev_stop,
              [level](const DyadicValue& a, const DyadicValue& b) {
                return cell_index(a, level) == cell_index(b, level);
              });
}

std::int64_t naive_next_stop_exact(const std::vector<DyadicValue>& history,
                                   std::int64_t prev_stop) {
  return scan(history, prev_stop,
              [](const DyadicValue& a, const DyadicValue& b) {
                return a == b;
              });
}

double recompute_estimate(const std::vector<DyadicValue>& history,
                          const std::vector<std::int64_t>& stops, int n,
                          bool exact_terms) {
  if (n < 1 || static_cast<std::size_t>(n) > stops.size() + 1)
    throw std::invalid_argument("recompute_estimate: level out of range");
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    std::int64_t stop = j == 0 ? 0 : stops[static_cast<std::size_t>(j - 1)];
    const DyadicValue& x = history.at(static_cast<std::size_t>(stop + 1));
    sum += exact_terms ? ExactMatchPolicy::term(x, j)
                       : QuantizedMatchPolicy::term(x, j);
  }
  return sum / n;
}

}  // namespace stoptime
