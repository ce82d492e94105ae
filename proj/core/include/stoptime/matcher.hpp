#ifndef STOPTIME_MATCHER_HPP
#define STOPTIME_MATCHER_HPP

#include <cstddef>
#include <utility>
#include <vector>

namespace stoptime {

// Streaming single-pattern matcher with Knuth-Morris-Pratt failure links.
// feed() consumes one symbol and reports whether a full occurrence of the
// pattern ends at that symbol. Work per symbol is amortized O(1).
template <typename Symbol>
class StreamMatcher {
 public:
  explicit StreamMatcher(std::vector<Symbol> pattern)
      : pattern_(std::move(pattern)), failure_(pattern_.size(), 0) {
    for (std::size_t i = 1; i < pattern_.size(); ++i) {
      std::size_t k = failure_[i - 1];
      while (k > 0 && !(pattern_[i] == pattern_[k])) k = failure_[k - 1];
      if (pattern_[i] == pattern_[k]) ++k;
      failure_[i] = k;
    }
  }

  bool feed(const Symbol& s) {
    while (state_ > 0 && !(s == pattern_[state_])) state_ = failure_[state_ - 1];
    if (s == pattern_[state_]) ++state_;
    if (state_ == pattern_.size()) {
      state_ = failure_[state_ - 1];
      return true;
    }
    return false;
  }

  std::size_t pattern_size() const { return pattern_.size(); }
  std::size_t prefix_matched() const { return state_; }

 private:
  std::vector<Symbol> pattern_;
  std::vector<std::size_t> failure_;
  std::size_t state_ = 0;
};

}  // namespace stoptime

#endif
