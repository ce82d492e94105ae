#include "stoptime/quantize.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace stoptime {

std::int64_t cell_index(const DyadicValue& value, int level) {
  if (level < 0) throw std::invalid_argument("cell_index: negative level");
  DyadicValue v = value.is_exact()
                      ? value
                      : DyadicValue::exact_from_double(value.to_double());
  std::int64_t m = v.mantissa();
  if (m == 0) return 0;
  std::int64_t s = v.exponent() + level;
  if (s >= 0) {
    if (s > 63) throw std::overflow_error("cell_index: index overflow");
    __int128 r = static_cast<__int128>(m) << s;
    if (r < std::numeric_limits<std::int64_t>::min() ||
        r > std::numeric_limits<std::int64_t>::max())
      throw std::overflow_error("cell_index: index overflow");
    return static_cast<std::int64_t>(r);
  }
  // Arithmetic right shift rounds toward -infinity, which is exactly
  // floor(m * 2^s) for s < 0.
  if (s <= -64) return m < 0 ? -1 : 0;
  return m >> -s;
}

Cell locate(const DyadicValue& value, int level) {
  return Cell{cell_index(value, level), level};
}

DyadicValue representative(const Cell& cell) {
  return DyadicValue::exact(cell.index, -static_cast<std::int64_t>(cell.level));
}

DyadicValue quantize(const DyadicValue& value, int level) {
  return representative(locate(value, level));
}

QuantizedBlock quantize_block(const std::vector<DyadicValue>& values,
                              int level) {
  QuantizedBlock block;
  block.level = level;
  block.indices.reserve(values.size());
  for (const auto& v : values) block.indices.push_back(cell_index(v, level));
  return block;
}

PastDistance past_distance(const PastVector& a, const PastVector& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("past_distance: depth mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = std::fabs(a[i].to_double() - b[i].to_double());
    sum += std::ldexp(d / (1.0 + d), -static_cast<int>(i) - 1);
  }
  return PastDistance{sum, std::ldexp(1.0, -static_cast<int>(a.size()))};
}

}  // namespace stoptime
