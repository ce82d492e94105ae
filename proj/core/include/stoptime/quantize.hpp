#ifndef STOPTIME_QUANTIZE_HPP
#define STOPTIME_QUANTIZE_HPP

#include <cstdint>
#include <vector>

#include "stoptime/dyadic.hpp"

namespace stoptime {

// A half-open dyadic interval [index * 2^-level, (index + 1) * 2^-level).
// The level-k cells tile the real line; level k+1 refines level k by halving.
struct Cell {
  std::int64_t index = 0;
  int level = 0;

  friend bool operator==(const Cell&, const Cell&) = default;
};

// A sequence of cell indices sharing one resolution level. Two blocks are
// equal exactly when the level and every index agree.
struct QuantizedBlock {
  int level = 0;
  std::vector<std::int64_t> indices;

  friend bool operator==(const QuantizedBlock&, const QuantizedBlock&) =
      default;
};

// A finite past read backwards: element 0 is the most recent value, element i
// the value i steps earlier.
using PastVector = std::vector<DyadicValue>;

// Index of the level-k cell containing `value`, i.e. floor(value * 2^k).
// Exact for both exact and inexact values; boundary points fall in the
// right-hand cell. Throws std::overflow_error when the index does not fit
// in 64 bits.
std::int64_t cell_index(const DyadicValue& value, int level);

Cell locate(const DyadicValue& value, int level);

// Left endpoint of the cell: the point every member of the cell is mapped to.
// Always inside the half-open cell and within 2^-level of every member.
DyadicValue representative(const Cell& cell);

DyadicValue quantize(const DyadicValue& value, int level);

QuantizedBlock quantize_block(const std::vector<DyadicValue>& values,
                              int level);

// Exponentially discounted distance between two equally deep pasts:
// sum over i of 2^-(i+1) * |a_i - b_i| / (1 + |a_i - b_i|). The reported
// truncation bound 2^-depth dominates whatever the dropped infinite tail
// could have contributed.
struct PastDistance {
  double value = 0.0;
  double truncation_bound = 0.0;
};

// Throws std::invalid_argument when the depths differ.
PastDistance past_distance(const PastVector& a, const PastVector& b);

}  // namespace stoptime

#endif
