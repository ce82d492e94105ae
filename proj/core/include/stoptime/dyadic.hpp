#ifndef STOPTIME_DYADIC_HPP
#define STOPTIME_DYADIC_HPP

#include <cstdint>
#include <string>

namespace stoptime {

/**
 * A sample value: either an exact dyadic rational mantissa*2^exponent or a
 * plain binary64 real.
 *
 * The exact form is normalized (mantissa odd, or zero with exponent 0) and
 * supports exponents far outside the binary64 range, which is what keeps
 * values like 2^(-2^40-1) representable without underflow.  The inexact form
 * tags values drawn from continuous laws (Gaussian, uniform); since every
 * finite binary64 is itself a dyadic rational, comparisons and quantization
 * treat both forms through one exact code path and never round.
 *
 * to_double() is the only lossy operation and is meant for reporting:
 * exact values beyond the binary64 range flush to 0 or +/-inf.
 */
class DyadicValue {
 public:
  /// Exact zero.
  constexpr DyadicValue() = default;

  /// Exact mantissa*2^exponent, normalized on construction.
  static DyadicValue exact(std::int64_t mantissa, std::int64_t exponent);

  /// Exact integer value.
  static DyadicValue from_integer(std::int64_t v) { return exact(v, 0); }

  /// Exact power of two, 2^e.
  static DyadicValue pow2(std::int64_t e) { return exact(1, e); }

  /// Inexact real. Throws std::invalid_argument on NaN/inf.
  static DyadicValue inexact(double x);

  /// Exact value equal to the given finite double (every finite binary64
  /// is m*2^e with |m| < 2^53). Throws std::invalid_argument on NaN/inf.
  static DyadicValue exact_from_double(double x);

  bool is_exact() const { return exact_; }
  bool is_zero() const;

  /// Normalized mantissa/exponent. For an inexact value these are the
  /// decomposition of the underlying double.
  std::int64_t mantissa() const;
  std::int64_t exponent() const;

  /// Nearest binary64 (exact values beyond range flush to 0 / +-inf).
  double to_double() const;

  /// Three-way numeric comparison; never rounds.
  int compare(const DyadicValue& other) const;

  bool operator==(const DyadicValue& o) const { return compare(o) == 0; }
  bool operator!=(const DyadicValue& o) const { return compare(o) != 0; }
  bool operator<(const DyadicValue& o) const { return compare(o) < 0; }
  bool operator<=(const DyadicValue& o) const { return compare(o) <= 0; }
  bool operator>(const DyadicValue& o) const { return compare(o) > 0; }
  bool operator>=(const DyadicValue& o) const { return compare(o) >= 0; }

  /**
   * Serialized form: shortest round-trip decimal when the value is inexact
   * or fits a binary64 exactly, otherwise the literal "m*2^e".
   */
  std::string to_string() const;

  /// Inverse of to_string(); accepts decimals and "m*2^e" literals.
  static DyadicValue parse(const std::string& text);

 private:
  DyadicValue(bool exact, std::int64_t m, std::int64_t e, double r)
      : exact_(exact), mantissa_(m), exponent_(e), real_(r) {}

  bool exact_ = true;
  std::int64_t mantissa_ = 0;
  std::int64_t exponent_ = 0;
  double real_ = 0.0;
};

}  // namespace stoptime

#endif  // STOPTIME_DYADIC_HPP
