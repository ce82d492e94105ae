#include "stoptime/dyadic.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>

namespace stoptime {

namespace {

constexpr std::int64_t kMaxExponent = std::int64_t{1} << 62;

// (mantissa, exponent) of any DyadicValue, decomposing doubles on demand.
struct Parts {
  std::int64_t m;
  std::int64_t e;
};

Parts decompose(double x) {
  if (x == 0.0) return {0, 0};
  int exp2 = 0;
  double frac = std::frexp(x, &exp2);  // x = frac * 2^exp2, |frac| in [0.5, 1)
  auto m = static_cast<std::int64_t>(std::ldexp(frac, 53));
  std::int64_t e = exp2 - 53;
  int tz = std::countr_zero(static_cast<std::uint64_t>(m < 0 ? -m : m));
  return {m >> tz, e + tz};
}

int sign_of(std::int64_t m) { return m < 0 ? -1 : (m > 0 ? 1 : 0); }

int bit_width_abs(std::int64_t m) {
  auto a = static_cast<std::uint64_t>(m < 0 ? -m : m);
  return std::bit_width(a);
}

}  // namespace

DyadicValue DyadicValue::exact(std::int64_t mantissa, std::int64_t exponent) {
  if (mantissa == 0) return DyadicValue(true, 0, 0, 0.0);
  if (mantissa == std::numeric_limits<std::int64_t>::min())
    throw std::out_of_range("DyadicValue: mantissa out of range");
  int tz = std::countr_zero(
      static_cast<std::uint64_t>(mantissa < 0 ? -mantissa : mantissa));
  mantissa >>= tz;
  exponent += tz;
  if (exponent >= kMaxExponent || exponent <= -kMaxExponent)
    throw std::out_of_range("DyadicValue: exponent out of range");
  return DyadicValue(true, mantissa, exponent, 0.0);
}

DyadicValue DyadicValue::inexact(double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("DyadicValue: non-finite");
  return DyadicValue(false, 0, 0, x);
}

DyadicValue DyadicValue::exact_from_double(double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("DyadicValue: non-finite");
  Parts p = decompose(x);
  return DyadicValue(true, p.m, p.e, 0.0);
}

bool DyadicValue::is_zero() const {
  return exact_ ? mantissa_ == 0 : real_ == 0.0;
}

std::int64_t DyadicValue::mantissa() const {
  return exact_ ? mantissa_ : decompose(real_).m;
}

std::int64_t DyadicValue::exponent() const {
  return exact_ ? exponent_ : decompose(real_).e;
}

double DyadicValue::to_double() const {
  if (!exact_) return real_;
  if (mantissa_ == 0) return 0.0;
  // ldexp saturates cleanly once the exponent is clamped into int range.
  auto e = exponent_ < -4000 ? -4000 : (exponent_ > 4000 ? 4000 : exponent_);
  return std::ldexp(static_cast<double>(mantissa_), static_cast<int>(e));
}

int DyadicValue::compare(const DyadicValue& other) const {
  Parts a = exact_ ? Parts{mantissa_, exponent_} : decompose(real_);
  Parts b = other.exact_ ? Parts{other.mantissa_, other.exponent_}
                         : decompose(other.real_);
  int sa = sign_of(a.m), sb = sign_of(b.m);
  if (sa != sb) return sa < sb ? -1 : 1;
  if (sa == 0) return 0;
  // Same nonzero sign: compare floor(log2|v|) = e + bitwidth(|m|) - 1 first;
  // only when those tie can the exponents be close enough to align in 128 bits.
  std::int64_t la = a.e + bit_width_abs(a.m);
  std::int64_t lb = b.e + bit_width_abs(b.m);
  if (la != lb) return (la < lb) == (sa > 0) ? -1 : 1;
  std::int64_t d = a.e - b.e;  // |d| <= 63 here
  __int128 ma = a.m, mb = b.m;
  if (d >= 0)
    ma <<= d;
  else
    mb <<= -d;
  if (ma == mb) return 0;
  return ma < mb ? -1 : 1;
}

std::string DyadicValue::to_string() const {
  char buf[64];
  if (!exact_) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, real_);
    return std::string(buf, end);
  }
  if (mantissa_ == 0) return "0";
  // Prefer decimal when a binary64 holds the value exactly.
  if (bit_width_abs(mantissa_) <= 53 && exponent_ > -1074 && exponent_ < 971) {
    double d = std::ldexp(static_cast<double>(mantissa_),
                          static_cast<int>(exponent_));
    if (std::isfinite(d) && d != 0.0) {
      Parts back = decompose(d);
      if (back.m == mantissa_ && back.e == exponent_) {
        auto [end, ec] = std::to_chars(buf, buf + sizeof buf, d);
        return std::string(buf, end);
      }
    }
  }
  return std::to_string(mantissa_) + "*2^" + std::to_string(exponent_);
}

DyadicValue DyadicValue::parse(const std::string& text) {
  auto caret = text.find("*2^");
  if (caret != std::string::npos) {
    std::int64_t m = 0, e = 0;
    const char* b = text.data();
    auto r1 = std::from_chars(b, b + caret, m);
    if (r1.ec != std::errc{} || r1.ptr != b + caret)
      throw std::invalid_argument("DyadicValue: bad literal: " + text);
    const char* eb = b + caret + 3;
    auto r2 = std::from_chars(eb, b + text.size(), e);
    if (r2.ec != std::errc{} || r2.ptr != b + text.size())
      throw std::invalid_argument("DyadicValue: bad literal: " + text);
    return exact(m, e);
  }
  double d = 0.0;
  auto r = std::from_chars(text.data(), text.data() + text.size(), d);
  if (r.ec != std::errc{} || r.ptr != text.data() + text.size())
    throw std::invalid_argument("DyadicValue: bad number: " + text);
  return exact_from_double(d);
}

}  // namespace stoptime
