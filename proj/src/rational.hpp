#pragma once

#include <cstdint>
#include <numeric>
#include <string>

#include "error.hpp"

namespace mswa {

// Exact reduced fraction with a positive denominator. Window budgets and
// budget ratios are small enough that long long never overflows here.
struct Rational {
  long long num = 0;
  long long den = 1;

  static Rational of(long long num, long long den) {
    if (den == 0) fail(ErrorCode::InvalidArgument, "Rational: zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    const long long g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
    return Rational{num, den};
  }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }

  std::string str() const {
    if (den == 1) return std::to_string(num);
    return std::to_string(num) + "/" + std::to_string(den);
  }

  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num == b.num && a.den == b.den;
  }
};

}  // namespace mswa
