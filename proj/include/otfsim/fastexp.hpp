#pragma once

#include <cmath>
#include <cstdint>

namespace otfsim {

/// exp(x) for x <= 0, accurate to ~1e-11 relative, several times faster than
/// the libm call. Used in the message-passing inner loops where exponentials
/// of nonpositive log-likelihood differences dominate the runtime. Inputs
/// below -745 (where exp underflows a double) return exactly 0.
inline double fast_exp(double x) {
  if (x < -745.0) return 0.0;
  if (x > 0.0) return std::exp(x);
  // x = k*ln2 + r with |r| <= ln2/2, exp(x) = 2^k * exp(r).
  constexpr double kLog2e = 1.4426950408889634074;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  const double kd = x * kLog2e;
  const int k = static_cast<int>(kd + (kd >= 0.0 ? 0.5 : -0.5));
  const double r = (x - k * kLn2Hi) - k * kLn2Lo;
  // Degree-9 Taylor polynomial of exp on [-ln2/2, ln2/2].
  double p = 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  // Scale by 2^k through the exponent bits; k is in [-1075, 1] here, so
  // denormal results are flushed through the double conversion below.
  if (k < -1021) {
    union {
      std::uint64_t u;
      double d;
    } lo{static_cast<std::uint64_t>(k + 1021 + 1023) << 52};
    return p * lo.d * 0x1.0p-1021;
  }
  union {
    std::uint64_t u;
    double d;
  } sc{static_cast<std::uint64_t>(k + 1023) << 52};
  return p * sc.d;
}

}  // namespace otfsim
