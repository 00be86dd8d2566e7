#pragma once

#include <cmath>
#include <numbers>

#include "evtrav/common.hpp"

// Log-gamma, digamma and trigamma for positive real arguments. Each function
// shifts the argument above kAsymptoticFloor with the unit recurrence and then
// evaluates the asymptotic series; absolute error stays below 1e-10 for x >= 1e-3.

namespace evtrav::special
{

inline constexpr double kAsymptoticFloor = 10.0;

template <typename Scalar>
Scalar log_gamma(Scalar x)
{
  require(x > Scalar(0), "log_gamma: argument must be positive");
  Scalar shift = 0;
  while (x < kAsymptoticFloor) {
    shift -= std::log(x);
    x += 1;
  }
  const Scalar inv = Scalar(1) / x;
  const Scalar inv2 = inv * inv;
  const Scalar series =
      inv * (Scalar(1) / 12 +
             inv2 * (Scalar(-1) / 360 +
                     inv2 * (Scalar(1) / 1260 + inv2 * (Scalar(-1) / 1680 + inv2 * (Scalar(1) / 1188)))));
  return shift + (x - Scalar(0.5)) * std::log(x) - x + Scalar(0.5) * std::log(2 * std::numbers::pi_v<Scalar>) +
         series;
}

template <typename Scalar>
Scalar digamma(Scalar x)
{
  require(x > Scalar(0), "digamma: argument must be positive");
  Scalar shift = 0;
  while (x < kAsymptoticFloor) {
    shift -= Scalar(1) / x;
    x += 1;
  }
  const Scalar inv2 = Scalar(1) / (x * x);
  const Scalar series =
      inv2 * (Scalar(1) / 12 -
              inv2 * (Scalar(1) / 120 -
                      inv2 * (Scalar(1) / 252 - inv2 * (Scalar(1) / 240 - inv2 * (Scalar(1) / 132)))));
  return shift + std::log(x) - Scalar(0.5) / x - series;
}

template <typename Scalar>
Scalar trigamma(Scalar x)
{
  require(x > Scalar(0), "trigamma: argument must be positive");
  Scalar shift = 0;
  while (x < kAsymptoticFloor) {
    shift += Scalar(1) / (x * x);
    x += 1;
  }
  const Scalar inv = Scalar(1) / x;
  const Scalar inv2 = inv * inv;
  const Scalar series =
      inv + inv2 / 2 +
      inv * inv2 *
          (Scalar(1) / 6 +
           inv2 * (Scalar(-1) / 30 + inv2 * (Scalar(1) / 42 + inv2 * (Scalar(-1) / 30 + inv2 * (Scalar(5) / 66)))));
  return shift + series;
}

}  // namespace evtrav::special
