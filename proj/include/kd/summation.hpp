#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace kd {

// Neumaier compensated accumulator, used wherever mass totals must be
// conserved across regrouping.
struct NeumaierSum {
  double s = 0.0;
  double c = 0.0;

  void add(double x) {
    double t = s + x;
    if (std::abs(s) >= std::abs(x))
      c += (s - t) + x;
    else
      c += (x - t) + s;
    s = t;
  }

  double value() const { return s + c; }
};

inline double neumaier_sum(std::span<const double> xs) {
  NeumaierSum acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

// Pairwise (tree) summation: sequential runs of at most 256 terms combined
// by recursive halving. All double sums in this library accumulate this way;
// the order is fixed and not configurable.
inline double pairwise_sum(const double* xs, std::size_t n) {
  if (n <= 256) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += xs[i];
    return s;
  }
  std::size_t half = n / 2;
  return pairwise_sum(xs, half) + pairwise_sum(xs + half, n - half);
}

inline double pairwise_sum(std::span<const double> xs) {
  return pairwise_sum(xs.data(), xs.size());
}

}  // namespace kd
