#pragma once

// Independent brute-force oracles and instance generators for the test
// suites. These stay deliberately naive: separate distance/exp code paths
// from the library kernels they check.

#include <cmath>
#include <cstdint>
#include <vector>

#include "kd/points.hpp"
#include "kd/rng.hpp"

namespace oracle {

inline double gauss(const std::vector<double>& a, const std::vector<double>& b, double sigma) {
  double d2 = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) d2 += (a[t] - b[t]) * (a[t] - b[t]);
  return std::exp(-d2 / (sigma * sigma));
}

inline std::vector<double> pt(const kd::WeightedPointSet& P, std::size_t i) {
  auto s = P.point(i);
  return {s.begin(), s.end()};
}

inline double kappa(const kd::WeightedPointSet& P, const kd::WeightedPointSet& Q, double sigma) {
  double s = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i)
    for (std::size_t j = 0; j < Q.size(); ++j)
      s += P.mass(i) * Q.mass(j) * gauss(pt(P, i), pt(Q, j), sigma);
  return s;
}

inline double dk2(const kd::WeightedPointSet& P, const kd::WeightedPointSet& Q, double sigma) {
  return kappa(P, P, sigma) + kappa(Q, Q, sigma) - 2.0 * kappa(P, Q, sigma);
}

// Uniform points in [0, side]^d; unit masses unless mass_jitter is set.
inline kd::WeightedPointSet random_set(std::size_t n, int d, double side, std::uint64_t seed,
                                       double mass_jitter = 0.0) {
  kd::rng::Stream rs(seed, kd::rng::streams::tests);
  kd::WeightedPointSet P(d);
  P.reserve(n);
  std::vector<double> x(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (int t = 0; t < d; ++t) x[t] = side * rs.next_double();
    double w = 1.0 + mass_jitter * rs.next_double();
    P.add(x, w);
  }
  return P;
}

}  // namespace oracle
