#pragma once

// Serial reference implementations: straightforward double loops with plain
// sequential accumulation, no OpenMP, no blocking. Tests oracle the fast
// paths against these; tools/bench_kernels compares their speed.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "kd/kernel.hpp"
#include "kd/points.hpp"

namespace kd::reference {

template <class Kernel>
double kappa_exact(const Kernel& k, const WeightedPointSet& P, const WeightedPointSet& Q) {
  require(P.dim() == Q.dim(), errc::dimension_mismatch, "kappa_exact: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i)
    for (std::size_t j = 0; j < Q.size(); ++j)
      s += P.mass(i) * Q.mass(j) * k.eval(P.point(i), Q.point(j));
  return s;
}

template <class Kernel>
double kernel_distance_sq(const Kernel& k, const WeightedPointSet& P, const WeightedPointSet& Q) {
  double v = kappa_exact(k, P, P) + kappa_exact(k, Q, Q) - 2.0 * kappa_exact(k, P, Q);
  return v < 0.0 ? 0.0 : v;
}

// Plain serial Fourier embedding, one pass, no chunking.
inline std::vector<double> rff_embed_values(double sigma, const std::vector<double>& freqs,
                                            std::size_t rho, const WeightedPointSet& P) {
  (void)sigma;
  std::vector<double> out(rho, 0.0);
  const int d = P.dim();
  const double scale = std::sqrt(2.0 / static_cast<double>(rho));
  for (std::size_t i = 0; i < P.size(); ++i) {
    auto p = P.point(i);
    const double w = P.mass(i) * scale;
    for (std::size_t f = 0; f < rho / 2; ++f) {
      const double* om = freqs.data() + f * d;
      double dot = 0.0;
      for (int t = 0; t < d; ++t) dot += om[t] * p[t];
      out[2 * f] += w * std::cos(dot);
      out[2 * f + 1] += w * std::sin(dot);
    }
  }
  return out;
}

// max_q |kappa_bar_P(P,q) - kappa_bar_S(S,q)| over the supplied queries.
inline double kernel_discrepancy(const GaussianKernel& k, const WeightedPointSet& P,
                                 const WeightedPointSet& S,
                                 const std::vector<double>& queries, int dim) {
  double wp = P.total_mass(), ws = S.total_mass();
  double best = 0.0;
  std::size_t nq = queries.size() / dim;
  for (std::size_t qi = 0; qi < nq; ++qi) {
    std::span<const double> q(queries.data() + qi * dim, dim);
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) a += P.mass(i) * k.eval(P.point(i), q);
    for (std::size_t i = 0; i < S.size(); ++i) b += S.mass(i) * k.eval(S.point(i), q);
    best = std::max(best, std::abs(a / wp - b / ws));
  }
  return best;
}

}  // namespace kd::reference
