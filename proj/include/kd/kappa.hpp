#pragma once

#include <algorithm>
#include <cmath>
#include <type_traits>
#include <vector>

#include "kd/kernel.hpp"
#include "kd/points.hpp"
#include "kd/summation.hpp"

namespace kd {

namespace detail {

// One row of the kappa double sum: sum_q K(p_i, q) nu(q), blocked so the
// exp() calls vectorize. Row accumulation is sequential within 256-element
// blocks, blocks combined pairwise.
inline double kappa_row_gaussian(const GaussianKernel& k, const double* pi, const double* qs,
                                 const double* nu, std::size_t nq, int dim) {
  const double inv_s2 = 1.0 / (k.sigma * k.sigma);
  constexpr std::size_t B = 256;
  double d2buf[B];
  std::vector<double> blocks;
  blocks.reserve((nq + B - 1) / B);
  for (std::size_t j0 = 0; j0 < nq; j0 += B) {
    std::size_t m = std::min(B, nq - j0);
    const double* q = qs + j0 * dim;
    if (dim == 2) {
      for (std::size_t j = 0; j < m; ++j) {
        double d0 = pi[0] - q[2 * j];
        double d1 = pi[1] - q[2 * j + 1];
        d2buf[j] = d0 * d0 + d1 * d1;
      }
    } else {
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (int t = 0; t < dim; ++t) {
          double d = pi[t] - q[j * dim + t];
          s += d * d;
        }
        d2buf[j] = s;
      }
    }
    double bs = 0.0;
    for (std::size_t j = 0; j < m; ++j) bs += nu[j0 + j] * std::exp(-d2buf[j] * inv_s2);
    blocks.push_back(bs);
  }
  return pairwise_sum(blocks.data(), blocks.size());
}

}  // namespace detail

// kappa(P,Q) = sum_p sum_q K(p,q) mu(p) nu(q), exact in O(|P||Q|).
// Rows are distributed over a fixed number of chunks whose partials combine
// pairwise, so the result is identical for any OpenMP thread count.
template <class Kernel>
double kappa_exact(const Kernel& k, const WeightedPointSet& P, const WeightedPointSet& Q) {
  require(P.dim() == Q.dim(), errc::dimension_mismatch, "kappa_exact: dimension mismatch");
  const std::size_t np = P.size(), nq = Q.size();
  if (np == 0 || nq == 0) return 0.0;

  const int dim = P.dim();
  const double* qs = Q.coords().data();
  const double* nu = Q.masses().data();

  const std::size_t nchunks = std::min<std::size_t>(64, np);
  std::vector<double> partial(nchunks, 0.0);

#pragma omp parallel for schedule(dynamic)
  for (std::size_t c = 0; c < nchunks; ++c) {
    std::size_t lo = c * np / nchunks, hi = (c + 1) * np / nchunks;
    std::vector<double> rows;
    rows.reserve(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) {
      double row;
      if constexpr (std::is_same_v<Kernel, GaussianKernel>) {
        row = detail::kappa_row_gaussian(k, P.point(i).data(), qs, nu, nq, dim);
      } else {
        double s = 0.0;
        for (std::size_t j = 0; j < nq; ++j) s += nu[j] * k.eval(P.point(i), Q.point(j));
        row = s;
      }
      rows.push_back(P.mass(i) * row);
    }
    partial[c] = pairwise_sum(rows.data(), rows.size());
  }
  return pairwise_sum(partial.data(), partial.size());
}

namespace detail {
// Deterministic symmetric ordering of a set pair, so the cross term of the
// kernel distance sums in the same order for (P,Q) and (Q,P).
inline bool cross_swapped(const WeightedPointSet& P, const WeightedPointSet& Q) {
  if (P.size() != Q.size()) return P.size() < Q.size();
  if (P.coords() != Q.coords()) return P.coords() < Q.coords();
  return P.masses() < Q.masses();
}
}  // namespace detail

// D_K^2 with the radicand-clamp policy: values in [-1e-9*W^2, 0] clamp to 0,
// more negative raises numerical_instability. W = max(W_P, W_Q).
template <class Kernel>
double kernel_distance_sq_exact(const Kernel& k, const WeightedPointSet& P,
                                const WeightedPointSet& Q) {
  double kpp = kappa_exact(k, P, P);
  double kqq = kappa_exact(k, Q, Q);
  double kpq = detail::cross_swapped(P, Q) ? kappa_exact(k, Q, P) : kappa_exact(k, P, Q);
  double v = kpp + kqq - 2.0 * kpq;
  if (v < 0.0) {
    double w = std::max(P.total_mass(), Q.total_mass());
    require(v >= -1e-9 * w * w, errc::numerical_instability,
            "kernel distance radicand below clamp tolerance");
    v = 0.0;
  }
  return v;
}

template <class Kernel>
double kernel_distance_exact(const Kernel& k, const WeightedPointSet& P,
                             const WeightedPointSet& Q) {
  return std::sqrt(kernel_distance_sq_exact(k, P, Q));
}

}  // namespace kd
