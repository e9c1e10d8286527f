#include "kd/reduce.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "kd/summation.hpp"

namespace kd {

OrientationDecomposition split_orientation(const OrientedPointSet& P) {
  const int d = P.dim();
  OrientationDecomposition out;
  out.components.reserve(d);
  for (int axis = 0; axis < d; ++axis) {
    SignedComponent comp;
    comp.points = WeightedPointSet(d);
    for (std::size_t i = 0; i < P.size(); ++i) {
      double u = P.unit(i)[axis];
      if (u == 0.0) continue;  // zero-component points are dropped
      comp.points.add(P.points().point(i), P.points().mass(i) * std::abs(u));
      comp.signs.push_back(u > 0.0 ? 1 : -1);
    }
    out.components.push_back(std::move(comp));
  }
  return out;
}

double kappa_signed(const GaussianKernel& k, const SignedComponent& A, const SignedComponent& B) {
  double s = 0.0;
  for (std::size_t i = 0; i < A.points.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < B.points.size(); ++j)
      row += B.signs[j] * B.points.mass(j) * k.eval(A.points.point(i), B.points.point(j));
    s += A.signs[i] * A.points.mass(i) * row;
  }
  return s;
}

double oriented_kappa(const GaussianKernel& k, const OrientationDecomposition& P,
                      const OrientationDecomposition& Q) {
  require(P.components.size() == Q.components.size(), errc::dimension_mismatch,
          "oriented_kappa: component counts differ");
  double s = 0.0;
  for (std::size_t i = 0; i < P.components.size(); ++i)
    s += kappa_signed(k, P.components[i], Q.components[i]);
  return s;
}

namespace {

// Nearest lattice index to x/step; exact halves round down so the
// lexicographically smaller cell wins.
std::int64_t snap_index(double x, double step) {
  double t = x / step;
  double f = std::floor(t);
  double frac = t - f;
  if (frac > 0.5) return static_cast<std::int64_t>(f) + 1;
  return static_cast<std::int64_t>(f);
}

}  // namespace

WeightedPointSet grid_compress(const GaussianKernel& k, const WeightedPointSet& P, double eps) {
  require(eps > 0.0, errc::invalid_argument, "grid_compress: eps must be > 0");
  const int d = P.dim();
  const double step = eps * k.sigma / std::sqrt(static_cast<double>(d));

  std::map<std::vector<std::int64_t>, NeumaierSum> cells;
  std::vector<std::int64_t> key(d);
  for (std::size_t i = 0; i < P.size(); ++i) {
    auto p = P.point(i);
    for (int t = 0; t < d; ++t) key[t] = snap_index(p[t], step);
    cells[key].add(P.mass(i));
  }

  WeightedPointSet out(d);
  out.reserve(cells.size());
  std::vector<double> coords(d);
  for (const auto& [z, w] : cells) {
    for (int t = 0; t < d; ++t) coords[t] = step * static_cast<double>(z[t]);
    out.add(coords, w.value());
  }
  return out;
}

WeightedPointSet sample_discretize(const WeightedPointSet& P, std::size_t k, std::uint64_t seed) {
  require(k >= 1, errc::invalid_argument, "sample_discretize: k must be >= 1");
  require(!P.empty(), errc::invalid_argument, "sample_discretize: empty input");

  // Cumulative mass table for inverse-CDF sampling.
  std::vector<double> cum(P.size());
  NeumaierSum acc;
  for (std::size_t i = 0; i < P.size(); ++i) {
    acc.add(P.mass(i));
    cum[i] = acc.value();
  }
  const double W = cum.back();

  rng::Stream rs(seed, rng::streams::discretize);
  WeightedPointSet out(P.dim());
  out.reserve(k);
  const double unit = W / static_cast<double>(k);
  for (std::size_t j = 0; j < k; ++j) {
    double u = rs.next_double() * W;
    std::size_t i = std::lower_bound(cum.begin(), cum.end(), u) - cum.begin();
    if (i >= P.size()) i = P.size() - 1;
    out.add(P.point(i), unit);
  }
  return out;
}

}  // namespace kd
