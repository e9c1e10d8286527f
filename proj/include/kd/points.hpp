#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "kd/error.hpp"
#include "kd/summation.hpp"

namespace kd {

// Finite set of d-dimensional points with positive masses, stored
// structure-of-arrays (coords row-major).
class WeightedPointSet {
public:
  WeightedPointSet() = default;
  explicit WeightedPointSet(int dim) : dim_(dim) {
    require(dim >= 1, errc::invalid_argument, "dimension must be >= 1");
  }

  void reserve(std::size_t n) {
    xs_.reserve(n * static_cast<std::size_t>(dim_));
    ms_.reserve(n);
  }

  void add(std::span<const double> coords, double mass = 1.0) {
    require(dim_ >= 1, errc::invalid_argument, "point set has no dimension set");
    require(static_cast<int>(coords.size()) == dim_, errc::dimension_mismatch,
            "point dimension does not match set dimension");
    require(mass > 0.0 && std::isfinite(mass), errc::invalid_argument,
            "point mass must be positive and finite");
    for (double c : coords)
      require(std::isfinite(c), errc::invalid_argument, "point coordinates must be finite");
    xs_.insert(xs_.end(), coords.begin(), coords.end());
    ms_.push_back(mass);
  }

  int dim() const { return dim_; }
  std::size_t size() const { return ms_.size(); }
  bool empty() const { return ms_.empty(); }

  std::span<const double> point(std::size_t i) const {
    return {xs_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  double mass(std::size_t i) const { return ms_[i]; }

  const std::vector<double>& coords() const { return xs_; }
  const std::vector<double>& masses() const { return ms_; }

  // W = sum of masses (compensated).
  double total_mass() const { return neumaier_sum(ms_); }

  // Exact max pairwise distance, O(n^2). Use radius_about() in hot paths.
  double diameter() const {
    double best = 0.0;
    std::size_t n = size();
    for (std::size_t i = 0; i + 1 < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        double d2 = dist2(point(i), point(j));
        if (d2 > best) best = d2;
      }
    return std::sqrt(best);
  }

  // Max distance from `c` to any point, O(n).
  double radius_about(std::span<const double> c) const {
    require(static_cast<int>(c.size()) == dim_, errc::dimension_mismatch, "center dimension");
    double best = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      double d2 = dist2(point(i), c);
      if (d2 > best) best = d2;
    }
    return std::sqrt(best);
  }

  // Mass-weighted centroid.
  std::vector<double> centroid() const {
    require(!empty(), errc::invalid_argument, "centroid of empty set");
    std::vector<double> c(dim_, 0.0);
    double w = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      auto p = point(i);
      for (int k = 0; k < dim_; ++k) c[k] += ms_[i] * p[k];
      w += ms_[i];
    }
    for (int k = 0; k < dim_; ++k) c[k] /= w;
    return c;
  }

  // Axis-aligned bounding box as (lo, hi); undefined on empty sets.
  void bounding_box(std::vector<double>& lo, std::vector<double>& hi) const {
    lo.assign(xs_.begin(), xs_.begin() + dim_);
    hi = lo;
    for (std::size_t i = 1; i < size(); ++i) {
      auto p = point(i);
      for (int k = 0; k < dim_; ++k) {
        if (p[k] < lo[k]) lo[k] = p[k];
        if (p[k] > hi[k]) hi[k] = p[k];
      }
    }
  }

  static double dist2(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      double d = a[k] - b[k];
      s += d * d;
    }
    return s;
  }

private:
  int dim_ = 0;
  std::vector<double> xs_;
  std::vector<double> ms_;
};

// Point set where every point also carries a unit orientation vector.
class OrientedPointSet {
public:
  explicit OrientedPointSet(int dim) : dim_(dim), pts_(dim) {
    require(dim >= 1, errc::invalid_argument, "dimension must be >= 1");
  }

  void add(std::span<const double> coords, double mass, std::span<const double> unit) {
    require(static_cast<int>(unit.size()) == dim_, errc::dimension_mismatch,
            "orientation vector dimension");
    double n2 = 0.0;
    for (double u : unit) n2 += u * u;
    require(std::abs(std::sqrt(n2) - 1.0) <= 1e-9, errc::invalid_argument,
            "orientation vector must be unit length (|norm-1| <= 1e-9)");
    pts_.add(coords, mass);
    us_.insert(us_.end(), unit.begin(), unit.end());
  }

  int dim() const { return dim_; }
  std::size_t size() const { return pts_.size(); }
  const WeightedPointSet& points() const { return pts_; }
  std::span<const double> unit(std::size_t i) const {
    return {us_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }

private:
  int dim_ = 0;
  WeightedPointSet pts_;
  std::vector<double> us_;
};

}  // namespace kd
