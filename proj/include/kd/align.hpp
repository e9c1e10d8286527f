#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "kd/kernel.hpp"
#include "kd/points.hpp"

namespace kd {

// Rigid motion with the convention: rotate about `anchor`, then translate.
//   apply(q) = R(q - anchor) + anchor + T
// d=1 has no rotation; d=2 stores an angle; d=3 a row-major orthonormal
// matrix with det +1 (validated to 1e-12).
struct RigidMotion {
  int dim = 0;
  std::vector<double> translation;
  std::vector<double> anchor;
  double angle = 0.0;
  std::array<double, 9> rot{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static RigidMotion identity(int d);
  static RigidMotion translate(std::vector<double> T);

  void validate() const;
  void apply_point(const double* q, double* out) const;
  WeightedPointSet apply(const WeightedPointSet& Q) const;

  // Equivalent origin-anchored form: apply(q) = R(q) + T_origin.
  std::vector<double> origin_translation() const;
};

// Lattice {(spacing/sqrt(d)) z} restricted to a ball, inflated by one
// spacing so that every point within `radius` of `center` has a lattice
// point within `spacing` inside the set.
struct TranslationGrid {
  int dim;
  std::vector<double> center;
  double radius;
  double spacing;  // covering parameter, length units

  // Flattened row-major list of grid points.
  std::vector<double> cells() const;
};

TranslationGrid make_translation_grid(std::vector<double> center, double radius, double spacing);

// Rotations that fix `fixed` pointwise, covering the reachable images of the
// pivot q out to `extent` at image tolerance `eps_r`. The angular step is
// eps_r / max(extent, orbit radius), which keeps the covering property for
// orbits larger than the extent.
struct RotationGrid {
  int dim = 0;
  std::vector<double> anchor;
  double eps_r = 0.0;
  double extent = 0.0;
  double orbit_radius = 0.0;
  // Every candidate as a row-major d x d rotation matrix acting about anchor.
  std::vector<std::array<double, 9>> rotations;
  std::vector<double> angles;  // d=2 only, for inspection

  std::size_t size() const { return rotations.size(); }
  void apply(std::size_t i, const double* q, double* out) const;
};

RotationGrid rotation_grid(std::span<const double> p, std::span<const double> q,
                           const std::vector<std::vector<double>>& fixed, double eps_r,
                           double lambda, int d);

struct AlignResult {
  RigidMotion motion;
  double dk2 = 0.0;    // achieved D_K^2 (exact, clamped at 0)
  double kappa = 0.0;  // kappa(P, motion(Q)) at the optimum
  std::uint64_t candidates_evaluated = 0;
};

// kappa(P, motion(Q)), exact brute force.
double alignment_objective(const GaussianKernel& k, const WeightedPointSet& P,
                           const WeightedPointSet& Q, const RigidMotion& motion);

// Grid search over T = g - q for q in Q and lattice points g within
// sigma*sqrt(ln max(n^2,2)) of some p in P; additive guarantee eps*W^2 on
// D_K^2. The argmax over the candidate set is certified by branch and bound.
AlignResult best_translation(const GaussianKernel& k, const WeightedPointSet& P,
                             const WeightedPointSet& Q, double eps);

AlignResult best_translation_coreset(const GaussianKernel& k, const WeightedPointSet& P,
                                     const WeightedPointSet& Q, double eps, double delta,
                                     std::uint64_t seed);

// Translation + rotation search for d in {2,3}; guards n <= 60 (d=2) /
// n <= 25 (d=3) -- use the coreset variant beyond.
AlignResult best_rigid_motion(const GaussianKernel& k, const WeightedPointSet& P,
                              const WeightedPointSet& Q, double eps);

AlignResult best_rigid_motion_coreset(const GaussianKernel& k, const WeightedPointSet& P,
                                      const WeightedPointSet& Q, double eps, double delta,
                                      std::uint64_t seed);

}  // namespace kd
