#pragma once

#include <cstdint>
#include <vector>

#include "kd/features.hpp"
#include "kd/kernel.hpp"
#include "kd/points.hpp"

namespace kd {

enum class CoresetMethod : std::uint8_t { random = 0, feature_verified = 1 };

// Uniform-mass subset standing in for its parent set.
struct Coreset {
  WeightedPointSet subset;            // masses all W/k
  std::vector<std::size_t> indices;   // parent index per subset point
  std::size_t parent_size = 0;
  double epsilon_target = 0.0;
  CoresetMethod method = CoresetMethod::random;
};

struct DiscrepancyReport {
  double kernel_discrepancy = 0.0;
  double ball_discrepancy = -1.0;  // -1 when not computed
  std::size_t query_count = 0;
};

// Random-sampling size ceil((C/eps^2)(d + ln(1/delta))), C = 8 (see
// kd/constants.hpp; calibration experiment lives in the coreset tests).
std::size_t coreset_size_random(double eps, double delta, int d);

// Lemma-style feature-certificate size ceil((C/eps^3) ln(n/delta) *
// ln((1/(eps delta)) ln n)), C = 16.
std::size_t feature_coreset_size(double eps, double delta, std::size_t n);

// k i.i.d. draws proportional to mass, reweighted to W/k each.
Coreset coreset_random(const WeightedPointSet& P, std::size_t k, std::uint64_t seed);

// max over queries of |kappa_bar_P(P,q) - kappa_bar_S(S,q)| (K+ = 1).
double kernel_discrepancy(const GaussianKernel& k, const WeightedPointSet& P, const Coreset& S,
                          const std::vector<double>& queries);

// Parent points plus a grid of spacing sigma*eps_target/4 over the bounding
// box inflated by tail_radius(eps_target/4); flattened row-major.
std::vector<double> default_discrepancy_queries(const GaussianKernel& k,
                                                const WeightedPointSet& P, double eps_target);

// Exact max over the canonical set of balls (d=1: intervals; d=2: balls
// through <= 3 points; d=3: through <= 4 points, O(n^4) spheres each scanned
// in O(n) -- keep n small in 3D) of |xi_bar_S - xi_bar_P|.
double ball_discrepancy(const WeightedPointSet& P, const Coreset& S);

// ||Phi(P) - Phi(S)||^2 under the given Fourier basis (the certificate value).
double coreset_feature_bound(const WeightedPointSet& P, const Coreset& S,
                             const FourierBasis& basis);

}  // namespace kd
