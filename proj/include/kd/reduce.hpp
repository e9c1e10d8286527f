#pragma once

#include <cstdint>
#include <vector>

#include "kd/kernel.hpp"
#include "kd/points.hpp"
#include "kd/rng.hpp"

namespace kd {

// One axis component of an orientation decomposition: masses mu_i(p) =
// mu(p)*|U_i(p)|, with the sign of U_i(p) carried separately so the signed
// kappa below reproduces the oriented inner-product sum exactly.
struct SignedComponent {
  WeightedPointSet points;
  std::vector<int8_t> signs;
};

struct OrientationDecomposition {
  std::vector<SignedComponent> components;  // one per axis
};

OrientationDecomposition split_orientation(const OrientedPointSet& P);

// sum over (p,q) of sign_p*sign_q*mu_i(p)*nu_i(q)*K(p,q).
double kappa_signed(const GaussianKernel& k, const SignedComponent& A, const SignedComponent& B);

// Oriented kappa of two decompositions: sum_i kappa_signed(P_i, Q_i).
double oriented_kappa(const GaussianKernel& k, const OrientationDecomposition& P,
                      const OrientationDecomposition& Q);

// Snap every point to the lattice {(eps*sigma/sqrt(d)) * z}, merging masses
// per cell (compensated). Equidistant points go to the lexicographically
// smallest lattice cell. Total mass is preserved; |kappa(P,Q)-kappa(P',Q)|
// <= eps*W_P*W_Q for any Q.
WeightedPointSet grid_compress(const GaussianKernel& k, const WeightedPointSet& P, double eps);

// k i.i.d. draws proportional to mass, each with output mass W/k.
WeightedPointSet sample_discretize(const WeightedPointSet& P, std::size_t k, std::uint64_t seed);

}  // namespace kd
