#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "kd/kernel.hpp"
#include "kd/points.hpp"

namespace kd {

enum class BasisKind : std::uint8_t { fourier = 0, taylor = 1 };

// rho/2 random frequencies drawn i.i.d. N(0, (2/sigma^2) I), so that
// E[cos<w, z>] = exp(-||z||^2/sigma^2). Regeneration from (seed, sigma, d,
// rho) is bit-identical.
struct FourierBasis {
  double sigma;
  int dim;
  std::size_t rho;  // even; rho/2 frequencies
  std::uint64_t seed;
  std::vector<double> freqs;  // (rho/2) x dim row-major
};

FourierBasis draw_frequencies(double sigma, int d, std::size_t rho, std::uint64_t seed);

// Smallest even rho with n^2 * 2 * exp(-rho eps^2/64) <= delta:
// rho = 2*ceil((32/eps^2) * ln(2 n^2 / delta)).
std::size_t rff_dimension(double eps, double delta, std::size_t n);

// Domain-based variant, independent of n: 2*ceil((32 d/eps^2) * ln(2 Delta/(eps delta))).
// The constant dominates the rff_dimension constant; heuristic beyond that.
std::size_t rff_dimension_domain(double eps, double delta, double Delta, int d);

// Multiindices of total degree <= tau-1 in graded lexicographic order,
// flattened row-major (count x d). Count = C(tau+d-1, d).
std::vector<int> multiindex_enumerate(int d, int tau);
std::size_t multiindex_count(int d, int tau);

// Smallest tau >= 1 with (2^tau / tau!) * Delta^(2 tau) <= eps (log-space).
int ifgt_choose_tau(double eps, double Delta);

// Taylor (fast-Gauss) basis around a fixed expansion center.
struct TaylorBasis {
  double sigma;
  int dim;
  int tau;
  std::vector<double> center;
  std::vector<int> multiindices;       // rho x dim, graded lex
  std::vector<double> coeff;           // sqrt(2^|a| / a!)
  std::vector<std::uint32_t> parent;   // index of a - e_axis, for the monomial recurrence
  std::vector<int> axis;
  std::size_t rho;
};

TaylorBasis make_taylor_basis(double sigma, int tau, std::vector<double> center);

// Conservative normalized diameter for the Taylor truncation bound:
// 2 * max_u ||u - center|| / sigma.
double taylor_delta(const TaylorBasis& basis, const WeightedPointSet& P);

struct FeatureVector {
  BasisKind kind;
  int dim = 0;
  std::size_t rho = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;          // fourier
  int tau = 0;                     // taylor
  std::vector<double> center;      // taylor
  std::vector<double> values;

  bool same_basis(const FeatureVector& o) const;
};

// Phi(P) = sum_p phi(p); coordinates (2i, 2i+1) of phi(p) are
// mu(p)*sqrt(2/rho)*(cos<w_i,p>, sin<w_i,p>).
FeatureVector rff_embed(const FourierBasis& basis, const WeightedPointSet& P);

// Phi(P) = sum_p phi(p) with phi(p)_a = sqrt(2^|a|/a!) mu(p)
// exp(-||p-c||^2/sigma^2) ((p-c)/sigma)^a; <Phi(P), Phi(Q)> approximates
// kappa(P,Q) within W_P W_Q (2^tau/tau!) Delta^(2 tau).
FeatureVector ifgt_embed(const TaylorBasis& basis, const WeightedPointSet& P);

// ||Phi(P) - Phi(Q)||^2, clamped at 0. Bases must match.
double kernel_distance_sq_features(const FeatureVector& a, const FeatureVector& b);

// Exact linear-scan nearest neighbor in feature space; ties -> smallest index.
std::size_t nn_query(const std::vector<FeatureVector>& corpus, const FeatureVector& query);

// Flat binary format (little-endian): header + rho f64 values.
void write_feature_vector(std::ostream& os, const FeatureVector& fv);
FeatureVector read_feature_vector(std::istream& is);
void write_feature_vector_file(const std::string& path, const FeatureVector& fv);
FeatureVector read_feature_vector_file(const std::string& path);

}  // namespace kd
