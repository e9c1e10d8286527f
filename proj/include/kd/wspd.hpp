#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "kd/kernel.hpp"
#include "kd/points.hpp"

namespace kd {

// Compressed midpoint split tree (fair-split behavior) over one point set or
// the tagged union of two. Boxes are tightened to the points at every level,
// so empty-cell chains never appear. Leaves hold one point, or a group of
// exactly coincident points (which arises when the two sets share
// coordinates, e.g. kernel_distance_wspd(P, P)).
class SplitTree {
public:
  struct Node {
    double lo[4], hi[4];
    std::uint32_t begin, end;   // range in perm()
    std::int32_t first_child;   // -1 for leaves
    std::int32_t next_sibling;  // -1 at end of child list
    std::uint32_t rep;          // union index of representative (min input order)
    double mass_p, mass_q;      // subtree mass from each origin set
    double sum_sq_p, sum_sq_q;  // sum of squared masses (leaf diagonal terms)
    double diag;                // box diagonal, an upper bound on point diameter

    bool leaf() const { return first_child < 0; }
    std::uint32_t count() const { return end - begin; }
  };

  int dim() const { return dim_; }
  std::size_t point_count() const { return mass_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& root() const { return nodes_[0]; }
  const std::vector<std::uint32_t>& perm() const { return perm_; }

  std::span<const double> point(std::uint32_t union_idx) const {
    return {coords_.data() + std::size_t(union_idx) * dim_, std::size_t(dim_)};
  }
  double mass(std::uint32_t union_idx) const { return mass_[union_idx]; }
  bool from_p(std::uint32_t union_idx) const { return union_idx < split_; }

  // Union indices 0..|P|-1 are P in input order, then Q.
  static SplitTree build(const WeightedPointSet& P, const WeightedPointSet* Q);

  double box_dist2(const Node& a, const Node& b) const;

private:
  int dim_ = 0;
  std::uint32_t split_ = 0;  // first Q union index
  std::vector<double> coords_;
  std::vector<double> mass_;
  std::vector<std::uint32_t> perm_;
  std::vector<Node> nodes_;

  std::uint32_t build_node(std::uint32_t begin, std::uint32_t end);
};

struct WspdPair {
  std::uint32_t node_a, node_b;
  std::uint32_t rep_a, rep_b;  // union indices
  double dist;                 // D_i = ||rep_a - rep_b||
  double mass_ap, mass_aq, mass_bp, mass_bq;
  std::uint32_t count_a, count_b;
};

// alpha-WSPD of a single point set. Pairs disjointly cover all unordered
// pairs of distinct points; each pair passes the conservative separation
// test max(diag A, diag B) <= alpha * boxdist(A, B).
std::pair<SplitTree, std::vector<WspdPair>> build_wspd(const WeightedPointSet& P, double alpha);

// Separation parameter certifying a per-kappa budget of (eps/4)*W_P*W_Q.
double wspd_alpha_for(double eps);

// Pruning radius 2*sigma*sqrt(ln(4/eps)); pair contributions beyond it are 0.
double wspd_prune_radius(const GaussianKernel& k, double eps);

// Near-linear estimate of kappa(P,Q) within (eps/4)*W_P*W_Q.
double kappa_wspd(const GaussianKernel& k, const WeightedPointSet& P, const WeightedPointSet& Q,
                  double eps);

// U with |U - D_K^2(P,Q)| <= eps*W^2, W = max(W_P, W_Q); one shared WSPD over
// P union Q supplies all three kappa terms. U may be slightly negative when
// the true distance is near zero.
double kernel_distance_sq_wspd(const GaussianKernel& k, const WeightedPointSet& P,
                               const WeightedPointSet& Q, double eps);

}  // namespace kd
