#include "kd/wspd.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "kd/summation.hpp"

namespace kd {

namespace {
constexpr int kMaxDim = 4;
}

SplitTree SplitTree::build(const WeightedPointSet& P, const WeightedPointSet* Q) {
  require(P.dim() >= 1 || (Q && Q->dim() >= 1), errc::invalid_argument, "empty build");
  int dim = P.dim() >= 1 ? P.dim() : Q->dim();
  if (Q && Q->dim() >= 1 && P.dim() >= 1)
    require(P.dim() == Q->dim(), errc::dimension_mismatch, "split tree: dimension mismatch");
  require(dim <= kMaxDim, errc::invalid_argument, "split tree supports d <= 4");

  SplitTree t;
  t.dim_ = dim;
  std::size_t np = P.size(), nq = Q ? Q->size() : 0;
  t.split_ = static_cast<std::uint32_t>(np);
  t.coords_.reserve((np + nq) * dim);
  t.coords_.insert(t.coords_.end(), P.coords().begin(), P.coords().end());
  if (Q) t.coords_.insert(t.coords_.end(), Q->coords().begin(), Q->coords().end());
  t.mass_ = P.masses();
  if (Q) t.mass_.insert(t.mass_.end(), Q->masses().begin(), Q->masses().end());

  std::size_t n = np + nq;
  t.perm_.resize(n);
  for (std::size_t i = 0; i < n; ++i) t.perm_[i] = static_cast<std::uint32_t>(i);
  if (n == 0) return t;
  t.nodes_.reserve(2 * n + 2);
  t.build_node(0, static_cast<std::uint32_t>(n));
  return t;
}

std::uint32_t SplitTree::build_node(std::uint32_t begin, std::uint32_t end) {
  std::uint32_t id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back({});
  {
    Node& nd = nodes_.back();
    nd.begin = begin;
    nd.end = end;
    nd.first_child = -1;
    nd.next_sibling = -1;
  }

  const int d = dim_;
  double lo[kMaxDim], hi[kMaxDim];
  auto p0 = point(perm_[begin]);
  for (int k = 0; k < d; ++k) lo[k] = hi[k] = p0[k];
  std::uint32_t rep = perm_[begin];
  for (std::uint32_t i = begin + 1; i < end; ++i) {
    auto p = point(perm_[i]);
    for (int k = 0; k < d; ++k) {
      if (p[k] < lo[k]) lo[k] = p[k];
      if (p[k] > hi[k]) hi[k] = p[k];
    }
    rep = std::min(rep, perm_[i]);
  }
  double diag2 = 0.0;
  bool degenerate = true;
  for (int k = 0; k < d; ++k) {
    double e = hi[k] - lo[k];
    diag2 += e * e;
    if (e > 0.0) degenerate = false;
  }

  {
    Node& nd = nodes_[id];
    for (int k = 0; k < d; ++k) {
      nd.lo[k] = lo[k];
      nd.hi[k] = hi[k];
    }
    nd.rep = rep;
    nd.diag = std::sqrt(diag2);
  }

  if (degenerate) {
    // Leaf: single point or an exactly coincident group.
    double mp = 0.0, mq = 0.0, sp = 0.0, sq = 0.0;
    for (std::uint32_t i = begin; i < end; ++i) {
      std::uint32_t u = perm_[i];
      double m = mass_[u];
      if (from_p(u)) {
        mp += m;
        sp += m * m;
      } else {
        mq += m;
        sq += m * m;
      }
    }
    Node& nd = nodes_[id];
    nd.mass_p = mp;
    nd.mass_q = mq;
    nd.sum_sq_p = sp;
    nd.sum_sq_q = sq;
    return id;
  }

  double mid[kMaxDim];
  for (int k = 0; k < d; ++k) mid[k] = 0.5 * (lo[k] + hi[k]);

  // Counting sort of the range into up to 2^d midpoint buckets.
  const int nbuckets = 1 << d;
  std::array<std::uint32_t, 17> cnt{};
  auto bucket_of = [&](std::uint32_t u) {
    auto p = point(u);
    int b = 0;
    for (int k = 0; k < d; ++k)
      if (p[k] > mid[k]) b |= 1 << k;
    return b;
  };
  for (std::uint32_t i = begin; i < end; ++i) cnt[bucket_of(perm_[i]) + 1]++;
  for (int b = 0; b < nbuckets; ++b) cnt[b + 1] += cnt[b];
  std::vector<std::uint32_t> tmp(end - begin);
  {
    std::array<std::uint32_t, 16> at{};
    for (int b = 0; b < nbuckets; ++b) at[b] = cnt[b];
    for (std::uint32_t i = begin; i < end; ++i) {
      int b = bucket_of(perm_[i]);
      tmp[at[b]++] = perm_[i];
    }
  }
  std::copy(tmp.begin(), tmp.end(), perm_.begin() + begin);

  double mp = 0.0, mq = 0.0, sp = 0.0, sq = 0.0;
  std::int32_t prev = -1;
  for (int b = 0; b < nbuckets; ++b) {
    std::uint32_t cb = begin + cnt[b], ce = begin + cnt[b + 1];
    if (cb == ce) continue;
    std::uint32_t child = build_node(cb, ce);
    if (prev < 0)
      nodes_[id].first_child = static_cast<std::int32_t>(child);
    else
      nodes_[prev].next_sibling = static_cast<std::int32_t>(child);
    prev = static_cast<std::int32_t>(child);
    mp += nodes_[child].mass_p;
    mq += nodes_[child].mass_q;
    sp += nodes_[child].sum_sq_p;
    sq += nodes_[child].sum_sq_q;
  }
  Node& nd = nodes_[id];
  nd.mass_p = mp;
  nd.mass_q = mq;
  nd.sum_sq_p = sp;
  nd.sum_sq_q = sq;
  return id;
}

double SplitTree::box_dist2(const Node& a, const Node& b) const {
  double s = 0.0;
  for (int k = 0; k < dim_; ++k) {
    double g = std::max(std::max(a.lo[k] - b.hi[k], b.lo[k] - a.hi[k]), 0.0);
    s += g * g;
  }
  return s;
}

namespace {

// Streams every alpha-separated node pair to `emit(a, b, rep_dist)`.
// Subtrees whose boxes are farther apart than `prune_r` are skipped whole:
// every descendant pair there has rep distance > prune_r and would be
// dropped anyway, so the streamed sum is independent of the pruning.
template <class Emit>
struct PairWalker {
  const SplitTree& t;
  double alpha;
  double prune_r2;  // negative disables pruning
  Emit& emit;

  void pairs(const SplitTree::Node& a, const SplitTree::Node& b) {
    double d2 = t.box_dist2(a, b);
    if (prune_r2 >= 0.0 && d2 > prune_r2) return;
    double m = std::max(a.diag, b.diag);
    if (m * m <= alpha * alpha * d2) {
      auto pa = t.point(a.rep), pb = t.point(b.rep);
      double rd2 = WeightedPointSet::dist2(pa, pb);
      emit(a, b, std::sqrt(rd2));
      return;
    }
    // Two distinct leaves always pass the test above (diag 0, boxdist > 0),
    // so the node split here is internal.
    const SplitTree::Node* u = &a;
    const SplitTree::Node* v = &b;
    if (u->diag < v->diag) std::swap(u, v);
    for (std::int32_t c = u->first_child; c >= 0; c = t.nodes()[c].next_sibling)
      pairs(t.nodes()[c], *v);
  }

  void all_pairs(const SplitTree::Node& nd) {
    if (nd.leaf()) return;
    for (std::int32_t c = nd.first_child; c >= 0; c = t.nodes()[c].next_sibling)
      all_pairs(t.nodes()[c]);
    for (std::int32_t c = nd.first_child; c >= 0; c = t.nodes()[c].next_sibling)
      for (std::int32_t c2 = t.nodes()[c].next_sibling; c2 >= 0; c2 = t.nodes()[c2].next_sibling)
        pairs(t.nodes()[c], t.nodes()[c2]);
  }
};

}  // namespace

double wspd_alpha_for(double eps) {
  require(eps > 0.0 && eps < 1.0, errc::invalid_argument, "eps must lie in (0,1)");
  return eps / (16.0 * std::sqrt(std::log(4.0 / eps)));
}

double wspd_prune_radius(const GaussianKernel& k, double eps) {
  return 2.0 * k.sigma * std::sqrt(std::log(4.0 / eps));
}

std::pair<SplitTree, std::vector<WspdPair>> build_wspd(const WeightedPointSet& P, double alpha) {
  require(alpha > 0.0 && alpha < 0.5, errc::invalid_argument,
          "build_wspd: alpha must lie in (0, 1/2)");
  SplitTree t = SplitTree::build(P, nullptr);
  std::vector<WspdPair> out;
  if (P.size() < 2) return {std::move(t), std::move(out)};

  auto emit = [&](const SplitTree::Node& a, const SplitTree::Node& b, double dist) {
    WspdPair pr;
    pr.node_a = static_cast<std::uint32_t>(&a - t.nodes().data());
    pr.node_b = static_cast<std::uint32_t>(&b - t.nodes().data());
    pr.rep_a = a.rep;
    pr.rep_b = b.rep;
    pr.dist = dist;
    pr.mass_ap = a.mass_p;
    pr.mass_aq = a.mass_q;
    pr.mass_bp = b.mass_p;
    pr.mass_bq = b.mass_q;
    pr.count_a = a.count();
    pr.count_b = b.count();
    out.push_back(pr);
  };
  PairWalker<decltype(emit)> w{t, alpha, -1.0, emit};
  w.all_pairs(t.root());
  return {std::move(t), std::move(out)};
}

namespace {

struct TriKappa {
  NeumaierSum pq, pp, qq;
};

// Shared traversal: leaf-internal exact terms plus the W_i * exp(-D_i^2/s^2)
// estimate per separated pair, accumulated into all three kappa sums.
TriKappa tri_kappa_stream(const GaussianKernel& k, const SplitTree& t, double alpha,
                          double prune_r) {
  TriKappa acc;
  const double inv_s2 = 1.0 / (k.sigma * k.sigma);

  for (const auto& nd : t.nodes()) {
    if (!nd.leaf()) continue;
    // All points in a leaf share coordinates, so K = 1 exactly.
    acc.pq.add(nd.mass_p * nd.mass_q);
    acc.pp.add(nd.mass_p * nd.mass_p - nd.sum_sq_p);
    acc.qq.add(nd.mass_q * nd.mass_q - nd.sum_sq_q);
  }

  auto emit = [&](const SplitTree::Node& a, const SplitTree::Node& b, double dist) {
    if (prune_r >= 0.0 && dist > prune_r) return;
    double kv = std::exp(-dist * dist * inv_s2);
    acc.pq.add(kv * (a.mass_p * b.mass_q + a.mass_q * b.mass_p));
    acc.pp.add(2.0 * kv * a.mass_p * b.mass_p);
    acc.qq.add(2.0 * kv * a.mass_q * b.mass_q);
  };
  if (t.point_count() >= 2) {
    PairWalker<decltype(emit)> w{t, alpha, prune_r < 0.0 ? -1.0 : prune_r * prune_r, emit};
    w.all_pairs(t.root());
  }
  return acc;
}

double diag_mass_sq(const WeightedPointSet& P) {
  NeumaierSum s;
  for (double m : P.masses()) s.add(m * m);
  return s.value();
}

}  // namespace

double kappa_wspd(const GaussianKernel& k, const WeightedPointSet& P, const WeightedPointSet& Q,
                  double eps) {
  require(eps > 0.0 && eps < 1.0, errc::invalid_argument, "kappa_wspd: eps must lie in (0,1)");
  if (P.empty() || Q.empty()) return 0.0;
  require(P.dim() == Q.dim(), errc::dimension_mismatch, "kappa_wspd: dimension mismatch");
  SplitTree t = SplitTree::build(P, &Q);
  TriKappa acc = tri_kappa_stream(k, t, wspd_alpha_for(eps), wspd_prune_radius(k, eps));
  return acc.pq.value();
}

double kernel_distance_sq_wspd(const GaussianKernel& k, const WeightedPointSet& P,
                               const WeightedPointSet& Q, double eps) {
  require(eps > 0.0 && eps < 1.0, errc::invalid_argument,
          "kernel_distance_sq_wspd: eps must lie in (0,1)");
  if (P.empty() && Q.empty()) return 0.0;
  if (!P.empty() && !Q.empty())
    require(P.dim() == Q.dim(), errc::dimension_mismatch, "dimension mismatch");
  SplitTree t = SplitTree::build(P, Q.empty() ? nullptr : &Q);
  TriKappa acc = tri_kappa_stream(k, t, wspd_alpha_for(eps), wspd_prune_radius(k, eps));
  // The pair stream covers distinct-index pairs; the diagonal sum_p mu(p)^2 is
  // exact and added here.
  double kpp = acc.pp.value() + diag_mass_sq(P);
  double kqq = acc.qq.value() + diag_mass_sq(Q);
  double kpq = acc.pq.value();
  return kpp + kqq - 2.0 * kpq;
}

}  // namespace kd
