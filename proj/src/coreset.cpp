#include "kd/coreset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "kd/constants.hpp"
#include "kd/rng.hpp"
#include "kd/summation.hpp"

namespace kd {

std::size_t coreset_size_random(double eps, double delta, int d) {
  require(eps > 0.0 && eps <= 1.0, errc::invalid_argument, "eps must lie in (0,1]");
  require(delta > 0.0 && delta < 1.0, errc::invalid_argument, "delta must lie in (0,1)");
  require(d >= 1, errc::invalid_argument, "d must be >= 1");
  double v = (constants::kCoresetSizeC / (eps * eps)) * (d + std::log(1.0 / delta));
  return static_cast<std::size_t>(std::ceil(v));
}

std::size_t feature_coreset_size(double eps, double delta, std::size_t n) {
  require(eps > 0.0 && eps < 1.0, errc::invalid_argument, "eps must lie in (0,1)");
  require(delta > 0.0 && delta < 1.0, errc::invalid_argument, "delta must lie in (0,1)");
  require(n >= 2, errc::invalid_argument, "n must be >= 2");
  double ln_n = std::log(static_cast<double>(n));
  double v = (constants::kFeatureCoresetC / (eps * eps * eps)) *
             std::log(static_cast<double>(n) / delta) * std::log(ln_n / (eps * delta));
  return static_cast<std::size_t>(std::ceil(v));
}

Coreset coreset_random(const WeightedPointSet& P, std::size_t k, std::uint64_t seed) {
  require(k >= 1, errc::invalid_argument, "coreset_random: k must be >= 1");
  require(!P.empty(), errc::invalid_argument, "coreset_random: empty parent set");

  std::vector<double> cum(P.size());
  NeumaierSum acc;
  for (std::size_t i = 0; i < P.size(); ++i) {
    acc.add(P.mass(i));
    cum[i] = acc.value();
  }
  const double W = cum.back();

  rng::Stream rs(seed, rng::streams::coreset);
  Coreset cs;
  cs.subset = WeightedPointSet(P.dim());
  cs.subset.reserve(k);
  cs.indices.reserve(k);
  cs.parent_size = P.size();
  const double unit = W / static_cast<double>(k);
  for (std::size_t j = 0; j < k; ++j) {
    double u = rs.next_double() * W;
    std::size_t i = std::lower_bound(cum.begin(), cum.end(), u) - cum.begin();
    if (i >= P.size()) i = P.size() - 1;
    cs.subset.add(P.point(i), unit);
    cs.indices.push_back(i);
  }
  return cs;
}

double kernel_discrepancy(const GaussianKernel& k, const WeightedPointSet& P, const Coreset& S,
                          const std::vector<double>& queries) {
  require(!queries.empty(), errc::invalid_argument, "kernel_discrepancy: no queries");
  const int d = P.dim();
  require(queries.size() % d == 0, errc::dimension_mismatch, "query buffer size");
  const std::size_t nq = queries.size() / d;
  const double wp = P.total_mass();
  const double ws = S.subset.total_mass();
  const double inv_s2 = 1.0 / (k.sigma * k.sigma);

  const double* pc = P.coords().data();
  const double* sc = S.subset.coords().data();
  const std::size_t np = P.size(), ns = S.subset.size();

  double best = 0.0;
#pragma omp parallel for reduction(max : best) schedule(static)
  for (std::size_t qi = 0; qi < nq; ++qi) {
    const double* q = queries.data() + qi * d;
    double a = 0.0;
    for (std::size_t i = 0; i < np; ++i) {
      double d2 = 0.0;
      for (int t = 0; t < d; ++t) {
        double dd = pc[i * d + t] - q[t];
        d2 += dd * dd;
      }
      a += P.mass(i) * std::exp(-d2 * inv_s2);
    }
    double b = 0.0;
    for (std::size_t i = 0; i < ns; ++i) {
      double d2 = 0.0;
      for (int t = 0; t < d; ++t) {
        double dd = sc[i * d + t] - q[t];
        d2 += dd * dd;
      }
      b += S.subset.mass(i) * std::exp(-d2 * inv_s2);
    }
    double dev = std::abs(a / wp - b / ws);
    if (dev > best) best = dev;
  }
  return best;
}

std::vector<double> default_discrepancy_queries(const GaussianKernel& k,
                                                const WeightedPointSet& P, double eps_target) {
  require(eps_target > 0.0 && eps_target < 1.0, errc::invalid_argument,
          "eps_target must lie in (0,1)");
  const int d = P.dim();
  std::vector<double> out = P.coords();

  std::vector<double> lo, hi;
  P.bounding_box(lo, hi);
  const double pad = k.tail_radius(eps_target / 4.0);
  const double h = k.sigma * eps_target / 4.0;
  std::vector<std::size_t> steps(d);
  std::size_t total = 1;
  for (int t = 0; t < d; ++t) {
    lo[t] -= pad;
    hi[t] += pad;
    steps[t] = static_cast<std::size_t>(std::floor((hi[t] - lo[t]) / h)) + 1;
    total *= steps[t];
  }
  require(total <= 50'000'000, errc::budget_exceeded,
          "default discrepancy query grid too large; pass explicit queries");
  out.reserve(out.size() + total * d);
  std::vector<std::size_t> idx(d, 0);
  for (std::size_t c = 0; c < total; ++c) {
    for (int t = 0; t < d; ++t) out.push_back(lo[t] + h * static_cast<double>(idx[t]));
    for (int t = d - 1; t >= 0; --t) {
      if (++idx[t] < steps[t]) break;
      idx[t] = 0;
    }
  }
  return out;
}

namespace {

struct BallEval {
  const double* xs;
  const double* ms;
  const char* is_parent;  // nonzero -> contributes to P side
  std::size_t m;
  int d;
  double wp, ws;

  // |xi_bar_S(ball) - xi_bar_P(ball)| with points at squared distance <= r2.
  double eval(const double* c, double r2) const {
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double d2 = 0.0;
      for (int t = 0; t < d; ++t) {
        double dd = xs[i * d + t] - c[t];
        d2 += dd * dd;
      }
      if (d2 <= r2) {
        if (is_parent[i])
          a += ms[i];
        else
          b += ms[i];
      }
    }
    return std::abs(a / wp - b / ws);
  }
};

bool circumcenter2(const double* p1, const double* p2, const double* p3, double* c) {
  double ax = p2[0] - p1[0], ay = p2[1] - p1[1];
  double bx = p3[0] - p1[0], by = p3[1] - p1[1];
  double det = 2.0 * (ax * by - ay * bx);
  if (std::abs(det) < 1e-14) return false;
  double a2 = ax * ax + ay * ay, b2 = bx * bx + by * by;
  c[0] = p1[0] + (by * a2 - ay * b2) / det;
  c[1] = p1[1] + (ax * b2 - bx * a2) / det;
  return true;
}

// Circumcenter of a (non-degenerate) triangle in 3-space, in the triangle's
// plane.
bool circumcenter3_tri(const double* p1, const double* p2, const double* p3, double* c) {
  double u[3], v[3];
  for (int t = 0; t < 3; ++t) {
    u[t] = p2[t] - p1[t];
    v[t] = p3[t] - p1[t];
  }
  double uu = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
  double vv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
  double uv = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
  double det = 2.0 * (uu * vv - uv * uv);
  if (std::abs(det) < 1e-14) return false;
  double s = (vv * (uu - uv)) / det, t = (uu * (vv - uv)) / det;
  for (int k = 0; k < 3; ++k) c[k] = p1[k] + s * u[k] + t * v[k];
  return true;
}

bool circumcenter3_tet(const double* p0, const double* p1, const double* p2, const double* p3,
                       double* c) {
  // Solve 2 (p_i - p0) . c = |p_i|^2 - |p0|^2, i = 1..3.
  double A[3][3], rhs[3];
  const double* ps[3] = {p1, p2, p3};
  double n0 = p0[0] * p0[0] + p0[1] * p0[1] + p0[2] * p0[2];
  for (int i = 0; i < 3; ++i) {
    double ni = 0.0;
    for (int t = 0; t < 3; ++t) {
      A[i][t] = 2.0 * (ps[i][t] - p0[t]);
      ni += ps[i][t] * ps[i][t];
    }
    rhs[i] = ni - n0;
  }
  // Gaussian elimination with partial pivoting.
  int piv[3] = {0, 1, 2};
  for (int col = 0; col < 3; ++col) {
    int best = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(A[piv[r]][col]) > std::abs(A[piv[best]][col])) best = r;
    std::swap(piv[col], piv[best]);
    double pv = A[piv[col]][col];
    if (std::abs(pv) < 1e-12) return false;
    for (int r = col + 1; r < 3; ++r) {
      double f = A[piv[r]][col] / pv;
      for (int t = col; t < 3; ++t) A[piv[r]][t] -= f * A[piv[col]][t];
      rhs[piv[r]] -= f * rhs[piv[col]];
    }
  }
  for (int col = 2; col >= 0; --col) {
    double v = rhs[piv[col]];
    for (int t = col + 1; t < 3; ++t) v -= A[piv[col]][t] * c[t];
    c[col] = v / A[piv[col]][col];
  }
  return true;
}

double dist2_to(const double* a, const double* b, int d) {
  double s = 0.0;
  for (int t = 0; t < d; ++t) {
    double dd = a[t] - b[t];
    s += dd * dd;
  }
  return s;
}

}  // namespace

double ball_discrepancy(const WeightedPointSet& P, const Coreset& S) {
  const int d = P.dim();
  require(d >= 1 && d <= 3, errc::invalid_argument, "ball_discrepancy supports d in {1,2,3}");
  require(P.size() <= 500, errc::budget_exceeded, "ball_discrepancy: n <= 500 (brute force)");

  // Pool P and S with a side tag.
  const std::size_t m = P.size() + S.subset.size();
  std::vector<double> xs(m * d);
  std::vector<double> ms(m);
  std::vector<char> side(m);
  std::copy(P.coords().begin(), P.coords().end(), xs.begin());
  std::copy(P.masses().begin(), P.masses().end(), ms.begin());
  std::fill(side.begin(), side.begin() + P.size(), 1);
  std::copy(S.subset.coords().begin(), S.subset.coords().end(), xs.begin() + P.size() * d);
  std::copy(S.subset.masses().begin(), S.subset.masses().end(), ms.begin() + P.size());
  std::fill(side.begin() + P.size(), side.end(), 0);

  const double wp = P.total_mass();
  const double ws = S.subset.total_mass();

  if (d == 1) {
    // Intervals: every realizable subset is a contiguous range of the sorted
    // distinct coordinates. O(m^2) ranges via prefix sums.
    std::vector<std::size_t> ord(m);
    for (std::size_t i = 0; i < m; ++i) ord[i] = i;
    std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    // Collapse ties so equal coordinates always travel together.
    std::vector<double> pa, sa;  // per distinct coordinate
    for (std::size_t i = 0; i < m;) {
      double x = xs[ord[i]];
      double ap = 0.0, as = 0.0;
      while (i < m && xs[ord[i]] == x) {
        if (side[ord[i]])
          ap += ms[ord[i]];
        else
          as += ms[ord[i]];
        ++i;
      }
      pa.push_back(ap);
      sa.push_back(as);
    }
    std::size_t u = pa.size();
    double best = 0.0;
    for (std::size_t i = 0; i < u; ++i) {
      double ap = 0.0, as = 0.0;
      for (std::size_t j = i; j < u; ++j) {
        ap += pa[j];
        as += sa[j];
        best = std::max(best, std::abs(as / ws - ap / wp));
      }
    }
    return best;
  }

  BallEval ev{xs.data(), ms.data(), side.data(), m, d, wp, ws};

  auto eval_pm = [&](const double* c, double r2) {
    double tol = r2 * 1e-12 + 1e-30;
    return std::max(ev.eval(c, r2 + tol), ev.eval(c, r2 - tol));
  };

  double best = 0.0;
  // Radius-0 balls (and the empty ball, discrepancy 0).
  for (std::size_t i = 0; i < m; ++i) best = std::max(best, eval_pm(xs.data() + i * d, 0.0));
  // Diametral balls of all pairs.
  for (std::size_t i = 0; i + 1 < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      double c[3];
      for (int t = 0; t < d; ++t) c[t] = 0.5 * (xs[i * d + t] + xs[j * d + t]);
      best = std::max(best, eval_pm(c, dist2_to(xs.data() + i * d, c, d)));
    }
  if (d == 2) {
    for (std::size_t i = 0; i + 2 < m; ++i)
      for (std::size_t j = i + 1; j + 1 < m; ++j)
        for (std::size_t l = j + 1; l < m; ++l) {
          double c[2];
          if (!circumcenter2(xs.data() + i * 2, xs.data() + j * 2, xs.data() + l * 2, c)) continue;
          best = std::max(best, eval_pm(c, dist2_to(xs.data() + i * 2, c, 2)));
        }
  } else {
    // d == 3: circles of triples (sphere centered in the triangle plane) and
    // circumspheres of quadruples.
    for (std::size_t i = 0; i + 2 < m; ++i)
      for (std::size_t j = i + 1; j + 1 < m; ++j)
        for (std::size_t l = j + 1; l < m; ++l) {
          double c[3];
          if (!circumcenter3_tri(xs.data() + i * 3, xs.data() + j * 3, xs.data() + l * 3, c))
            continue;
          best = std::max(best, eval_pm(c, dist2_to(xs.data() + i * 3, c, 3)));
        }
    for (std::size_t i = 0; i + 3 < m; ++i)
      for (std::size_t j = i + 1; j + 2 < m; ++j)
        for (std::size_t l = j + 1; l + 1 < m; ++l)
          for (std::size_t o = l + 1; o < m; ++o) {
            double c[3];
            if (!circumcenter3_tet(xs.data() + i * 3, xs.data() + j * 3, xs.data() + l * 3,
                                   xs.data() + o * 3, c))
              continue;
            best = std::max(best, eval_pm(c, dist2_to(xs.data() + i * 3, c, 3)));
          }
  }
  return best;
}

double coreset_feature_bound(const WeightedPointSet& P, const Coreset& S,
                             const FourierBasis& basis) {
  FeatureVector fp = rff_embed(basis, P);
  FeatureVector fs = rff_embed(basis, S.subset);
  return kernel_distance_sq_features(fp, fs);
}

}  // namespace kd
