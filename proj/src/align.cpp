#include "kd/align.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <queue>

#include "kd/coreset.hpp"
#include "kd/kappa.hpp"
#include "kd/rng.hpp"

namespace kd {

namespace {

constexpr double kPi = 3.14159265358979323846;

void rotate2(double theta, const double* x, double* out) {
  double c = std::cos(theta), s = std::sin(theta);
  double x0 = x[0], x1 = x[1];
  out[0] = c * x0 - s * x1;
  out[1] = s * x0 + c * x1;
}

// Rodrigues rotation about unit axis `a`.
void rotate_axis(const double* a, double theta, const double* x, double* out) {
  double c = std::cos(theta), s = std::sin(theta);
  double ax = a[1] * x[2] - a[2] * x[1];
  double ay = a[2] * x[0] - a[0] * x[2];
  double az = a[0] * x[1] - a[1] * x[0];
  double ad = a[0] * x[0] + a[1] * x[1] + a[2] * x[2];
  out[0] = x[0] * c + ax * s + a[0] * ad * (1 - c);
  out[1] = x[1] * c + ay * s + a[1] * ad * (1 - c);
  out[2] = x[2] * c + az * s + a[2] * ad * (1 - c);
}

std::array<double, 9> axis_angle_matrix(const double* a, double theta) {
  double c = std::cos(theta), s = std::sin(theta);
  std::array<double, 9> r;
  r[0] = c + a[0] * a[0] * (1 - c);
  r[1] = a[0] * a[1] * (1 - c) - a[2] * s;
  r[2] = a[0] * a[2] * (1 - c) + a[1] * s;
  r[3] = a[1] * a[0] * (1 - c) + a[2] * s;
  r[4] = c + a[1] * a[1] * (1 - c);
  r[5] = a[1] * a[2] * (1 - c) - a[0] * s;
  r[6] = a[2] * a[0] * (1 - c) - a[1] * s;
  r[7] = a[2] * a[1] * (1 - c) + a[0] * s;
  r[8] = c + a[2] * a[2] * (1 - c);
  return r;
}

std::array<double, 9> mat_mul(const std::array<double, 9>& a, const std::array<double, 9>& b) {
  std::array<double, 9> r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int t = 0; t < 3; ++t) s += a[i * 3 + t] * b[t * 3 + j];
      r[i * 3 + j] = s;
    }
  return r;
}

// Minimal rotation taking unit vector u to unit vector v.
std::array<double, 9> min_rotation(const double* u, const double* v) {
  double c = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
  if (c >= 1.0 - 1e-14) return {1, 0, 0, 0, 1, 0, 0, 0, 1};
  double ax[3] = {u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2],
                  u[0] * v[1] - u[1] * v[0]};
  double n = std::sqrt(ax[0] * ax[0] + ax[1] * ax[1] + ax[2] * ax[2]);
  if (c <= -1.0 + 1e-14 || n < 1e-15) {
    // Antipodal: rotate by pi about an axis perpendicular to u.
    int t = std::abs(u[0]) <= std::abs(u[1]) ? (std::abs(u[0]) <= std::abs(u[2]) ? 0 : 2)
                                             : (std::abs(u[1]) <= std::abs(u[2]) ? 1 : 2);
    double e[3] = {0, 0, 0};
    e[t] = 1.0;
    double d = e[0] * u[0] + e[1] * u[1] + e[2] * u[2];
    double w[3] = {e[0] - d * u[0], e[1] - d * u[1], e[2] - d * u[2]};
    double wn = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
    for (double& x : w) x /= wn;
    return axis_angle_matrix(w, kPi);
  }
  for (double& x : ax) x /= n;
  double theta = std::atan2(n, c);
  return axis_angle_matrix(ax, theta);
}

}  // namespace

RigidMotion RigidMotion::identity(int d) {
  RigidMotion m;
  m.dim = d;
  m.translation.assign(d, 0.0);
  m.anchor.assign(d, 0.0);
  return m;
}

RigidMotion RigidMotion::translate(std::vector<double> T) {
  RigidMotion m;
  m.dim = static_cast<int>(T.size());
  m.anchor.assign(m.dim, 0.0);
  m.translation = std::move(T);
  return m;
}

void RigidMotion::validate() const {
  require(dim >= 1 && dim <= 3, errc::invalid_argument, "rigid motion supports d in {1,2,3}");
  require(static_cast<int>(translation.size()) == dim &&
              static_cast<int>(anchor.size()) == dim,
          errc::dimension_mismatch, "rigid motion vector sizes");
  if (dim == 3) {
    double err = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int t = 0; t < 3; ++t) s += rot[i * 3 + t] * rot[j * 3 + t];
        err = std::max(err, std::abs(s - (i == j ? 1.0 : 0.0)));
      }
    require(err <= 1e-12, errc::invalid_argument, "rotation matrix not orthonormal");
    double det = rot[0] * (rot[4] * rot[8] - rot[5] * rot[7]) -
                 rot[1] * (rot[3] * rot[8] - rot[5] * rot[6]) +
                 rot[2] * (rot[3] * rot[7] - rot[4] * rot[6]);
    require(std::abs(det - 1.0) <= 1e-12, errc::invalid_argument, "rotation must have det +1");
  }
}

void RigidMotion::apply_point(const double* q, double* out) const {
  double tmp[3];
  if (dim == 2) {
    double off[2] = {q[0] - anchor[0], q[1] - anchor[1]};
    rotate2(angle, off, tmp);
  } else if (dim == 3) {
    double off[3] = {q[0] - anchor[0], q[1] - anchor[1], q[2] - anchor[2]};
    for (int i = 0; i < 3; ++i)
      tmp[i] = rot[i * 3] * off[0] + rot[i * 3 + 1] * off[1] + rot[i * 3 + 2] * off[2];
  } else {
    tmp[0] = q[0] - anchor[0];
  }
  for (int t = 0; t < dim; ++t) out[t] = tmp[t] + anchor[t] + translation[t];
}

WeightedPointSet RigidMotion::apply(const WeightedPointSet& Q) const {
  require(Q.dim() == dim, errc::dimension_mismatch, "rigid motion dimension mismatch");
  WeightedPointSet out(dim);
  out.reserve(Q.size());
  double buf[3];
  for (std::size_t i = 0; i < Q.size(); ++i) {
    apply_point(Q.point(i).data(), buf);
    out.add({buf, static_cast<std::size_t>(dim)}, Q.mass(i));
  }
  return out;
}

std::vector<double> RigidMotion::origin_translation() const {
  // apply(q) = R(q - anchor) + anchor + T = R(q) + (anchor + T - R(anchor)).
  std::vector<double> ra(dim);
  if (dim == 2) {
    rotate2(angle, anchor.data(), ra.data());
  } else if (dim == 3) {
    for (int i = 0; i < 3; ++i)
      ra[i] = rot[i * 3] * anchor[0] + rot[i * 3 + 1] * anchor[1] + rot[i * 3 + 2] * anchor[2];
  } else {
    ra[0] = anchor[0];
  }
  std::vector<double> t(dim);
  for (int i = 0; i < dim; ++i) t[i] = anchor[i] + translation[i] - ra[i];
  return t;
}

TranslationGrid make_translation_grid(std::vector<double> center, double radius, double spacing) {
  require(!center.empty() && center.size() <= 3, errc::invalid_argument,
          "translation grid supports d in {1,2,3}");
  require(radius >= 0.0 && spacing > 0.0, errc::invalid_argument, "grid radius/spacing");
  TranslationGrid g;
  g.dim = static_cast<int>(center.size());
  g.center = std::move(center);
  g.radius = radius;
  g.spacing = spacing;
  return g;
}

std::vector<double> TranslationGrid::cells() const {
  const double pitch = spacing / std::sqrt(static_cast<double>(dim));
  const double r = radius + spacing;  // inflate so covering survives the cut
  std::vector<double> out;
  std::int64_t lo[3] = {0, 0, 0}, hi[3] = {0, 0, 0};
  for (int t = 0; t < dim; ++t) {
    lo[t] = static_cast<std::int64_t>(std::floor((center[t] - r) / pitch));
    hi[t] = static_cast<std::int64_t>(std::ceil((center[t] + r) / pitch));
  }
  std::int64_t z[3] = {lo[0], lo[1], lo[2]};
  while (true) {
    double d2 = 0.0;
    double pt[3];
    for (int t = 0; t < dim; ++t) {
      pt[t] = pitch * static_cast<double>(z[t]);
      double d = pt[t] - center[t];
      d2 += d * d;
    }
    if (d2 <= r * r)
      for (int t = 0; t < dim; ++t) out.push_back(pt[t]);
    int t = dim - 1;
    while (t >= 0) {
      if (++z[t] <= hi[t]) break;
      z[t] = lo[t];
      --t;
    }
    if (t < 0) break;
  }
  return out;
}

RotationGrid rotation_grid(std::span<const double> p, std::span<const double> q,
                           const std::vector<std::vector<double>>& fixed, double eps_r,
                           double lambda, int d) {
  (void)p;  // the full covering grids below do not depend on the target point
  require(d == 2 || d == 3, errc::invalid_argument, "rotation_grid supports d in {2,3}");
  require(!fixed.empty() && static_cast<int>(fixed.size()) < d, errc::invalid_argument,
          "rotation_grid requires 1 <= |S| < d");
  require(eps_r > 0.0 && lambda > 0.0, errc::invalid_argument, "rotation_grid tolerances");
  require(static_cast<int>(q.size()) == d, errc::dimension_mismatch, "pivot dimension");

  RotationGrid g;
  g.dim = d;
  g.anchor = fixed[0];
  g.eps_r = eps_r;
  g.extent = lambda;

  double off[3] = {0, 0, 0};
  for (int t = 0; t < d; ++t) off[t] = q[t] - g.anchor[t];
  double r = std::sqrt(off[0] * off[0] + off[1] * off[1] + off[2] * off[2]);
  g.orbit_radius = r;

  if (d == 2) {
    if (r == 0.0) {
      g.angles = {0.0};
      g.rotations.push_back({1, 0, 0, 0, 1, 0, 0, 0, 1});
      return g;
    }
    double step = eps_r / std::max(lambda, r);
    std::size_t count = static_cast<std::size_t>(std::ceil(2.0 * kPi / step));
    g.angles.reserve(count);
    g.rotations.reserve(count);
    for (std::size_t j = 0; j < count; ++j) {
      double th = static_cast<double>(j) * step;
      g.angles.push_back(th);
      double c = std::cos(th), s = std::sin(th);
      g.rotations.push_back({c, -s, 0, s, c, 0, 0, 0, 1});
    }
    return g;
  }

  if (fixed.size() == 2) {
    double ax[3];
    double an = 0.0;
    for (int t = 0; t < 3; ++t) {
      ax[t] = fixed[1][t] - fixed[0][t];
      an += ax[t] * ax[t];
    }
    an = std::sqrt(an);
    if (an < 1e-300) return rotation_grid(p, q, {fixed[0]}, eps_r, lambda, d);
    for (double& x : ax) x /= an;
    double ad = off[0] * ax[0] + off[1] * ax[1] + off[2] * ax[2];
    double perp2 = off[0] * off[0] + off[1] * off[1] + off[2] * off[2] - ad * ad;
    double raxis = perp2 > 0.0 ? std::sqrt(perp2) : 0.0;
    if (raxis == 0.0) {
      g.rotations.push_back({1, 0, 0, 0, 1, 0, 0, 0, 1});
      return g;
    }
    double step = eps_r / std::max(lambda, raxis);
    std::size_t count = static_cast<std::size_t>(std::ceil(2.0 * kPi / step));
    g.rotations.reserve(count);
    for (std::size_t j = 0; j < count; ++j)
      g.rotations.push_back(axis_angle_matrix(ax, static_cast<double>(j) * step));
    return g;
  }

  // |S| = 1: Fibonacci sphere of image directions at angular resolution
  // eps_r / max(lambda, r).
  if (r == 0.0) {
    g.rotations.push_back({1, 0, 0, 0, 1, 0, 0, 0, 1});
    return g;
  }
  double u[3] = {off[0] / r, off[1] / r, off[2] / r};
  double res = eps_r / std::max(lambda, r);
  std::size_t count = static_cast<std::size_t>(std::ceil(4.0 * kPi / (res * res)));
  g.rotations.reserve(count);
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < count; ++i) {
    double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(count);
    double rr = std::sqrt(std::max(0.0, 1.0 - z * z));
    double phi = golden * static_cast<double>(i);
    double dir[3] = {rr * std::cos(phi), rr * std::sin(phi), z};
    g.rotations.push_back(min_rotation(u, dir));
  }
  return g;
}

void RotationGrid::apply(std::size_t i, const double* q, double* out) const {
  const auto& r = rotations[i];
  double off[3] = {0, 0, 0};
  for (int t = 0; t < dim; ++t) off[t] = q[t] - anchor[t];
  for (int t = 0; t < dim; ++t)
    out[t] = r[t * 3] * off[0] + r[t * 3 + 1] * off[1] + r[t * 3 + 2] * off[2] + anchor[t];
}

double alignment_objective(const GaussianKernel& k, const WeightedPointSet& P,
                           const WeightedPointSet& Q, const RigidMotion& motion) {
  motion.validate();
  require(P.dim() == Q.dim() && P.dim() == motion.dim, errc::dimension_mismatch,
          "alignment_objective: dimension mismatch");
  return kappa_exact(k, P, motion.apply(Q));
}

// ---------------------------------------------------------------------------
// Certified branch-and-bound argmax over the candidate grids. Blocks of
// (theta-range x translation-box) are pruned only when the per-pair bound
// sum mu nu K(max(0, dist - reduction)) proves every candidate inside is
// strictly below the running best, so the returned candidate and value equal
// exhaustive enumeration's.
// ---------------------------------------------------------------------------

namespace {

struct Cell {
  std::int32_t z[3];
  bool operator<(const Cell& o) const {
    if (z[0] != o.z[0]) return z[0] < o.z[0];
    if (z[1] != o.z[1]) return z[1] < o.z[1];
    return z[2] < o.z[2];
  }
  bool operator==(const Cell& o) const {
    return z[0] == o.z[0] && z[1] == o.z[1] && z[2] == o.z[2];
  }
};

// Sorted set of valid lattice cells: union of balls of radius lambda_in
// around the points of P, on the lattice {pitch * z} in original coordinates.
struct CellSet {
  int d = 2;
  double pitch = 1.0;
  std::vector<Cell> cells;

  void build(const WeightedPointSet& P, double lambda_in) {
    std::vector<Cell> raw;
    const double l2 = lambda_in * lambda_in;
    for (std::size_t i = 0; i < P.size(); ++i) {
      auto p = P.point(i);
      std::int64_t lo[3] = {0, 0, 0}, hi[3] = {0, 0, 0};
      for (int t = 0; t < d; ++t) {
        lo[t] = static_cast<std::int64_t>(std::floor((p[t] - lambda_in) / pitch));
        hi[t] = static_cast<std::int64_t>(std::ceil((p[t] + lambda_in) / pitch));
      }
      std::int64_t z[3] = {lo[0], lo[1], lo[2]};
      while (true) {
        double d2 = 0.0;
        for (int t = 0; t < d; ++t) {
          double dd = pitch * static_cast<double>(z[t]) - p[t];
          d2 += dd * dd;
        }
        if (d2 <= l2) {
          Cell c{};
          for (int t = 0; t < d; ++t) c.z[t] = static_cast<std::int32_t>(z[t]);
          raw.push_back(c);
          require(raw.size() < 40'000'000, errc::budget_exceeded,
                  "translation lattice too large for this eps/n");
        }
        int t = d - 1;
        while (t >= 0) {
          if (++z[t] <= hi[t]) break;
          z[t] = lo[t];
          --t;
        }
        if (t < 0) break;
      }
    }
    std::sort(raw.begin(), raw.end());
    raw.erase(std::unique(raw.begin(), raw.end()), raw.end());
    cells = std::move(raw);
    require(!cells.empty(), errc::invalid_argument, "empty translation lattice");
  }

  bool contains(const Cell& c) const {
    auto it = std::lower_bound(cells.begin(), cells.end(), c);
    return it != cells.end() && *it == c;
  }

  void bounds(double* lo, double* hi) const {
    std::int32_t zl[3] = {INT32_MAX, INT32_MAX, INT32_MAX};
    std::int32_t zh[3] = {INT32_MIN, INT32_MIN, INT32_MIN};
    for (const Cell& c : cells)
      for (int t = 0; t < d; ++t) {
        zl[t] = std::min(zl[t], c.z[t]);
        zh[t] = std::max(zh[t], c.z[t]);
      }
    for (int t = 0; t < d; ++t) {
      lo[t] = pitch * static_cast<double>(zl[t]);
      hi[t] = pitch * static_cast<double>(zh[t]);
    }
  }
};

struct CandidateKey {
  std::int64_t v[7];  // (pivot, aux1, aux2, theta index, z0, z1, z2)
  bool operator<(const CandidateKey& o) const {
    for (int i = 0; i < 7; ++i)
      if (v[i] != o.v[i]) return v[i] < o.v[i];
    return false;
  }
};

struct Best {
  double kappa = -1.0;
  CandidateKey key{};
  bool found = false;
  double theta = 0.0;
  Cell cell{};
  std::array<double, 9> base{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 3> axis{0, 0, 1};
  std::uint64_t evaluated = 0;

  bool improves(double kv, const CandidateKey& k) const {
    if (!found) return true;
    if (kv != kappa) return kv > kappa;
    return k < key;
  }
};

// One branch-and-bound problem: candidates are (pivot j, theta_m, cell z)
// with image(q) = R(theta) y_q + t and t = pitch*z - shift - R(theta) ref_j.
// R(theta) rotates about `axis` through the origin of the shifted frame
// (identity when `rotate` is false).
struct MotionSearch {
  int d = 2;
  bool rotate = false;
  double inv_s2 = 1.0;
  double pitch = 1.0;
  const CellSet* cells = nullptr;
  std::vector<double> shift;

  std::vector<double> ps, pw;
  std::vector<double> y, qw;
  std::vector<double> ry;  // per-q rotation displacement radius
  std::size_t np = 0, nq = 0;

  struct Pivot {
    double step = 0.0;       // theta step; 0 -> single angle 0
    std::int64_t count = 1;  // number of angles
    std::vector<double> ref;
  };
  std::vector<Pivot> pivots;

  mutable double cl_ = 1.0, sl_ = 0.0, ch_ = 1.0, sh_ = 0.0;
  std::int64_t key_pivot_base = 0;  // added to the pivot index in keys
  std::int64_t aux1 = 0, aux2 = 0;
  std::array<double, 9> base{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 3> axis{0, 0, 1};

  void rot(double theta, const double* x, double* out) const {
    if (!rotate || theta == 0.0) {
      std::copy(x, x + d, out);
      return;
    }
    if (d == 2)
      rotate2(theta, x, out);
    else
      rotate_axis(axis.data(), theta, x, out);
  }

  double eval(double theta, const double* t) const {
    double acc = 0.0;
    double img[3];
    for (std::size_t j = 0; j < nq; ++j) {
      rot(theta, y.data() + j * d, img);
      for (int k = 0; k < d; ++k) img[k] += t[k];
      double row = 0.0;
      for (std::size_t i = 0; i < np; ++i) {
        double d2 = 0.0;
        for (int k = 0; k < d; ++k) {
          double dd = ps[i * d + k] - img[k];
          d2 += dd * dd;
        }
        row += pw[i] * std::exp(-d2 * inv_s2);
      }
      acc += qw[j] * row;
    }
    return acc;
  }

  // Upper bound on exp(-x), table at the floor index of a decreasing
  // function; at most ~1% loose.
  static double exp_ub(double x) {
    constexpr int N = 4096;
    constexpr double range = 40.0;
    static const std::vector<double> table = [] {
      std::vector<double> t(N + 1);
      for (int i = 0; i <= N; ++i) t[i] = std::exp(-range * i / N);
      return t;
    }();
    if (x >= range) return 1.2e-18;
    int i = static_cast<int>(x * (N / range));
    return table[i];
  }

  // Block upper bound. The theta range maps each y_q to an arc of its orbit
  // circle about the axis; each pair distance is lower-bounded by the exact
  // point-to-arc distance (point-to-circle when the angular coordinate of p
  // falls inside the range, nearer arc endpoint otherwise), shrunk by the
  // box half-diagonal.
  // `bail` lets the accumulation stop early once the bound exceeds the
  // incumbent: the caller only needs to know whether ub < bail.
  double upper_bound(double theta, const double* t, double th_half, double t_half,
                     double bail = std::numeric_limits<double>::infinity()) const {
    double acc = 0.0;
    double img[3] = {0, 0, 0};
    const double* ax = axis.data();
    for (std::size_t j = 0; j < nq; ++j) {
      const double* yj = y.data() + j * d;
      rot(theta, yj, img);
      for (int k = 0; k < d; ++k) img[k] += t[k];
      const bool full_turn = th_half >= kPi;
      const bool arc = rotate && ry[j] > 0.0 && th_half > 0.0;
      double hj = 0.0, e1[3] = {0, 0, 0}, e2[3] = {0, 0, 0};
      double img_lo[3], img_hi[3];
      if (arc) {
        if (d == 3) {
          hj = yj[0] * ax[0] + yj[1] * ax[1] + yj[2] * ax[2];
          double v[3] = {yj[0] - hj * ax[0], yj[1] - hj * ax[1], yj[2] - hj * ax[2]};
          for (int k = 0; k < 3; ++k) e1[k] = v[k] / ry[j];
          e2[0] = ax[1] * e1[2] - ax[2] * e1[1];
          e2[1] = ax[2] * e1[0] - ax[0] * e1[2];
          e2[2] = ax[0] * e1[1] - ax[1] * e1[0];
        } else {
          e1[0] = yj[0] / ry[j];
          e1[1] = yj[1] / ry[j];
          e2[0] = -e1[1];
          e2[1] = e1[0];
        }
        if (!full_turn) {
          rot(theta - th_half, yj, img_lo);
          rot(theta + th_half, yj, img_hi);
          for (int k = 0; k < d; ++k) {
            img_lo[k] += t[k];
            img_hi[k] += t[k];
          }
          cl_ = std::cos(theta - th_half);
          sl_ = std::sin(theta - th_half);
          ch_ = std::cos(theta + th_half);
          sh_ = std::sin(theta + th_half);
        }
      }
      double row = 0.0;
      for (std::size_t i = 0; i < np; ++i) {
        const double* pi = ps.data() + i * d;
        double d2 = 0.0;
        for (int k = 0; k < d; ++k) {
          double dd = pi[k] - img[k];
          d2 += dd * dd;
        }
        double lower;
        if (!arc) {
          lower = std::sqrt(d2);
        } else {
          double rel[3] = {pi[0] - t[0], pi[1] - t[1], 0.0};
          double axial = 0.0, c1, c2;
          if (d == 3) {
            rel[2] = pi[2] - t[2];
            double ra = rel[0] * ax[0] + rel[1] * ax[1] + rel[2] * ax[2];
            axial = ra - hj;
            c1 = rel[0] * e1[0] + rel[1] * e1[1] + rel[2] * e1[2];
            c2 = rel[0] * e2[0] + rel[1] * e2[1] + rel[2] * e2[2];
          } else {
            c1 = rel[0] * e1[0] + rel[1] * e1[1];
            c2 = rel[0] * e2[0] + rel[1] * e2[1];
          }
          bool on_arc = full_turn;
          if (!on_arc) {
            // Sector test: (c1, c2) lies between the arc endpoint directions
            // (angles theta-th_half .. theta+th_half) iff it is on the
            // positive side of the lower edge and the negative side of the
            // upper edge (sector narrower than pi), else the complement
            // logic for wide sectors.
            double cl = cl_, sl = sl_, ch = ch_, sh = sh_;
            double cross_lo = cl * c2 - sl * c1;   // >0 means above lower edge
            double cross_hi = ch * c2 - sh * c1;   // <0 means below upper edge
            on_arc = th_half <= 0.5 * kPi ? (cross_lo >= 0.0 && cross_hi <= 0.0)
                                          : (cross_lo >= 0.0 || cross_hi <= 0.0);
          }
          if (on_arc) {
            double radial = std::sqrt(c1 * c1 + c2 * c2) - ry[j];
            lower = std::sqrt(axial * axial + radial * radial);
          } else {
            double dlo = 0.0, dhi = 0.0;
            for (int k = 0; k < d; ++k) {
              double a = pi[k] - img_lo[k], b = pi[k] - img_hi[k];
              dlo += a * a;
              dhi += b * b;
            }
            lower = std::sqrt(std::min(dlo, dhi));
          }
        }
        lower -= t_half;
        row += pw[i] * (lower <= 0.0 ? 1.0 : exp_ub(lower * lower * inv_s2));
      }
      acc += qw[j] * row;
      // A bailed value must stay "unpruneable" even if the incumbent rises
      // later, so report it as unbounded rather than the partial sum.
      if (acc * 1.0000000001 >= bail) return std::numeric_limits<double>::infinity();
    }
    return acc * 1.0000000001 + 1e-300;
  }

  struct Block {
    double tlo[3], thi[3];
    double th_lo = 0.0, th_hi = 0.0;
    double ub = 0.0;
  };

  void enumerate_block(const Block& b, Best& best) const {
    for (std::size_t j = 0; j < pivots.size(); ++j) {
      const Pivot& pv = pivots[j];
      std::int64_t m_lo = 0, m_hi = 0;
      if (pv.step > 0.0) {
        m_lo = std::max<std::int64_t>(
            0, static_cast<std::int64_t>(std::floor(b.th_lo / pv.step)) - 1);
        m_hi = std::min<std::int64_t>(
            pv.count - 1, static_cast<std::int64_t>(std::ceil(b.th_hi / pv.step)) + 1);
      } else if (b.th_lo > 0.0 || b.th_hi <= 0.0) {
        continue;  // the single angle 0 lies outside this theta range
      }
      for (std::int64_t m = m_lo; m <= m_hi; ++m) {
        double theta = pv.step * static_cast<double>(m);
        if (pv.step > 0.0 && !(theta >= b.th_lo && theta < b.th_hi)) continue;
        double rref[3] = {0, 0, 0};
        rot(theta, pv.ref.data(), rref);
        std::int64_t zlo[3] = {0, 0, 0}, zhi[3] = {0, 0, 0};
        for (int k = 0; k < d; ++k) {
          double a = b.tlo[k] + rref[k] + shift[k];
          double bn = b.thi[k] + rref[k] + shift[k];
          zlo[k] = static_cast<std::int64_t>(std::floor(a / pitch)) - 1;
          zhi[k] = static_cast<std::int64_t>(std::ceil(bn / pitch)) + 1;
        }
        std::int64_t z[3] = {zlo[0], zlo[1], zlo[2]};
        while (true) {
          double t[3] = {0, 0, 0};
          bool inside = true;
          for (int k = 0; k < d; ++k) {
            t[k] = pitch * static_cast<double>(z[k]) - shift[k] - rref[k];
            if (!(t[k] >= b.tlo[k] && t[k] < b.thi[k])) inside = false;
          }
          if (inside) {
            Cell c{};
            for (int k = 0; k < d; ++k) c.z[k] = static_cast<std::int32_t>(z[k]);
            if (cells->contains(c)) {
              double kv = eval(theta, t);
              ++best.evaluated;
              CandidateKey key{{key_pivot_base + static_cast<std::int64_t>(j), aux1, aux2, m,
                                c.z[0], c.z[1], c.z[2]}};
              if (best.improves(kv, key)) {
                best.kappa = kv;
                best.key = key;
                best.found = true;
                best.theta = theta;
                best.cell = c;
                best.base = base;
                best.axis = axis;
              }
            }
          }
          int k = d - 1;
          while (k >= 0) {
            if (++z[k] <= zhi[k]) break;
            z[k] = zlo[k];
            --k;
          }
          if (k < 0) break;
        }
      }
    }
  }

  void run(Best& best) const {
    double max_ref = 0.0;
    for (const auto& pv : pivots) {
      double n2 = 0.0;
      for (int k = 0; k < d; ++k) n2 += pv.ref[k] * pv.ref[k];
      max_ref = std::max(max_ref, std::sqrt(n2));
    }
    bool any_rotation = false;
    double min_step = std::numeric_limits<double>::infinity();
    for (const auto& pv : pivots)
      if (pv.step > 0.0) {
        any_rotation = true;
        min_step = std::min(min_step, pv.step);
      }

    Block root;
    double clo[3], chi[3];
    cells->bounds(clo, chi);
    for (int k = 0; k < d; ++k) {
      root.tlo[k] = clo[k] - shift[k] - max_ref - 1e-9;
      root.thi[k] = chi[k] - shift[k] + max_ref + 1e-9;
    }
    root.th_lo = 0.0;
    root.th_hi = any_rotation ? 2.0 * kPi : 1.0;

    double max_ry = 0.0;
    for (double r : ry) max_ry = std::max(max_ry, r);

    auto score = [&](Block& b) {
      double th_half = any_rotation ? 0.5 * (b.th_hi - b.th_lo) : 0.0;
      double s = 0.0;
      for (int k = 0; k < d; ++k) {
        double h = 0.5 * (b.thi[k] - b.tlo[k]);
        s += h * h;
      }
      double t_half = std::sqrt(s);
      double tc[3] = {0, 0, 0};
      for (int k = 0; k < d; ++k) tc[k] = 0.5 * (b.tlo[k] + b.thi[k]);
      double thc = any_rotation ? 0.5 * (b.th_lo + b.th_hi) : 0.0;
      b.ub = upper_bound(thc, tc, th_half, t_half, best.found ? best.kappa : 1e300);
    };

    score(root);
    // Depth-first: bounded memory, and leaves (hence a strong incumbent)
    // are reached immediately, after which the bound prunes hard.
    std::vector<Block> stack;
    stack.push_back(root);

    while (!stack.empty()) {
      Block b = stack.back();
      stack.pop_back();
      if (best.found && b.ub < best.kappa) continue;

      double th_span = any_rotation ? (b.th_hi - b.th_lo) : 0.0;
      bool leaf = th_span * max_ry <= pitch &&
                  (!any_rotation || th_span <= 2.0 * min_step || max_ry == 0.0);
      for (int k = 0; k < d; ++k)
        if (b.thi[k] - b.tlo[k] > 2.0 * pitch) leaf = false;
      if (leaf) {
        enumerate_block(b, best);
        continue;
      }

      int split_axis = -1;  // -1 -> split theta
      double split_len = any_rotation ? th_span * std::max(max_ry, pitch) : -1.0;
      for (int k = 0; k < d; ++k) {
        double len = b.thi[k] - b.tlo[k];
        if (len > split_len) {
          split_len = len;
          split_axis = k;
        }
      }
      Block lo_b = b, hi_b = b;
      if (split_axis < 0) {
        double mid = 0.5 * (b.th_lo + b.th_hi);
        lo_b.th_hi = mid;
        hi_b.th_lo = mid;
      } else {
        double mid = 0.5 * (b.tlo[split_axis] + b.thi[split_axis]);
        lo_b.thi[split_axis] = mid;
        hi_b.tlo[split_axis] = mid;
      }
      score(lo_b);
      score(hi_b);
      if (lo_b.ub < hi_b.ub) std::swap(lo_b, hi_b);  // explore the stronger child first
      if (!best.found || hi_b.ub >= best.kappa) stack.push_back(hi_b);
      if (!best.found || lo_b.ub >= best.kappa) stack.push_back(lo_b);
    }
  }
};

struct SearchInputs {
  int d = 0;
  std::vector<double> shift;
  std::vector<double> ps, pw;
  std::vector<double> qs, qw;
};

SearchInputs make_inputs(const WeightedPointSet& P, const WeightedPointSet& Q) {
  SearchInputs in;
  in.d = P.dim();
  in.shift = Q.centroid();
  in.ps.resize(P.size() * in.d);
  in.pw = P.masses();
  for (std::size_t i = 0; i < P.size(); ++i)
    for (int k = 0; k < in.d; ++k) in.ps[i * in.d + k] = P.point(i)[k] - in.shift[k];
  in.qs.resize(Q.size() * in.d);
  in.qw = Q.masses();
  for (std::size_t i = 0; i < Q.size(); ++i)
    for (int k = 0; k < in.d; ++k) in.qs[i * in.d + k] = Q.point(i)[k] - in.shift[k];
  return in;
}

AlignResult finish(const GaussianKernel& k, const WeightedPointSet& P, const WeightedPointSet& Q,
                   RigidMotion motion, std::uint64_t evaluated) {
  motion.validate();
  AlignResult res;
  res.kappa = alignment_objective(k, P, Q, motion);
  double v = kappa_exact(k, P, P) + kappa_exact(k, Q, Q) - 2.0 * res.kappa;
  if (v < 0.0) {
    double w = std::max(P.total_mass(), Q.total_mass());
    require(v >= -1e-9 * w * w, errc::numerical_instability,
            "achieved kernel distance radicand below clamp tolerance");
    v = 0.0;
  }
  res.dk2 = v;
  res.motion = std::move(motion);
  res.candidates_evaluated = evaluated;
  return res;
}

AlignResult translation_search(const GaussianKernel& k, const WeightedPointSet& P,
                               const WeightedPointSet& Q, double eps) {
  const int d = P.dim();
  const double n = static_cast<double>(std::max(P.size(), Q.size()));
  const double lambda = k.sigma * std::sqrt(std::log(std::max(n * n, 2.0)));
  const double spacing = 0.5 * eps * k.sigma;

  CellSet cells;
  cells.d = d;
  cells.pitch = spacing / std::sqrt(static_cast<double>(d));
  cells.build(P, lambda + spacing);

  SearchInputs in = make_inputs(P, Q);
  MotionSearch ms;
  ms.d = d;
  ms.rotate = false;
  ms.inv_s2 = 1.0 / (k.sigma * k.sigma);
  ms.pitch = cells.pitch;
  ms.cells = &cells;
  ms.shift = in.shift;
  ms.ps = std::move(in.ps);
  ms.pw = std::move(in.pw);
  ms.y = in.qs;
  ms.qw = std::move(in.qw);
  ms.np = P.size();
  ms.nq = Q.size();
  ms.ry.assign(ms.nq, 0.0);
  ms.pivots.resize(ms.nq);
  for (std::size_t j = 0; j < ms.nq; ++j)
    ms.pivots[j].ref.assign(ms.y.begin() + j * d, ms.y.begin() + (j + 1) * d);

  Best best;
  ms.run(best);
  require(best.found, errc::invalid_argument, "translation search found no candidate");

  std::vector<double> T(d);
  std::size_t jq = static_cast<std::size_t>(best.key.v[0]);
  for (int t = 0; t < d; ++t)
    T[t] = cells.pitch * static_cast<double>(best.cell.z[t]) - Q.point(jq)[t];
  return finish(k, P, Q, RigidMotion::translate(std::move(T)), best.evaluated);
}

// Rigid search without the size guard (the coreset variant enters here).
AlignResult rigid_search(const GaussianKernel& k, const WeightedPointSet& P,
                         const WeightedPointSet& Q, double eps) {
  const int d = P.dim();
  const double nn = static_cast<double>(std::max(P.size(), Q.size()));
  const double lambda_t =
      k.sigma * std::sqrt(std::log(std::max(1.0 / eps, std::max(nn * nn, 2.0))));
  const double eps_r = (eps / d) * k.sigma;
  const double lambda_r = k.sigma * std::sqrt(std::log(1.0 / eps));
  const double spacing = (eps / d) * k.sigma;

  CellSet cells;
  cells.d = d;
  cells.pitch = spacing / std::sqrt(static_cast<double>(d));
  cells.build(P, lambda_t + spacing);

  SearchInputs in = make_inputs(P, Q);
  const std::size_t nq = Q.size();
  Best best;

  MotionSearch ms;
  ms.d = d;
  ms.rotate = true;
  ms.inv_s2 = 1.0 / (k.sigma * k.sigma);
  ms.pitch = cells.pitch;
  ms.cells = &cells;
  ms.shift = in.shift;
  ms.ps = in.ps;
  ms.pw = in.pw;
  ms.qw = in.qw;
  ms.np = P.size();
  ms.nq = nq;

  if (d == 2) {
    ms.y = in.qs;
    ms.ry.resize(nq);
    for (std::size_t j = 0; j < nq; ++j) {
      double n2 = 0.0;
      for (int t = 0; t < d; ++t) n2 += ms.y[j * d + t] * ms.y[j * d + t];
      ms.ry[j] = std::sqrt(n2);
    }
    ms.pivots.resize(nq);
    for (std::size_t j = 0; j < nq; ++j) {
      double rmax = 0.0;
      for (std::size_t j2 = 0; j2 < nq; ++j2) {
        double n2 = 0.0;
        for (int t = 0; t < d; ++t) {
          double dd = ms.y[j2 * d + t] - ms.y[j * d + t];
          n2 += dd * dd;
        }
        rmax = std::max(rmax, std::sqrt(n2));
      }
      auto& pv = ms.pivots[j];
      pv.ref.assign(ms.y.begin() + j * d, ms.y.begin() + (j + 1) * d);
      if (rmax == 0.0) {
        pv.step = 0.0;
        pv.count = 1;
      } else {
        pv.step = eps_r / std::max(lambda_r, rmax);
        pv.count = static_cast<std::int64_t>(std::ceil(2.0 * kPi / pv.step));
      }
    }
    ms.run(best);
    require(best.found, errc::invalid_argument, "rigid search found no candidate");

    std::size_t j1 = static_cast<std::size_t>(best.key.v[0]);
    RigidMotion motion;
    motion.dim = 2;
    motion.angle = best.theta;
    motion.anchor.assign(Q.point(j1).begin(), Q.point(j1).end());
    motion.translation.resize(2);
    for (int t = 0; t < 2; ++t)
      motion.translation[t] =
          cells.pitch * static_cast<double>(best.cell.z[t]) - motion.anchor[t];
    return finish(k, P, Q, std::move(motion), best.evaluated);
  }

  // d == 3: candidates are (q1, q2, sphere direction, axis angle, cell).
  // One global best-first queue spans every (q1, q2, dir) branch, so the
  // basin is located once and all remaining branches prune against it.
  // Per branch, the A1 locality restricts translations to cells where the
  // image of q2 (which is g + r2*dir, independent of the axis angle) lands
  // within lambda_r + eps*sigma + snap of some p -- the proof only needs
  // tuples satisfying that proximity.
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  const double a1_radius = lambda_r + eps * k.sigma + spacing;
  const std::size_t np = P.size();
  ms.y.resize(nq * 3);
  ms.ry.resize(nq);
  ms.pivots.resize(1);
  ms.pivots[0].ref.assign(3, 0.0);

  struct Branch {
    std::uint32_t j1, j2, di;
    std::uint32_t ndirs;
  };
  struct Block3 {
    Branch br;
    double tlo[3], thi[3];
    double th_lo, th_hi;
    double ub;
  };
  std::vector<Block3> stack3;

  // Offsets about each pivot, orbit radii, per-pivot grids.
  std::vector<double> off(nq * 3);
  std::vector<double> a1_centers(np * 3);  // p - r2*dir per branch, original coords
  double cells_lo[3], cells_hi[3];
  cells.bounds(cells_lo, cells_hi);

  struct BranchCtx {
    std::array<double, 9> base;
    double dir[3];
    double axis_step;
    std::int64_t theta_count;
    bool valid = false;
  };
  Branch cur{UINT32_MAX, UINT32_MAX, UINT32_MAX, 0};
  BranchCtx ctx;

  auto fib_dir = [&](std::uint32_t di, std::uint32_t ndirs, double* dir) {
    double zz = 1.0 - (2.0 * static_cast<double>(di) + 1.0) / static_cast<double>(ndirs);
    double rr = std::sqrt(std::max(0.0, 1.0 - zz * zz));
    double phi = golden * static_cast<double>(di);
    dir[0] = rr * std::cos(phi);
    dir[1] = rr * std::sin(phi);
    dir[2] = zz;
  };

  auto load_branch = [&](const Branch& br) {
    if (cur.j1 == br.j1 && cur.j2 == br.j2 && cur.di == br.di) return;
    cur = br;
    const double* q1 = in.qs.data() + br.j1 * 3;
    double rmax = 0.0;
    for (std::size_t j = 0; j < nq; ++j) {
      double n2 = 0.0;
      for (int t = 0; t < 3; ++t) {
        off[j * 3 + t] = in.qs[j * 3 + t] - q1[t];
        n2 += off[j * 3 + t] * off[j * 3 + t];
      }
      rmax = std::max(rmax, std::sqrt(n2));
    }
    ms.key_pivot_base = static_cast<std::int64_t>(br.j1);
    if (br.j2 == UINT32_MAX) {
      // Degenerate branch: all of Q coincident with q1, pure translation.
      ms.rotate = false;
      for (std::size_t j = 0; j < nq * 3; ++j) ms.y[j] = off[j];
      ms.ry.assign(nq, 0.0);
      ms.aux1 = -1;
      ms.aux2 = -1;
      ms.pivots[0].step = 0.0;
      ms.pivots[0].count = 1;
      for (std::size_t i = 0; i < np; ++i)
        for (int t = 0; t < 3; ++t) a1_centers[i * 3 + t] = P.point(i)[t];
      ctx.valid = true;
      return;
    }
    ms.rotate = true;
    double r2 = 0.0;
    for (int t = 0; t < 3; ++t) r2 += off[br.j2 * 3 + t] * off[br.j2 * 3 + t];
    r2 = std::sqrt(r2);
    double u2[3] = {off[br.j2 * 3] / r2, off[br.j2 * 3 + 1] / r2, off[br.j2 * 3 + 2] / r2};
    fib_dir(br.di, br.ndirs, ctx.dir);
    ctx.base = min_rotation(u2, ctx.dir);
    for (std::size_t j = 0; j < nq; ++j)
      for (int t = 0; t < 3; ++t)
        ms.y[j * 3 + t] = ctx.base[t * 3] * off[j * 3] + ctx.base[t * 3 + 1] * off[j * 3 + 1] +
                          ctx.base[t * 3 + 2] * off[j * 3 + 2];
    for (std::size_t j = 0; j < nq; ++j) {
      double ad = 0.0, n2 = 0.0;
      for (int t = 0; t < 3; ++t) {
        ad += ms.y[j * 3 + t] * ctx.dir[t];
        n2 += ms.y[j * 3 + t] * ms.y[j * 3 + t];
      }
      double perp2 = n2 - ad * ad;
      ms.ry[j] = perp2 > 0.0 ? std::sqrt(perp2) : 0.0;
    }
    ms.axis = {ctx.dir[0], ctx.dir[1], ctx.dir[2]};
    ms.base = ctx.base;
    ms.aux1 = static_cast<std::int64_t>(br.j2);
    ms.aux2 = static_cast<std::int64_t>(br.di);
    ctx.axis_step = eps_r / std::max(lambda_r, rmax);
    ctx.theta_count = static_cast<std::int64_t>(std::ceil(2.0 * kPi / ctx.axis_step));
    ms.pivots[0].step = ctx.axis_step;
    ms.pivots[0].count = ctx.theta_count;
    // A1 ball centers p - r2*dir (image of q2 is g + r2*dir for every angle).
    for (std::size_t i = 0; i < np; ++i)
      for (int t = 0; t < 3; ++t) a1_centers[i * 3 + t] = P.point(i)[t] - r2 * ctx.dir[t];
    ctx.valid = true;
  };

  auto a1_pass = [&](const double* g) {
    for (std::size_t i = 0; i < np; ++i) {
      double d2 = 0.0;
      for (int t = 0; t < 3; ++t) {
        double dd = g[t] - a1_centers[i * 3 + t];
        d2 += dd * dd;
      }
      if (d2 <= a1_radius * a1_radius) return true;
    }
    return false;
  };

  auto score3 = [&](Block3& b) {
    double th_half = ms.rotate ? 0.5 * (b.th_hi - b.th_lo) : 0.0;
    double s = 0.0;
    for (int t = 0; t < 3; ++t) {
      double h = 0.5 * (b.thi[t] - b.tlo[t]);
      s += h * h;
    }
    double tc[3];
    for (int t = 0; t < 3; ++t) tc[t] = 0.5 * (b.tlo[t] + b.thi[t]);
    double thc = ms.rotate ? 0.5 * (b.th_lo + b.th_hi) : 0.0;
    b.ub = ms.upper_bound(thc, tc, th_half, std::sqrt(s), best.found ? best.kappa : 1e300);
  };

  // Root blocks per branch: one per A1 pocket (the ball around p - r2*dir
  // where the image of q2 may land), so each root is tight enough for the
  // circle bound to kill hopeless branches in a single evaluation. A cell in
  // two overlapping pockets is enumerated twice with the same key, which the
  // incumbent comparison absorbs.
  auto push_root = [&](const Branch& br) {
    load_branch(br);
    const double reach = a1_radius + lambda_t + 2.0 * cells.pitch;
    for (std::size_t i = 0; i < np; ++i) {
      // The pocket must touch some ball of valid cells.
      bool reachable = false;
      for (std::size_t i1 = 0; i1 < np && !reachable; ++i1) {
        double d2 = 0.0;
        for (int t = 0; t < 3; ++t) {
          double dd = a1_centers[i * 3 + t] - P.point(i1)[t];
          d2 += dd * dd;
        }
        reachable = d2 <= reach * reach;
      }
      if (!reachable) continue;
      Block3 root;
      root.br = br;
      bool ok = true;
      for (int t = 0; t < 3; ++t) {
        double lo = std::max(a1_centers[i * 3 + t] - a1_radius, cells_lo[t] - cells.pitch);
        double hi = std::min(a1_centers[i * 3 + t] + a1_radius, cells_hi[t] + cells.pitch);
        if (lo > hi) {
          ok = false;
          break;
        }
        root.tlo[t] = lo - in.shift[t] - 1e-9;
        root.thi[t] = hi - in.shift[t] + 1e-9;
      }
      if (!ok) continue;
      root.th_lo = 0.0;
      root.th_hi = ms.rotate ? 2.0 * kPi : 1.0;
      score3(root);
      if (!best.found || root.ub >= best.kappa) stack3.push_back(root);
    }
  };

  // Seed the incumbent by evaluating candidates built from point
  // correspondences: snap q1 onto p1, aim q2's image at p2, coarse angle
  // scan. These are ordinary candidate-set members, so they only raise the
  // incumbent; with a strong incumbent the blocks below prune on push.
  auto try_candidate = [&](double theta, std::int64_t m, const Cell& c) {
    double g[3], t3[3];
    for (int t = 0; t < 3; ++t) {
      g[t] = cells.pitch * static_cast<double>(c.z[t]);
      t3[t] = g[t] - in.shift[t];
    }
    if (!cells.contains(c) || !a1_pass(g)) return;
    double kv = ms.eval(theta, t3);
    ++best.evaluated;
    CandidateKey key{{ms.key_pivot_base, ms.aux1, ms.aux2, m, c.z[0], c.z[1], c.z[2]}};
    if (best.improves(kv, key)) {
      best.kappa = kv;
      best.key = key;
      best.found = true;
      best.theta = theta;
      best.cell = c;
      best.base = ms.base;
      best.axis = ms.axis;
    }
  };

  auto snap_cell = [&](std::span<const double> p) {
    Cell c{};
    for (int t = 0; t < 3; ++t)
      c.z[t] = static_cast<std::int32_t>(std::llround(p[t] / cells.pitch));
    return c;
  };

  auto seed_branch = [&](const Branch& br) {
    load_branch(br);
    for (std::size_t i = 0; i < np; ++i) try_candidate(0.0, 0, snap_cell(P.point(i)));
  };

  auto nearest_dir = [&](const double* v, std::uint32_t ndirs) {
    std::uint32_t bi = 0;
    double bd = -2.0;
    double dir[3];
    for (std::uint32_t di = 0; di < ndirs; ++di) {
      fib_dir(di, ndirs, dir);
      double dot = dir[0] * v[0] + dir[1] * v[1] + dir[2] * v[2];
      if (dot > bd) {
        bd = dot;
        bi = di;
      }
    }
    return bi;
  };

  auto seed_pairs = [&](std::uint32_t j1, std::uint32_t j2, std::uint32_t ndirs) {
    for (std::size_t i1 = 0; i1 < np; ++i1) {
      Cell c = snap_cell(P.point(i1));
      double g[3];
      for (int t = 0; t < 3; ++t) g[t] = cells.pitch * static_cast<double>(c.z[t]);
      for (std::size_t i2 = 0; i2 < np; ++i2) {
        if (i2 == i1) continue;
        double v[3];
        double n2 = 0.0;
        for (int t = 0; t < 3; ++t) {
          v[t] = P.point(i2)[t] - g[t];
          n2 += v[t] * v[t];
        }
        if (n2 < 1e-24) continue;
        double n = std::sqrt(n2);
        for (int t = 0; t < 3; ++t) v[t] /= n;
        Branch br{j1, j2, nearest_dir(v, ndirs), ndirs};
        load_branch(br);
        std::int64_t count = ms.pivots[0].count;
        std::int64_t stride = std::max<std::int64_t>(1, count / 12);
        for (std::int64_t m = 0; m < count; m += stride)
          try_candidate(ms.pivots[0].step * static_cast<double>(m), m, c);
      }
    }
  };

  struct BranchPlan {
    std::size_t j1, j2;
    std::uint32_t ndirs;
  };
  std::vector<BranchPlan> plans;
  for (std::size_t j1 = 0; j1 < nq; ++j1) {
    bool any_branch = false;
    const double* q1 = in.qs.data() + j1 * 3;
    for (std::size_t j2 = 0; j2 < nq; ++j2) {
      if (j2 == j1) continue;
      double r2 = 0.0;
      for (int t = 0; t < 3; ++t) {
        double dd = in.qs[j2 * 3 + t] - q1[t];
        r2 += dd * dd;
      }
      r2 = std::sqrt(r2);
      if (r2 == 0.0) continue;
      any_branch = true;
      double res = eps_r / std::max(lambda_r, r2);
      std::uint32_t ndirs = static_cast<std::uint32_t>(std::ceil(4.0 * kPi / (res * res)));
      plans.push_back({j1, j2, ndirs});
      // Seed with the direction grid point closest to u2 (base near identity).
      double u2[3] = {(in.qs[j2 * 3] - q1[0]) / r2, (in.qs[j2 * 3 + 1] - q1[1]) / r2,
                      (in.qs[j2 * 3 + 2] - q1[2]) / r2};
      std::uint32_t best_di = 0;
      double best_dot = -2.0;
      for (std::uint32_t di = 0; di < ndirs; ++di) {
        double dir[3];
        fib_dir(di, ndirs, dir);
        double dot = dir[0] * u2[0] + dir[1] * u2[1] + dir[2] * u2[2];
        if (dot > best_dot) {
          best_dot = dot;
          best_di = di;
        }
      }
      seed_branch({static_cast<std::uint32_t>(j1), static_cast<std::uint32_t>(j2), best_di,
                   ndirs});
      seed_pairs(static_cast<std::uint32_t>(j1), static_cast<std::uint32_t>(j2), ndirs);
    }
    if (!any_branch) {
      plans.push_back({j1, SIZE_MAX, 0});
      seed_branch({static_cast<std::uint32_t>(j1), UINT32_MAX, UINT32_MAX, 0});
    }
  }
  for (const auto& plan : plans) {
    if (plan.j2 == SIZE_MAX) {
      push_root({static_cast<std::uint32_t>(plan.j1), UINT32_MAX, UINT32_MAX, 0});
      continue;
    }
    for (std::uint32_t di = 0; di < plan.ndirs; ++di)
      push_root({static_cast<std::uint32_t>(plan.j1), static_cast<std::uint32_t>(plan.j2), di,
                 plan.ndirs});
  }

  const double pitch = cells.pitch;
  const bool dbg = std::getenv("KD_ALIGN_DEBUG") != nullptr;
  if (dbg)
    std::fprintf(stderr, "[align3d] roots=%zu seed_best=%.4f evaluated=%llu\n", stack3.size(),
                 best.kappa, (unsigned long long)best.evaluated);
  std::uint64_t pops = 0, leaves = 0;
  while (!stack3.empty()) {
    Block3 b = stack3.back();
    stack3.pop_back();
    if (best.found && b.ub < best.kappa) continue;
    ++pops;
    if (dbg && pops % 2000000 == 0)
      std::fprintf(stderr, "[align3d] pops=%llu stack=%zu best=%.4f leaves=%llu\n",
                   (unsigned long long)pops, stack3.size(), best.kappa,
                   (unsigned long long)leaves);
    load_branch(b.br);

    double max_ry = 0.0;
    if (ms.rotate)
      for (double r : ms.ry) max_ry = std::max(max_ry, r);
    double th_span = ms.rotate ? (b.th_hi - b.th_lo) : 0.0;
    bool leaf = th_span * max_ry <= pitch &&
                (!ms.rotate || th_span <= 2.0 * ms.pivots[0].step || max_ry == 0.0 ||
                 ms.pivots[0].step == 0.0);
    for (int t = 0; t < 3; ++t)
      if (b.thi[t] - b.tlo[t] > 2.0 * pitch) leaf = false;
    if (leaf) {
      ++leaves;
      // Same enumeration as MotionSearch, plus the per-branch A1 filter.
      const auto& pv = ms.pivots[0];
      std::int64_t m_lo = 0, m_hi = 0;
      if (pv.step > 0.0) {
        m_lo = std::max<std::int64_t>(
            0, static_cast<std::int64_t>(std::floor(b.th_lo / pv.step)) - 1);
        m_hi = std::min<std::int64_t>(
            pv.count - 1, static_cast<std::int64_t>(std::ceil(b.th_hi / pv.step)) + 1);
      } else if (b.th_lo > 0.0 || b.th_hi <= 0.0) {
        m_hi = -1;
      }
      for (std::int64_t m = m_lo; m <= m_hi; ++m) {
        double theta = pv.step * static_cast<double>(m);
        if (pv.step > 0.0 && !(theta >= b.th_lo && theta < b.th_hi)) continue;
        std::int64_t zlo[3], zhi[3];
        for (int t = 0; t < 3; ++t) {
          zlo[t] = static_cast<std::int64_t>(
                       std::floor((b.tlo[t] + in.shift[t]) / pitch)) - 1;
          zhi[t] = static_cast<std::int64_t>(
                       std::ceil((b.thi[t] + in.shift[t]) / pitch)) + 1;
        }
        std::int64_t z[3] = {zlo[0], zlo[1], zlo[2]};
        while (true) {
          double t3[3], g[3];
          bool inside = true;
          for (int t = 0; t < 3; ++t) {
            g[t] = pitch * static_cast<double>(z[t]);
            t3[t] = g[t] - in.shift[t];
            if (!(t3[t] >= b.tlo[t] && t3[t] < b.thi[t])) inside = false;
          }
          if (inside) {
            Cell c{};
            for (int t = 0; t < 3; ++t) c.z[t] = static_cast<std::int32_t>(z[t]);
            if (cells.contains(c) && a1_pass(g)) {
              double kv = ms.eval(theta, t3);
              ++best.evaluated;
              CandidateKey key{{ms.key_pivot_base, ms.aux1, ms.aux2, m, c.z[0], c.z[1], c.z[2]}};
              if (best.improves(kv, key)) {
                best.kappa = kv;
                best.key = key;
                best.found = true;
                best.theta = theta;
                best.cell = c;
                best.base = ms.base;
                best.axis = ms.axis;
              }
            }
          }
          int t = 2;
          while (t >= 0) {
            if (++z[t] <= zhi[t]) break;
            z[t] = zlo[t];
            --t;
          }
          if (t < 0) break;
        }
      }
      continue;
    }

    int split_axis = -1;
    double split_len = ms.rotate ? th_span * std::max(max_ry, pitch) : -1.0;
    for (int t = 0; t < 3; ++t) {
      double len = b.thi[t] - b.tlo[t];
      if (len > split_len) {
        split_len = len;
        split_axis = t;
      }
    }
    Block3 lo_b = b, hi_b = b;
    if (split_axis < 0) {
      double mid = 0.5 * (b.th_lo + b.th_hi);
      lo_b.th_hi = mid;
      hi_b.th_lo = mid;
    } else {
      double mid = 0.5 * (b.tlo[split_axis] + b.thi[split_axis]);
      lo_b.thi[split_axis] = mid;
      hi_b.tlo[split_axis] = mid;
    }
    score3(lo_b);
    score3(hi_b);
    if (lo_b.ub < hi_b.ub) std::swap(lo_b, hi_b);
    if (!best.found || hi_b.ub >= best.kappa) stack3.push_back(hi_b);
    if (!best.found || lo_b.ub >= best.kappa) stack3.push_back(lo_b);
  }
  if (dbg)
    std::fprintf(stderr, "[align3d] done pops=%llu leaves=%llu best=%.4f evaluated=%llu\n",
                 (unsigned long long)pops, (unsigned long long)leaves, best.kappa,
                 (unsigned long long)best.evaluated);
  require(best.found, errc::invalid_argument, "rigid search found no candidate");

  std::size_t j1 = static_cast<std::size_t>(best.key.v[0]);
  RigidMotion motion;
  motion.dim = 3;
  motion.rot = best.theta == 0.0 ? best.base
                                 : mat_mul(axis_angle_matrix(best.axis.data(), best.theta),
                                           best.base);
  motion.anchor.assign(Q.point(j1).begin(), Q.point(j1).end());
  motion.translation.resize(3);
  for (int t = 0; t < 3; ++t)
    motion.translation[t] = cells.pitch * static_cast<double>(best.cell.z[t]) - motion.anchor[t];
  return finish(k, P, Q, std::move(motion), best.evaluated);
}

void check_align_args(const WeightedPointSet& P, const WeightedPointSet& Q, double eps) {
  require(eps > 0.0 && eps < 1.0, errc::invalid_argument, "alignment eps must lie in (0,1)");
  require(!P.empty() && !Q.empty(), errc::invalid_argument, "alignment needs nonempty sets");
  require(P.dim() == Q.dim(), errc::dimension_mismatch, "alignment dimension mismatch");
}

WeightedPointSet coreset_or_full(const WeightedPointSet& X, std::size_t k, std::uint64_t seed) {
  if (k >= X.size()) return X;
  return coreset_random(X, k, seed).subset;
}

}  // namespace

AlignResult best_translation(const GaussianKernel& k, const WeightedPointSet& P,
                             const WeightedPointSet& Q, double eps) {
  check_align_args(P, Q, eps);
  require(P.dim() <= 3, errc::invalid_argument, "alignment search supports d in {1,2,3}");
  return translation_search(k, P, Q, eps);
}

AlignResult best_translation_coreset(const GaussianKernel& k, const WeightedPointSet& P,
                                     const WeightedPointSet& Q, double eps, double delta,
                                     std::uint64_t seed) {
  check_align_args(P, Q, eps);
  require(P.dim() <= 3, errc::invalid_argument, "alignment search supports d in {1,2,3}");
  require(delta > 0.0 && delta < 1.0, errc::invalid_argument, "delta must lie in (0,1)");
  std::size_t kc = coreset_size_random(eps, delta / 2.0, P.dim());
  WeightedPointSet SP = coreset_or_full(P, kc, rng::Stream::mix(seed + 1));
  WeightedPointSet SQ = coreset_or_full(Q, kc, rng::Stream::mix(seed + 2));
  AlignResult inner = translation_search(k, SP, SQ, eps);
  return finish(k, P, Q, std::move(inner.motion), inner.candidates_evaluated);
}

AlignResult best_rigid_motion(const GaussianKernel& k, const WeightedPointSet& P,
                              const WeightedPointSet& Q, double eps) {
  check_align_args(P, Q, eps);
  const int d = P.dim();
  require(d == 2 || d == 3, errc::invalid_argument, "rigid motion search supports d in {2,3}");
  const std::size_t n = std::max(P.size(), Q.size());
  if (d == 2)
    require(n <= 60, errc::budget_exceeded,
            "best_rigid_motion: n > 60 for d=2; use best_rigid_motion_coreset");
  else
    require(n <= 25, errc::budget_exceeded,
            "best_rigid_motion: n > 25 for d=3; use best_rigid_motion_coreset");
  return rigid_search(k, P, Q, eps);
}

AlignResult best_rigid_motion_coreset(const GaussianKernel& k, const WeightedPointSet& P,
                                      const WeightedPointSet& Q, double eps, double delta,
                                      std::uint64_t seed) {
  check_align_args(P, Q, eps);
  const int d = P.dim();
  require(d == 2 || d == 3, errc::invalid_argument, "rigid motion search supports d in {2,3}");
  require(delta > 0.0 && delta < 1.0, errc::invalid_argument, "delta must lie in (0,1)");
  std::size_t kc = coreset_size_random(eps, delta / 2.0, d);
  WeightedPointSet SP = coreset_or_full(P, kc, rng::Stream::mix(seed + 1));
  WeightedPointSet SQ = coreset_or_full(Q, kc, rng::Stream::mix(seed + 2));
  AlignResult inner = rigid_search(k, SP, SQ, eps);
  return finish(k, P, Q, std::move(inner.motion), inner.candidates_evaluated);
}

}  // namespace kd
