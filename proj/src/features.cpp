#include "kd/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

#include "kd/rng.hpp"
#include "kd/summation.hpp"

namespace kd {

namespace {
constexpr std::size_t kRhoCap = 10'000'000;

void check_rho(std::size_t rho) {
  require(rho <= kRhoCap, errc::budget_exceeded,
          "feature dimension rho exceeds the 1e7 cap");
}
}  // namespace

FourierBasis draw_frequencies(double sigma, int d, std::size_t rho, std::uint64_t seed) {
  require(sigma > 0.0, errc::invalid_argument, "sigma must be positive");
  require(d >= 1, errc::invalid_argument, "dimension must be >= 1");
  require(rho >= 2 && rho % 2 == 0, errc::invalid_argument, "rho must be even and >= 2");
  check_rho(rho);
  FourierBasis b;
  b.sigma = sigma;
  b.dim = d;
  b.rho = rho;
  b.seed = seed;
  b.freqs.resize((rho / 2) * static_cast<std::size_t>(d));
  rng::Stream rs(seed, rng::streams::fourier);
  const double scale = std::sqrt(2.0) / sigma;  // covariance (2/sigma^2) I
  for (double& f : b.freqs) f = scale * rs.next_gaussian();
  return b;
}

std::size_t rff_dimension(double eps, double delta, std::size_t n) {
  require(eps > 0.0 && eps < 1.0, errc::invalid_argument, "eps must lie in (0,1)");
  require(delta > 0.0 && delta < 1.0, errc::invalid_argument, "delta must lie in (0,1)");
  require(n >= 1, errc::invalid_argument, "n must be >= 1");
  double dn = static_cast<double>(n);
  double v = (32.0 / (eps * eps)) * std::log(2.0 * dn * dn / delta);
  std::size_t rho = 2 * static_cast<std::size_t>(std::ceil(v));
  rho = std::max<std::size_t>(rho, 2);
  check_rho(rho);
  return rho;
}

std::size_t rff_dimension_domain(double eps, double delta, double Delta, int d) {
  require(eps > 0.0 && eps < 1.0, errc::invalid_argument, "eps must lie in (0,1)");
  require(delta > 0.0 && delta < 1.0, errc::invalid_argument, "delta must lie in (0,1)");
  require(Delta > 0.0, errc::invalid_argument, "Delta must be positive");
  require(d >= 1, errc::invalid_argument, "dimension must be >= 1");
  double v = (32.0 * d / (eps * eps)) * std::log(2.0 * Delta / (eps * delta));
  std::size_t rho = 2 * static_cast<std::size_t>(std::ceil(v));
  rho = std::max<std::size_t>(rho, 2);
  check_rho(rho);
  return rho;
}

namespace {
void enumerate_rec(int d, int axis, int remaining, std::vector<int>& cur, std::vector<int>& out) {
  if (axis == d - 1) {
    cur[axis] = remaining;
    out.insert(out.end(), cur.begin(), cur.end());
    return;
  }
  for (int a = 0; a <= remaining; ++a) {
    cur[axis] = a;
    enumerate_rec(d, axis + 1, remaining - a, cur, out);
  }
}
}  // namespace

std::vector<int> multiindex_enumerate(int d, int tau) {
  require(d >= 1, errc::invalid_argument, "d must be >= 1");
  require(tau >= 1, errc::invalid_argument, "tau must be >= 1");
  std::vector<int> out;
  out.reserve(multiindex_count(d, tau) * d);
  std::vector<int> cur(d, 0);
  for (int deg = 0; deg <= tau - 1; ++deg) enumerate_rec(d, 0, deg, cur, out);
  return out;
}

std::size_t multiindex_count(int d, int tau) {
  // C(tau + d - 1, d)
  long double v = 1.0L;
  for (int i = 1; i <= d; ++i) v = v * (tau - 1 + i) / i;
  return static_cast<std::size_t>(std::llroundl(v));
}

int ifgt_choose_tau(double eps, double Delta) {
  require(eps > 0.0 && eps < 1.0, errc::invalid_argument, "eps must lie in (0,1)");
  require(Delta > 0.0, errc::invalid_argument, "Delta must be positive");
  const double log_eps = std::log(eps);
  for (int tau = 1;; ++tau) {
    double lt = tau * std::log(2.0) - std::lgamma(tau + 1.0) + 2.0 * tau * std::log(Delta);
    if (lt <= log_eps) return tau;
  }
}

TaylorBasis make_taylor_basis(double sigma, int tau, std::vector<double> center) {
  require(sigma > 0.0, errc::invalid_argument, "sigma must be positive");
  require(tau >= 1, errc::invalid_argument, "tau must be >= 1");
  require(!center.empty(), errc::invalid_argument, "center must be non-empty");
  TaylorBasis b;
  b.sigma = sigma;
  b.dim = static_cast<int>(center.size());
  b.tau = tau;
  b.center = std::move(center);
  b.rho = multiindex_count(b.dim, tau);
  check_rho(b.rho);
  b.multiindices = multiindex_enumerate(b.dim, tau);
  b.coeff.resize(b.rho);
  for (std::size_t i = 0; i < b.rho; ++i) {
    const int* a = b.multiindices.data() + i * b.dim;
    double log_c = 0.0;
    int total = 0;
    for (int k = 0; k < b.dim; ++k) {
      total += a[k];
      log_c -= std::lgamma(a[k] + 1.0);
    }
    log_c += total * std::log(2.0);
    require(0.5 * log_c < 700.0, errc::numerical_instability,
            "taylor coefficient overflows double range");
    b.coeff[i] = std::exp(0.5 * log_c);
  }

  // Monomial recurrence links: u^a = u^(a - e_j) * u_j, j = first nonzero
  // axis. The parent always precedes its children in graded lex order.
  b.parent.assign(b.rho, 0);
  b.axis.assign(b.rho, 0);
  std::map<std::vector<int>, std::uint32_t> pos;
  std::vector<int> key(b.dim);
  for (std::size_t i = 0; i < b.rho; ++i) {
    key.assign(b.multiindices.data() + i * b.dim, b.multiindices.data() + (i + 1) * b.dim);
    pos[key] = static_cast<std::uint32_t>(i);
  }
  for (std::size_t i = 1; i < b.rho; ++i) {
    const int* a = b.multiindices.data() + i * b.dim;
    int j = 0;
    while (a[j] == 0) ++j;
    key.assign(a, a + b.dim);
    key[j] -= 1;
    b.parent[i] = pos.at(key);
    b.axis[i] = j;
  }
  return b;
}

double taylor_delta(const TaylorBasis& basis, const WeightedPointSet& P) {
  require(P.dim() == basis.dim, errc::dimension_mismatch, "taylor_delta: dimension mismatch");
  return 2.0 * P.radius_about(basis.center) / basis.sigma;
}

bool FeatureVector::same_basis(const FeatureVector& o) const {
  if (kind != o.kind || dim != o.dim || rho != o.rho || sigma != o.sigma) return false;
  if (kind == BasisKind::fourier) return seed == o.seed;
  return tau == o.tau && center == o.center;
}

FeatureVector rff_embed(const FourierBasis& basis, const WeightedPointSet& P) {
  require(P.dim() == basis.dim, errc::dimension_mismatch, "rff_embed: dimension mismatch");
  FeatureVector fv;
  fv.kind = BasisKind::fourier;
  fv.dim = basis.dim;
  fv.rho = basis.rho;
  fv.sigma = basis.sigma;
  fv.seed = basis.seed;
  fv.values.assign(basis.rho, 0.0);

  const std::size_t nf = basis.rho / 2;
  const int d = basis.dim;
  const double scale = std::sqrt(2.0 / static_cast<double>(basis.rho));
  const std::size_t n = P.size();

  const std::size_t nchunks = std::min<std::size_t>(8, std::max<std::size_t>(n, 1));
  std::vector<std::vector<double>> partial(nchunks);

#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < nchunks; ++c) {
    std::size_t lo = c * n / nchunks, hi = (c + 1) * n / nchunks;
    auto& acc = partial[c];
    acc.assign(basis.rho, 0.0);
    for (std::size_t i = lo; i < hi; ++i) {
      auto p = P.point(i);
      const double w = P.mass(i) * scale;
      for (std::size_t f = 0; f < nf; ++f) {
        const double* om = basis.freqs.data() + f * d;
        double dot = 0.0;
        for (int k = 0; k < d; ++k) dot += om[k] * p[k];
        acc[2 * f] += w * std::cos(dot);
        acc[2 * f + 1] += w * std::sin(dot);
      }
    }
  }
  for (const auto& acc : partial)
    if (!acc.empty())
      for (std::size_t j = 0; j < basis.rho; ++j) fv.values[j] += acc[j];
  return fv;
}

FeatureVector ifgt_embed(const TaylorBasis& basis, const WeightedPointSet& P) {
  require(P.dim() == basis.dim, errc::dimension_mismatch, "ifgt_embed: dimension mismatch");
  FeatureVector fv;
  fv.kind = BasisKind::taylor;
  fv.dim = basis.dim;
  fv.rho = basis.rho;
  fv.sigma = basis.sigma;
  fv.tau = basis.tau;
  fv.center = basis.center;
  fv.values.assign(basis.rho, 0.0);

  const int d = basis.dim;
  const std::size_t rho = basis.rho;
  const auto& parent = basis.parent;
  const auto& axis = basis.axis;

  // Magnitude guard: max |coeff_a * u^a| stays in double range.
  double max_r = P.empty() ? 0.0 : P.radius_about(basis.center) / basis.sigma;
  if (max_r > 1.0) {
    double worst = (basis.tau - 1) * (0.5 * std::log(2.0) + std::log(max_r));
    require(worst < 690.0, errc::numerical_instability,
            "ifgt_embed: tau * log(Delta) too large for double range");
  }

  std::vector<double> mono(rho);
  std::vector<double> u(d);
  const double inv_s = 1.0 / basis.sigma;
  const double inv_s2 = inv_s * inv_s;
  for (std::size_t i = 0; i < P.size(); ++i) {
    auto p = P.point(i);
    double r2 = 0.0;
    for (int k = 0; k < d; ++k) {
      u[k] = (p[k] - basis.center[k]) * inv_s;
      double dk = p[k] - basis.center[k];
      r2 += dk * dk;
    }
    const double g = P.mass(i) * std::exp(-r2 * inv_s2);
    mono[0] = 1.0;
    for (std::size_t m = 1; m < rho; ++m) mono[m] = mono[parent[m]] * u[axis[m]];
    for (std::size_t m = 0; m < rho; ++m) fv.values[m] += g * basis.coeff[m] * mono[m];
  }
  return fv;
}

double kernel_distance_sq_features(const FeatureVector& a, const FeatureVector& b) {
  require(a.same_basis(b), errc::invalid_argument,
          "kernel_distance_features: feature vectors use different bases");
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    double d = a.values[i] - b.values[i];
    s += d * d;
  }
  return s < 0.0 ? 0.0 : s;
}

std::size_t nn_query(const std::vector<FeatureVector>& corpus, const FeatureVector& query) {
  require(!corpus.empty(), errc::invalid_argument, "nn_query: empty corpus");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    double d = kernel_distance_sq_features(corpus[i], query);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

namespace {
constexpr char kMagic[4] = {'K', 'D', 'F', 'V'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(bool(is), errc::parse_error, "feature vector file truncated");
  return v;
}
}  // namespace

void write_feature_vector(std::ostream& os, const FeatureVector& fv) {
  os.write(kMagic, 4);
  put<std::uint32_t>(os, 1);  // version
  put<std::uint8_t>(os, static_cast<std::uint8_t>(fv.kind));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(fv.dim));
  put<std::uint64_t>(os, fv.rho);
  put<double>(os, fv.sigma);
  if (fv.kind == BasisKind::fourier) {
    put<std::uint64_t>(os, fv.seed);
  } else {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(fv.tau));
    for (double c : fv.center) put<double>(os, c);
  }
  for (double v : fv.values) put<double>(os, v);
}

FeatureVector read_feature_vector(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  require(bool(is) && std::memcmp(magic, kMagic, 4) == 0, errc::parse_error,
          "not a feature vector file");
  auto version = get<std::uint32_t>(is);
  require(version == 1, errc::parse_error, "unsupported feature vector version");
  FeatureVector fv;
  fv.kind = static_cast<BasisKind>(get<std::uint8_t>(is));
  fv.dim = static_cast<int>(get<std::uint32_t>(is));
  fv.rho = get<std::uint64_t>(is);
  check_rho(fv.rho);
  fv.sigma = get<double>(is);
  if (fv.kind == BasisKind::fourier) {
    fv.seed = get<std::uint64_t>(is);
  } else {
    fv.tau = static_cast<int>(get<std::uint32_t>(is));
    fv.center.resize(fv.dim);
    for (double& c : fv.center) c = get<double>(is);
  }
  fv.values.resize(fv.rho);
  for (double& v : fv.values) v = get<double>(is);
  return fv;
}

void write_feature_vector_file(const std::string& path, const FeatureVector& fv) {
  std::ofstream os(path, std::ios::binary);
  require(bool(os), errc::io_error, "cannot open " + path + " for writing");
  write_feature_vector(os, fv);
  require(bool(os), errc::io_error, "write failed: " + path);
}

FeatureVector read_feature_vector_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(bool(is), errc::io_error, "cannot open " + path);
  return read_feature_vector(is);
}

}  // namespace kd
