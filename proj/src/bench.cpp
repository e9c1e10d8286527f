#include "kd/bench.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "kd/features.hpp"
#include "kd/kappa.hpp"
#include "kd/kernel.hpp"
#include "kd/rng.hpp"
#include "kd/wspd.hpp"

namespace kd {

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

template <class F>
double timed(F&& f, double& out_value) {
  double t0 = now_ms();
  out_value = f();
  return now_ms() - t0;
}

}  // namespace

WeightedPointSet bench_instance(std::size_t n, int d, double side, std::uint64_t seed,
                                std::uint64_t salt) {
  rng::Stream rs(rng::Stream::mix(seed + salt), rng::streams::bench);
  WeightedPointSet P(d);
  P.reserve(n);
  std::vector<double> x(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (int t = 0; t < d; ++t) x[t] = side * rs.next_double();
    P.add(x, 1.0);
  }
  return P;
}

std::vector<BenchRow> bench_scaling(const std::vector<std::size_t>& sizes, double eps,
                                    double delta, double sigma, std::uint64_t seed) {
  GaussianKernel k(sigma);
  std::vector<BenchRow> rows;
  const int d = 2;

  for (std::size_t n : sizes) {
    // Spread family: pair pruning bites, the wspd estimator shines.
    {
      WeightedPointSet P = bench_instance(n, d, 40.0 * sigma, seed, 1);
      WeightedPointSet Q = bench_instance(n, d, 40.0 * sigma, seed, 2);
      double exact = 0.0, approx = 0.0;
      double ms_exact = timed([&] { return kernel_distance_sq_exact(k, P, Q); }, exact);
      double ms_wspd = timed([&] { return kernel_distance_sq_wspd(k, P, Q, eps); }, approx);
      rows.push_back({"spread", "exact", n, eps, ms_exact, exact, -1.0});
      rows.push_back({"spread", "wspd", n, eps, ms_wspd, approx, std::abs(approx - exact)});
    }
    // Compact family: normalized diameter small enough for the Taylor basis.
    {
      WeightedPointSet P = bench_instance(n, d, 2.0 * sigma, seed, 3);
      WeightedPointSet Q = bench_instance(n, d, 2.0 * sigma, seed, 4);
      double exact = 0.0;
      double ms_exact = timed([&] { return kernel_distance_sq_exact(k, P, Q); }, exact);
      rows.push_back({"compact", "exact", n, eps, ms_exact, exact, -1.0});

      double v_ifgt = 0.0;
      double ms_ifgt = timed(
          [&] {
            WeightedPointSet U(d);
            for (std::size_t i = 0; i < P.size(); ++i) U.add(P.point(i), P.mass(i));
            for (std::size_t i = 0; i < Q.size(); ++i) U.add(Q.point(i), Q.mass(i));
            std::vector<double> c = U.centroid();
            double Delta = 2.0 * U.radius_about(c) / sigma;
            int tau = ifgt_choose_tau(eps / 3.0, Delta);
            TaylorBasis basis = make_taylor_basis(sigma, tau, c);
            return kernel_distance_sq_features(ifgt_embed(basis, P), ifgt_embed(basis, Q));
          },
          v_ifgt);
      rows.push_back({"compact", "ifgt", n, eps, ms_ifgt, v_ifgt, std::abs(v_ifgt - exact)});

      double v_rff = 0.0;
      double ms_rff = timed(
          [&] {
            std::size_t rho = rff_dimension(eps, delta, std::max(P.size(), Q.size()));
            FourierBasis basis = draw_frequencies(sigma, d, rho, seed);
            return kernel_distance_sq_features(rff_embed(basis, P), rff_embed(basis, Q));
          },
          v_rff);
      rows.push_back({"compact", "rff", n, eps, ms_rff, v_rff, std::abs(v_rff - exact)});
    }
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os << "family,method,n,eps,ms,value,abs_err\n";
  os.setf(std::ios::fmtflags(0), std::ios::floatfield);
  os.precision(12);
  for (const auto& r : rows) {
    os << r.family << ',' << r.method << ',' << r.n << ',' << r.eps << ',' << r.ms << ','
       << r.value << ',' << r.abs_err << '\n';
  }
  return os.str();
}

}  // namespace kd
