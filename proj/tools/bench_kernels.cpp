// Compares the OpenMP kernels against the serial reference implementations
// on identical inputs: same results (to reassociation tolerance), wall times
// side by side.

#include <chrono>
#include <cmath>
#include <cstdio>

#include "kd/bench.hpp"
#include "kd/coreset.hpp"
#include "kd/features.hpp"
#include "kd/kappa.hpp"
#include "kd/reference.hpp"

using namespace kd;

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

void report(const char* name, double serial_ms, double parallel_ms, double rel_diff) {
  std::printf("%-24s serial %9.2f ms   parallel %9.2f ms   speedup %5.2fx   rel_diff %.2e\n",
              name, serial_ms, parallel_ms, serial_ms / parallel_ms, rel_diff);
}

}  // namespace

int main(int argc, char** argv) {
  std::size_t n = argc > 1 ? static_cast<std::size_t>(std::atoll(argv[1])) : 4000;
  GaussianKernel k(1.0);
  WeightedPointSet P = bench_instance(n, 2, 4.0, 7, 1);
  WeightedPointSet Q = bench_instance(n, 2, 4.0, 7, 2);

  {
    double t0 = now_ms();
    double a = reference::kappa_exact(k, P, Q);
    double t1 = now_ms();
    double b = kappa_exact(k, P, Q);
    double t2 = now_ms();
    report("kappa_exact", t1 - t0, t2 - t1, std::abs(a - b) / std::abs(a));
  }
  {
    std::size_t rho = 4096;
    FourierBasis basis = draw_frequencies(1.0, 2, rho, 99);
    double t0 = now_ms();
    std::vector<double> ref = reference::rff_embed_values(1.0, basis.freqs, rho, P);
    double t1 = now_ms();
    FeatureVector fv = rff_embed(basis, P);
    double t2 = now_ms();
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < rho; ++i) {
      diff = std::max(diff, std::abs(ref[i] - fv.values[i]));
      norm = std::max(norm, std::abs(ref[i]));
    }
    report("rff_embed(4096)", t1 - t0, t2 - t1, norm > 0 ? diff / norm : 0.0);
  }
  {
    Coreset S = coreset_random(P, std::max<std::size_t>(n / 8, 1), 3);
    std::vector<double> queries = P.coords();
    double t0 = now_ms();
    double a = reference::kernel_discrepancy(k, P, S.subset, queries, 2);
    double t1 = now_ms();
    double b = kernel_discrepancy(k, P, S, queries);
    double t2 = now_ms();
    report("kernel_discrepancy", t1 - t0, t2 - t1, std::abs(a - b));
  }
  return 0;
}
