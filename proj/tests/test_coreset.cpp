#include <doctest.h>

#include <cmath>

#include "kd/coreset.hpp"
#include "kd/kappa.hpp"
#include "kd/reference.hpp"
#include "oracles.hpp"

using namespace kd;

namespace {

Coreset trivial_coreset(const WeightedPointSet& P) {
  Coreset S;
  S.subset = P;
  S.parent_size = P.size();
  for (std::size_t i = 0; i < P.size(); ++i) S.indices.push_back(i);
  return S;
}

}  // namespace

TEST_CASE("coreset_size_random values and monotonicity") {
  CHECK(coreset_size_random(0.2, 0.1, 2) == 861);
  CHECK(coreset_size_random(0.1, 0.1, 2) > coreset_size_random(0.2, 0.1, 2));
  CHECK(coreset_size_random(0.2, 0.05, 2) > coreset_size_random(0.2, 0.1, 2));
  CHECK(coreset_size_random(1.0, 0.5, 1) >= 1);
  CHECK_THROWS_AS(coreset_size_random(0.0, 0.1, 2), error);
  CHECK_THROWS_AS(coreset_size_random(0.2, 0.0, 2), error);
}

TEST_CASE("coreset_random membership, masses, determinism") {
  auto P = oracle::random_set(120, 2, 2.0, 7, 1.0);
  const double w = P.total_mass();
  Coreset a = coreset_random(P, 120, 3);
  CHECK(a.subset.size() == 120);
  CHECK(a.subset.total_mass() == doctest::Approx(w).epsilon(1e-12));
  for (std::size_t i = 0; i < a.subset.size(); ++i) {
    CHECK(a.subset.mass(i) == doctest::Approx(w / 120.0).epsilon(1e-15));
    CHECK(a.indices[i] < P.size());
    CHECK(std::equal(a.subset.point(i).begin(), a.subset.point(i).end(),
                     P.point(a.indices[i]).begin()));
  }
  Coreset b = coreset_random(P, 120, 3);
  CHECK(a.subset.coords() == b.subset.coords());
  Coreset c = coreset_random(P, 120, 4);
  CHECK(a.subset.coords() != c.subset.coords());

  WeightedPointSet empty(2);
  CHECK_THROWS_AS(coreset_random(empty, 4, 1), error);
  CHECK_THROWS_AS(coreset_random(P, 0, 1), error);
}

TEST_CASE("coreset distance consequence of the discrepancy chain") {
  GaussianKernel k(1.0);
  auto P = oracle::random_set(300, 2, 2.0, 11);
  Coreset S = coreset_random(P, coreset_size_random(0.2, 0.1, 2), 5);
  std::vector<double> queries = default_discrepancy_queries(k, P, 0.2);
  double disc = kernel_discrepancy(k, P, S, queries);
  double w = P.total_mass();
  double d2 = kernel_distance_sq_exact(k, P, S.subset);
  // D_K^2(P,S) = kappa(P,P)-kappa(P,S) + kappa(S,S)-kappa(S,P) <= 2 disc W^2.
  CHECK(d2 <= 2.0 * disc * w * w + 1e-9);
}

TEST_CASE("kernel_discrepancy of the trivial coreset is zero") {
  GaussianKernel k(1.0);
  auto P = oracle::random_set(50, 2, 2.0, 13, 0.5);
  Coreset S = trivial_coreset(P);
  std::vector<double> queries = default_discrepancy_queries(k, P, 0.2);
  CHECK(kernel_discrepancy(k, P, S, queries) == 0.0);
  CHECK_THROWS_AS(kernel_discrepancy(k, P, S, {}), error);
}

TEST_CASE("kernel_discrepancy agrees with the serial reference") {
  GaussianKernel k(0.9);
  auto P = oracle::random_set(80, 2, 2.0, 17, 0.5);
  Coreset S = coreset_random(P, 30, 2);
  std::vector<double> queries = default_discrepancy_queries(k, P, 0.3);
  double fast = kernel_discrepancy(k, P, S, queries);
  double slow = reference::kernel_discrepancy(k, P, S.subset, queries, 2);
  CHECK(fast == doctest::Approx(slow).epsilon(1e-12));
}

TEST_CASE("kernel_discrepancy two-point hand instance") {
  GaussianKernel k(1.0);
  WeightedPointSet P(1);
  P.add({{0.0}});
  P.add({{1.0}});
  Coreset S;
  S.subset = WeightedPointSet(1);
  S.subset.add({{0.0}}, 2.0);
  S.parent_size = 2;

  // max_q |(K(p1,q)+K(p2,q))/2 - K(p1,q)| = max_q |K(p2,q)-K(p1,q)|/2,
  // computed on a dense 1D scan as the oracle.
  double best = 0.0;
  for (double q = -4.0; q <= 5.0; q += 1e-4) {
    double v = std::abs(std::exp(-(q - 1.0) * (q - 1.0)) - std::exp(-q * q)) / 2.0;
    best = std::max(best, v);
  }
  std::vector<double> queries = default_discrepancy_queries(k, P, 0.05);
  double got = kernel_discrepancy(k, P, S, queries);
  CHECK(got == doctest::Approx(best).epsilon(1e-3));
  CHECK(got <= best * (1.0 + 1e-12));  // finite queries never exceed the sup
}

TEST_CASE("coreset size calibration") {
  // The pinned C = 8 size reaches discrepancy <= eps in >= 90% of trials at
  // eps = 0.2, delta = 0.1, d = 2, n in the hundreds (criterion 6 runs the
  // full n = 1000 version).
  GaussianKernel k(1.0);
  const double eps = 0.2;
  auto P = oracle::random_set(200, 2, 2.0, 23);
  std::size_t ksize = coreset_size_random(eps, 0.1, 2);
  CHECK(ksize == 861);
  std::vector<double> queries = default_discrepancy_queries(k, P, eps);
  int ok = 0;
  const int trials = 50;
  for (int t = 0; t < trials; ++t) {
    Coreset S = coreset_random(P, ksize, 100 + t);
    if (kernel_discrepancy(k, P, S, queries) <= eps) ++ok;
  }
  CHECK(ok >= 45);
}

TEST_CASE("ball_discrepancy basics") {
  auto P = oracle::random_set(25, 2, 2.0, 31);
  Coreset S = trivial_coreset(P);
  CHECK(ball_discrepancy(P, S) == 0.0);

  // 1D interval example: P = {1,2,3,4} unit masses, S = {2,4} masses 2.
  WeightedPointSet P1(1);
  for (double x : {1.0, 2.0, 3.0, 4.0}) P1.add({{x}});
  Coreset S1;
  S1.subset = WeightedPointSet(1);
  S1.subset.add({{2.0}}, 2.0);
  S1.subset.add({{4.0}}, 2.0);
  S1.parent_size = 4;
  CHECK(ball_discrepancy(P1, S1) == doctest::Approx(0.25).epsilon(1e-12));

  WeightedPointSet P5(4);
  P5.add({{0.0, 0.0, 0.0, 0.0}});
  Coreset S5 = trivial_coreset(P5);
  CHECK_THROWS_AS(ball_discrepancy(P5, S5), error);

  auto big = oracle::random_set(501, 2, 1.0, 32);
  CHECK_THROWS_AS(ball_discrepancy(big, trivial_coreset(big)), error);
}

TEST_CASE("ball_discrepancy dominates random ball probes") {
  auto P = oracle::random_set(40, 2, 2.0, 41);
  Coreset S = coreset_random(P, 15, 3);
  double canon = ball_discrepancy(P, S);

  const double wp = P.total_mass(), ws = S.subset.total_mass();
  rng::Stream rs(43, rng::streams::tests);
  for (int t = 0; t < 20000; ++t) {
    double c[2] = {4.0 * rs.next_double() - 1.0, 4.0 * rs.next_double() - 1.0};
    double r = 2.5 * rs.next_double();
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) {
      double dx = P.point(i)[0] - c[0], dy = P.point(i)[1] - c[1];
      if (dx * dx + dy * dy <= r * r) a += P.mass(i);
    }
    for (std::size_t i = 0; i < S.subset.size(); ++i) {
      double dx = S.subset.point(i)[0] - c[0], dy = S.subset.point(i)[1] - c[1];
      if (dx * dx + dy * dy <= r * r) b += S.subset.mass(i);
    }
    CHECK(std::abs(b / ws - a / wp) <= canon + 1e-12);
  }
}

TEST_CASE("ball_discrepancy in 3D on a small instance") {
  auto P = oracle::random_set(12, 3, 1.5, 47);
  Coreset S = coreset_random(P, 6, 9);
  double v = ball_discrepancy(P, S);
  CHECK(v >= 0.0);
  CHECK(v <= 1.0);
  CHECK(ball_discrepancy(P, trivial_coreset(P)) == 0.0);
}

TEST_CASE("kernel discrepancy is bounded by ball discrepancy (linked range space)") {
  GaussianKernel k(1.0);
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    int d = seed % 2 == 0 ? 1 : 2;
    auto P = oracle::random_set(60, d, 2.0, 700 + seed);
    Coreset S = coreset_random(P, 25, 800 + seed);
    std::vector<double> queries = default_discrepancy_queries(k, P, 0.2);
    double kd = kernel_discrepancy(k, P, S, queries);
    double bd = ball_discrepancy(P, S);
    CHECK(kd <= bd + 0.01);
  }
}

TEST_CASE("discrepancies are invariant to mass scaling") {
  GaussianKernel k(1.0);
  auto P = oracle::random_set(40, 2, 2.0, 51, 0.5);
  Coreset S = coreset_random(P, 20, 7);
  std::vector<double> queries = default_discrepancy_queries(k, P, 0.25);
  double kd0 = kernel_discrepancy(k, P, S, queries);
  double bd0 = ball_discrepancy(P, S);

  WeightedPointSet P4(2);
  for (std::size_t i = 0; i < P.size(); ++i) P4.add(P.point(i), 4.0 * P.mass(i));
  Coreset S4;
  S4.subset = WeightedPointSet(2);
  for (std::size_t i = 0; i < S.subset.size(); ++i)
    S4.subset.add(S.subset.point(i), 4.0 * S.subset.mass(i));
  S4.parent_size = S.parent_size;
  CHECK(kernel_discrepancy(k, P4, S4, queries) == kd0);  // power-of-two scale: bitwise
  CHECK(ball_discrepancy(P4, S4) == bd0);

  WeightedPointSet P3(2);
  for (std::size_t i = 0; i < P.size(); ++i) P3.add(P.point(i), 3.0 * P.mass(i));
  Coreset S3;
  S3.subset = WeightedPointSet(2);
  for (std::size_t i = 0; i < S.subset.size(); ++i)
    S3.subset.add(S.subset.point(i), 3.0 * S.subset.mass(i));
  S3.parent_size = S.parent_size;
  CHECK(kernel_discrepancy(k, P3, S3, queries) == doctest::Approx(kd0).epsilon(1e-13));
}

TEST_CASE("certificate chain: summed discrepancies bound the kappa gap") {
  GaussianKernel k(1.0);
  for (std::uint64_t seed : {61ull, 62ull, 63ull}) {
    auto P = oracle::random_set(120, 2, 2.0, seed);
    auto Q = oracle::random_set(110, 2, 2.0, seed + 10);
    Coreset SP = coreset_random(P, 50, seed + 20);
    Coreset SQ = coreset_random(Q, 50, seed + 30);

    // Discrepancies evaluated at the query points the derivation sums over.
    std::vector<double> qp = Q.coords();
    qp.insert(qp.end(), SQ.subset.coords().begin(), SQ.subset.coords().end());
    double disc_p = kernel_discrepancy(k, P, SP, qp);
    std::vector<double> qq = SP.subset.coords();
    double disc_q = kernel_discrepancy(k, Q, SQ, qq);

    double gap = std::abs(kappa_exact(k, P, Q) - kappa_exact(k, SP.subset, SQ.subset));
    double wp = P.total_mass(), wq = Q.total_mass();
    CHECK(gap <= (disc_p + disc_q) * wp * wq * (1.0 + 1e-9));
    double w2 = std::max(wp, wq) * std::max(wp, wq);
    CHECK(gap / w2 <= 2.0 * std::max(disc_p, disc_q) + 1e-9);
  }
}

TEST_CASE("coreset_feature_bound certificate") {
  GaussianKernel k(1.0);
  auto P = oracle::random_set(60, 2, 1.5, 71);
  FourierBasis basis = draw_frequencies(1.0, 2, rff_dimension(0.25, 0.1, 60), 5);

  Coreset self = trivial_coreset(P);
  CHECK(coreset_feature_bound(P, self, basis) == 0.0);

  // Certificate sits within eps W^2/2 of the exact D_K^2(P,S).
  const double eps = 0.5;
  double w = P.total_mass();
  std::size_t kk = feature_coreset_size(eps, 0.2, P.size());
  int agree = 0, within = 0;
  const int trials = 10;
  for (int t = 0; t < trials; ++t) {
    Coreset S = coreset_random(P, kk, 300 + t);
    FourierBasis bt = draw_frequencies(1.0, 2, rff_dimension(eps / 2.0, 0.1, 60), 400 + t);
    double cert = coreset_feature_bound(P, S, bt);
    double exact = kernel_distance_sq_exact(k, P, S.subset);
    if (std::abs(cert - exact) <= eps * w * w / 2.0) ++agree;
    if (cert <= eps * w * w) ++within;
  }
  CHECK(agree == trials);
  CHECK(within >= trials - 1);
}
