#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kd/points.hpp"

namespace kd {

struct BenchRow {
  std::string family;  // instance family the timing ran on
  std::string method;
  std::size_t n = 0;
  double eps = 0.0;
  double ms = 0.0;
  double value = 0.0;     // computed D_K^2 estimate
  double abs_err = -1.0;  // |value - exact| on the same instance, -1 for exact rows
};

// Uniform unit-mass points in [0, side]^d, deterministic per (seed, salt).
WeightedPointSet bench_instance(std::size_t n, int d, double side, std::uint64_t seed,
                                std::uint64_t salt);

// Scaling table: per size, exact vs wspd on a spread family (side 20*sigma)
// and exact vs rff/ifgt on a compact family (side 2*sigma), d = 2.
std::vector<BenchRow> bench_scaling(const std::vector<std::size_t>& sizes, double eps,
                                    double delta, double sigma, std::uint64_t seed);

std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace kd
