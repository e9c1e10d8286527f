#pragma once

#include <cmath>
#include <span>

#include "kd/error.hpp"

namespace kd {

// Gaussian similarity kernel K(p,q) = exp(-||p-q||^2 / sigma^2).
//
// sigma is the single length-scale parameter of the library. The normalized
// diameter of a data set is Delta = diameter / sigma, and all tail/Lipschitz
// radii below are expressed in the same length units as the data.
struct GaussianKernel {
  double sigma;

  explicit GaussianKernel(double sigma_) : sigma(sigma_) {
    require(sigma > 0.0 && std::isfinite(sigma), errc::invalid_argument,
            "kernel bandwidth sigma must be positive");
  }

  double eval_dist2(double d2) const { return std::exp(-d2 / (sigma * sigma)); }

  double eval(std::span<const double> p, std::span<const double> q) const {
    require(p.size() == q.size(), errc::dimension_mismatch, "kernel_eval dimension mismatch");
    double d2 = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      double d = p[k] - q[k];
      d2 += d * d;
    }
    return eval_dist2(d2);
  }

  // Radius beyond which K < gamma: sigma * sqrt(ln(1/gamma)).
  double tail_radius(double gamma) const {
    require(gamma > 0.0 && gamma < 1.0, errc::invalid_argument,
            "tail_radius: gamma must lie in (0,1)");
    return sigma * std::sqrt(std::log(1.0 / gamma));
  }

  // L = sqrt(2/e)/sigma; |K(p,q) - K(p,q+delta)| <= L*||delta|| <= ||delta||/sigma.
  double lipschitz_bound() const { return std::sqrt(2.0 / std::exp(1.0)) / sigma; }
};

// Test-only kernel: 1 on exactly equal coordinates, 0 otherwise. Not linked
// to balls; excluded from coreset and alignment code paths by construction
// (those APIs take GaussianKernel).
struct TrivialKernel {
  double eval(std::span<const double> p, std::span<const double> q) const {
    require(p.size() == q.size(), errc::dimension_mismatch, "kernel_eval dimension mismatch");
    for (std::size_t k = 0; k < p.size(); ++k)
      if (p[k] != q[k]) return 0.0;
    return 1.0;
  }
};

}  // namespace kd
