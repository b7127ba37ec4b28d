#pragma once

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <cstdint>
#include <vector>

// Independent reference computations shared by the unit and acceptance tests.
namespace oracles {

// ∫ Dir[w](p) ∏ p_j^{c_j} dp by nested tanh-sinh quadrature, for 2 or 3 outcomes.
inline double polya_by_quadrature(const std::vector<double>& w, const std::vector<std::int64_t>& c) {
  boost::math::quadrature::tanh_sinh<double> q;
  double log_norm = std::lgamma(w[0] + w[1] + (w.size() == 3 ? w[2] : 0.0));
  for (double x : w) log_norm -= std::lgamma(x);
  auto term = [&](double p, std::size_t j) {
    return p > 0.0 ? std::pow(p, w[j] - 1 + static_cast<double>(c[j])) : 0.0;  // underflowed abscissae
  };
  if (w.size() == 2) {
    return q.integrate([&](double p, double pc) {
      const double rest = p > 0.5 ? pc : 1 - p;
      return std::exp(log_norm) * term(p, 0) * term(rest, 1);
    }, 0.0, 1.0);
  }
  // p2 = (1 - p1) u, dp2 = (1 - p1) du
  return q.integrate([&](double p1, double p1c) {
    const double rest = p1 > 0.5 ? p1c : 1 - p1;
    const double inner = q.integrate([&](double u, double uc) {
      const double uu = u > 0.5 ? uc : 1 - u;
      return term(rest * u, 1) * term(rest * uu, 2);
    }, 0.0, 1.0);
    return std::exp(log_norm) * term(p1, 0) * inner * rest;
  }, 0.0, 1.0);
}

// Mass of the term-drawing runs that repeat a term, for k_new ~ Geom(alpha)
// draws with replacement from n equally likely terms.
inline double repeated_term_mass(double alpha, int n, int max_k = 400) {
  double invalid = 0.0;
  for (int k = 0; k < max_k; ++k) {
    double falling = 1.0;
    for (int i = 0; i < k; ++i) falling *= static_cast<double>(n - i) / n;
    invalid += (1 - alpha) * std::pow(alpha, k) * (1.0 - std::max(falling, 0.0));
  }
  return invalid;
}

}  // namespace oracles
