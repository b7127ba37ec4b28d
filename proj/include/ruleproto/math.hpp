#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace ruleproto {

// Log-probability of an impossible event. Measures return this instead of
// letting a product underflow to zero.
inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline bool is_log_zero(double x) { return x == kLogZero; }

inline double log_gamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("log_gamma: argument must be positive");
  return boost::math::lgamma(x);
}

inline double digamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("digamma: argument must be positive");
  return boost::math::digamma(x);
}

inline double log_factorial(std::int64_t n) {
  if (n < 0) throw std::domain_error("log_factorial: negative argument");
  if (n < 2) return 0.0;
  return boost::math::lgamma(static_cast<double>(n) + 1.0);
}

inline double log_choose(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) return kLogZero;
  return log_factorial(n) - log_factorial(k) - log_factorial(n - k);
}

// log(p) with log(0) mapped to the sentinel.
inline double safe_log(double p) {
  if (p < 0.0) throw std::domain_error("safe_log: negative probability");
  return p == 0.0 ? kLogZero : std::log(p);
}

// Geom[a](d) = (1-a) a^d on d >= 0.
inline double log_geometric(double a, std::int64_t d) {
  if (d < 0) return kLogZero;
  if (d == 0) return std::log1p(-a);
  return std::log1p(-a) + static_cast<double>(d) * std::log(a);
}

inline double log_binomial_pmf(std::int64_t n, double p, std::int64_t k) {
  if (k < 0 || k > n) return kLogZero;
  double out = log_choose(n, k);
  if (k > 0) out += static_cast<double>(k) * std::log(p);
  if (n - k > 0) out += static_cast<double>(n - k) * std::log1p(-p);
  return out;
}

// 64-bit mixer used to derive independent seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Neumaier-compensated sum in extended precision, for long sums of
// absolute differences.
class CompensatedSum {
 public:
  void add(long double x) {
    const long double t = sum_ + x;
    comp_ += std::abs(sum_) >= std::abs(x) ? (sum_ - t) + x : (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return static_cast<double>(sum_ + comp_); }

 private:
  long double sum_ = 0.0L;
  long double comp_ = 0.0L;
};

}  // namespace ruleproto
