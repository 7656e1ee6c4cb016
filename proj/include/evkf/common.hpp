#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace evkf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Invalid natural/mean parameters, unsupported model pairings, bad config.
struct invalid_parameter : std::domain_error {
  explicit invalid_parameter(const std::string& what) : std::domain_error(what) {}
};

// Iteration failures: Newton/CVI non-convergence, overflow, degenerate covariances.
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seeded stream of doubles. The mt19937_64 bit sequence is fixed by the
// standard; all variate transforms are implemented here so that streams are
// reproducible bit-for-bit across platforms and library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return gen_(); }

  // strictly inside (0,1)
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  Vec normal_vec(Eigen::Index n) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  // Marsaglia-Tsang; exact for all shape > 0.
  double gamma(double shape, double rate) {
    if (!(shape > 0.0) || !(rate > 0.0))
      throw invalid_parameter("gamma sampler needs shape > 0 and rate > 0");
    double boost = 1.0;
    if (shape < 1.0) {
      boost = std::pow(uniform(), 1.0 / shape);
      shape += 1.0;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return boost * d * v / rate;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return boost * d * v / rate;
    }
  }

  // Knuth below 30, Atkinson's rejection above; both sample the exact law.
  long poisson(double mean) {
    if (!(mean >= 0.0)) throw invalid_parameter("poisson sampler needs mean >= 0");
    if (mean == 0.0) return 0;
    if (mean > 1e9) throw numeric_error("poisson rate overflow: " + std::to_string(mean));
    if (mean < 30.0) {
      const double limit = std::exp(-mean);
      double prod = uniform();
      long n = 0;
      while (prod > limit) {
        prod *= uniform();
        ++n;
      }
      return n;
    }
    const double c = 0.767 - 3.36 / mean;
    const double beta = M_PI / std::sqrt(3.0 * mean);
    const double alpha = beta * mean;
    const double k = std::log(c) - mean - std::log(beta);
    for (;;) {
      const double u = uniform();
      const double x = (alpha - std::log((1.0 - u) / u)) / beta;
      const long n = static_cast<long>(std::floor(x + 0.5));
      if (n < 0) continue;
      const double v = uniform();
      const double y = alpha - beta * x;
      const double t = 1.0 + std::exp(y);
      const double lhs = y + std::log(v / (t * t));
      const double rhs = k + n * std::log(mean) - std::lgamma(n + 1.0);
      if (lhs <= rhs) return n;
    }
  }

  // Independent child stream; advances this stream by one draw.
  Rng split() { return Rng(splitmix64(next_u64() ^ 0x5851f42d4c957f2dULL)); }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

inline double logsumexp(const Vec& x) {
  const double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.array() - m).exp().sum());
}

}  // namespace evkf
