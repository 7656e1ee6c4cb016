#pragma once

#include "evkf/expfam.hpp"

#include <functional>

namespace evkf::test {

// composite Simpson on [a,b]
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 20000) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-5) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline Mat random_spd(int dim, Rng& rng, double base = 0.3) {
  Mat b(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) b(i, j) = rng.normal();
  return b * b.transpose() / dim + base * Mat::Identity(dim, dim);
}

inline NaturalParams random_natural(Family fam, int dim, Rng& rng) {
  switch (fam) {
    case Family::GaussianDense: {
      Vec m(dim);
      for (int i = 0; i < dim; ++i) m[i] = 2.0 * rng.normal();
      return gaussian_natural(m, random_spd(dim, rng), Family::GaussianDense);
    }
    case Family::GaussianDiag: {
      Vec lambda(2 * dim);
      for (int i = 0; i < dim; ++i) {
        const double v = std::exp(rng.uniform(-2.0, 2.0));
        lambda[i] = 2.0 * rng.normal() / v;
        lambda[dim + i] = -0.5 / v;
      }
      return {{fam, dim}, std::move(lambda)};
    }
    case Family::ContinuousBernoulli: {
      Vec lambda(dim);
      for (int i = 0; i < dim; ++i) lambda[i] = rng.uniform(-8.0, 8.0);
      return {{fam, dim}, std::move(lambda)};
    }
    case Family::Gamma: {
      Vec lambda(2 * dim);
      for (int i = 0; i < dim; ++i) {
        lambda[i] = std::exp(rng.uniform(std::log(0.4), std::log(20.0))) - 1.0;
        lambda[dim + i] = -std::exp(rng.uniform(std::log(0.2), std::log(10.0)));
      }
      return {{fam, dim}, std::move(lambda)};
    }
  }
  throw invalid_parameter("unknown family");
}

inline double rel_err(double got, double want, double denom_floor = 1e-6) {
  return std::abs(got - want) / std::max(std::abs(want), denom_floor);
}

}  // namespace evkf::test
