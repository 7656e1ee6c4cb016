#include "evkf/expfam.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <limits>

namespace evkf {

namespace {

constexpr double kGammaShapeFloor = -1.0 + 1e-8;  // natural lambda1 > this
constexpr double kGammaRateCeil = -1e-8;          // natural lambda2 < this
constexpr double kCbSeriesCut = 1e-4;
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // log(2*pi)/2

double sqr(double x) { return x * x; }

}  // namespace

std::string family_name(Family f) {
  switch (f) {
    case Family::GaussianDense: return "gaussian_dense";
    case Family::GaussianDiag: return "gaussian_diag";
    case Family::ContinuousBernoulli: return "cb";
    case Family::Gamma: return "gamma";
  }
  throw invalid_parameter("unknown family");
}

Family family_from_name(const std::string& name) {
  if (name == "gaussian_dense") return Family::GaussianDense;
  if (name == "gaussian_diag") return Family::GaussianDiag;
  if (name == "cb") return Family::ContinuousBernoulli;
  if (name == "gamma") return Family::Gamma;
  throw invalid_parameter("unknown family name: " + name);
}

int FamilyTag::stat_dim() const {
  if (dim < 1) throw invalid_parameter("family dim must be >= 1");
  switch (family) {
    case Family::GaussianDense: return dim + dim * dim;
    case Family::GaussianDiag: return 2 * dim;
    case Family::ContinuousBernoulli: return dim;
    case Family::Gamma: return 2 * dim;
  }
  throw invalid_parameter("unknown family");
}

Mat sym_from_vec(const Vec& v, int dim) {
  Mat m(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) m(i, j) = v[i * dim + j];
  return 0.5 * (m + m.transpose());
}

Vec vec_from_sym(const Mat& m) {
  const int dim = static_cast<int>(m.rows());
  Vec v(dim * dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) v[i * dim + j] = 0.5 * (m(i, j) + m(j, i));
  return v;
}

Eigen::LLT<Mat> chol_spd(const Mat& s, const char* what) {
  Mat sym = 0.5 * (s + s.transpose());
  Eigen::LLT<Mat> llt(sym);
  double jitter = 1e-8;
  for (int attempt = 0; attempt < 4 && llt.info() != Eigen::Success; ++attempt) {
    llt.compute(sym + jitter * Mat::Identity(s.rows(), s.cols()));
    jitter *= 100.0;
  }
  if (llt.info() != Eigen::Success)
    throw invalid_parameter(std::string(what) + ": matrix is not positive definite");
  return llt;
}

// ---------------------------------------------------------------- validation

static void check_shape(const NaturalParams& p) {
  if (p.lambda.size() != p.tag.stat_dim())
    throw invalid_parameter("natural parameter length " + std::to_string(p.lambda.size()) +
                            " does not match stat dim " + std::to_string(p.tag.stat_dim()));
  if (!p.lambda.allFinite()) throw invalid_parameter("natural parameters must be finite");
}

void validate(const NaturalParams& p) {
  check_shape(p);
  const int L = p.tag.dim;
  switch (p.tag.family) {
    case Family::GaussianDense: {
      const Mat prec = -2.0 * sym_from_vec(p.lambda.tail(L * L), L);
      Eigen::LLT<Mat> llt(prec);
      if (llt.info() != Eigen::Success)
        throw invalid_parameter("gaussian natural second-moment block is not negative definite");
      return;
    }
    case Family::GaussianDiag:
      if ((p.lambda.tail(L).array() >= 0.0).any())
        throw invalid_parameter("diag gaussian second natural entries must be < 0");
      return;
    case Family::ContinuousBernoulli:
      return;
    case Family::Gamma:
      if ((p.lambda.head(L).array() <= kGammaShapeFloor).any())
        throw invalid_parameter("gamma shape-related natural entry must exceed -1");
      if ((p.lambda.tail(L).array() >= kGammaRateCeil).any())
        throw invalid_parameter("gamma rate-related natural entry must be negative");
      return;
  }
  throw invalid_parameter("unknown family");
}

bool is_valid(const NaturalParams& p) {
  try {
    validate(p);
    return true;
  } catch (const invalid_parameter&) {
    return false;
  }
}

bool in_support(const FamilyTag& tag, const Vec& z) {
  if (z.size() != tag.dim || !z.allFinite()) return false;
  switch (tag.family) {
    case Family::GaussianDense:
    case Family::GaussianDiag:
      return true;
    case Family::ContinuousBernoulli:
      return (z.array() >= 0.0).all() && (z.array() <= 1.0).all();
    case Family::Gamma:
      return (z.array() > 0.0).all();
  }
  return false;
}

Vec sufficient_stats(const FamilyTag& tag, const Vec& z) {
  const int L = tag.dim;
  switch (tag.family) {
    case Family::GaussianDense: {
      Vec t(L + L * L);
      t.head(L) = z;
      t.tail(L * L) = vec_from_sym(z * z.transpose());
      return t;
    }
    case Family::GaussianDiag: {
      Vec t(2 * L);
      t.head(L) = z;
      t.tail(L) = z.array().square();
      return t;
    }
    case Family::ContinuousBernoulli:
      return z;
    case Family::Gamma: {
      Vec t(2 * L);
      t.head(L) = z.array().log();
      t.tail(L) = z;
      return t;
    }
  }
  throw invalid_parameter("unknown family");
}

// --------------------------------------------------------------------- CB 1d

double cb_log_partition(double eta) {
  if (std::abs(eta) < kCbSeriesCut) {
    const double s = eta * (0.5 + eta * (1.0 / 6.0 + eta * (1.0 / 24.0 + eta / 120.0)));
    return std::log1p(s);
  }
  // log((e^eta - 1)/eta), sign-safe for eta < 0
  if (eta > 0.0) return std::log(std::expm1(eta)) - std::log(eta);
  return std::log(-std::expm1(eta)) - std::log(-eta);
}

double cb_mean(double eta) {
  if (std::abs(eta) < kCbSeriesCut)
    return 0.5 + eta / 12.0 - eta * eta * eta / 720.0;
  return 1.0 / (-std::expm1(-eta)) - 1.0 / eta;
}

double cb_var(double eta) {
  if (std::abs(eta) < kCbSeriesCut) {
    const double e2 = eta * eta;
    return 1.0 / 12.0 - e2 / 240.0 + e2 * e2 / 6048.0;
  }
  const double sh = 2.0 * std::sinh(0.5 * eta);
  return 1.0 / (eta * eta) - 1.0 / (sh * sh);
}

double cb_dvar_deta(double eta) {
  if (std::abs(eta) < kCbSeriesCut)
    return -eta / 120.0 + eta * eta * eta / 1512.0;
  const double sh = std::sinh(0.5 * eta);
  return -2.0 / (eta * eta * eta) + std::cosh(0.5 * eta) / (4.0 * sh * sh * sh);
}

namespace {

// safeguarded Newton on A'(eta) = mu
double cb_natural_from_mean_1d(double mu) {
  if (!(mu > 0.0 && mu < 1.0))
    throw invalid_parameter("CB mean must lie strictly inside (0,1)");
  double lo = -1.0, hi = 1.0;
  while (cb_mean(lo) > mu) lo *= 2.0;
  while (cb_mean(hi) < mu) hi *= 2.0;
  double eta = 12.0 * (mu - 0.5);
  eta = std::clamp(eta, lo, hi);
  for (int it = 0; it < 100; ++it) {
    const double f = cb_mean(eta) - mu;
    if (f > 0.0) hi = eta; else lo = eta;
    if (std::abs(f) < 1e-13) return eta;
    const double step = f / cb_var(eta);
    double next = eta - step;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - eta) < 1e-14 * (1.0 + std::abs(eta))) return next;
    eta = next;
  }
  throw numeric_error("CB natural_from_mean: Newton did not converge");
}

double gamma_rel_entropy_slope(double alpha) {
  // g(alpha) = digamma(alpha) - log(alpha); increasing, range (-inf, 0)
  return boost::math::digamma(alpha) - std::log(alpha);
}

}  // namespace

double gamma_shape_from_mean(double mean_log, double mean_lin) {
  if (!(mean_lin > 0.0))
    throw invalid_parameter("gamma mean parameter E[z] must be positive");
  const double target = mean_log - std::log(mean_lin);
  if (!(target < 0.0))
    throw invalid_parameter("gamma mean parameters violate E[log z] < log E[z]");
  // standard closed-form seed, then safeguarded Newton on log(alpha)
  const double s = -target;
  double alpha = (3.0 - s + std::sqrt(sqr(s - 3.0) + 24.0 * s)) / (12.0 * s);
  alpha = std::max(alpha, 1e-8);
  double lo = alpha, hi = alpha;
  while (gamma_rel_entropy_slope(lo) > target) lo *= 0.5;
  while (gamma_rel_entropy_slope(hi) < target) hi *= 2.0;
  for (int it = 0; it < 100; ++it) {
    const double f = gamma_rel_entropy_slope(alpha) - target;
    if (f > 0.0) hi = alpha; else lo = alpha;
    if (std::abs(f) < 1e-13) return alpha;
    const double slope = boost::math::trigamma(alpha) - 1.0 / alpha;
    double next = alpha - f / slope;
    if (!(next > lo && next < hi)) next = std::sqrt(lo * hi);
    if (std::abs(next - alpha) < 1e-14 * alpha) return next;
    alpha = next;
  }
  throw numeric_error("gamma natural_from_mean: Newton did not converge");
}

// ------------------------------------------------------------- log partition

double log_partition(const NaturalParams& p) {
  validate(p);
  const int L = p.tag.dim;
  switch (p.tag.family) {
    case Family::GaussianDense: {
      const Mat prec = -2.0 * sym_from_vec(p.lambda.tail(L * L), L);
      const auto llt = chol_spd(prec, "gaussian log_partition");
      const Vec l1 = p.lambda.head(L);
      const Vec m = llt.solve(l1);
      const double logdet = 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
      return 0.5 * l1.dot(m) - 0.5 * logdet + L * kHalfLog2Pi;
    }
    case Family::GaussianDiag: {
      double a = 0.0;
      for (int i = 0; i < L; ++i) {
        const double l1 = p.lambda[i], l2 = p.lambda[L + i];
        a += -l1 * l1 / (4.0 * l2) - 0.5 * std::log(-2.0 * l2) + kHalfLog2Pi;
      }
      return a;
    }
    case Family::ContinuousBernoulli: {
      double a = 0.0;
      for (int i = 0; i < L; ++i) a += cb_log_partition(p.lambda[i]);
      return a;
    }
    case Family::Gamma: {
      double a = 0.0;
      for (int i = 0; i < L; ++i) {
        const double alpha = p.lambda[i] + 1.0, beta = -p.lambda[L + i];
        a += std::lgamma(alpha) - alpha * std::log(beta);
      }
      return a;
    }
  }
  throw invalid_parameter("unknown family");
}

// ------------------------------------------------------------------- duality

MeanParams mean_from_natural(const NaturalParams& p) {
  validate(p);
  const int L = p.tag.dim;
  Vec mu(p.tag.stat_dim());
  switch (p.tag.family) {
    case Family::GaussianDense: {
      const auto mom = gaussian_moments(p);
      mu.head(L) = mom.mean;
      mu.tail(L * L) = vec_from_sym(mom.cov + mom.mean * mom.mean.transpose());
      break;
    }
    case Family::GaussianDiag: {
      for (int i = 0; i < L; ++i) {
        const double l1 = p.lambda[i], l2 = p.lambda[L + i];
        const double m = -l1 / (2.0 * l2), v = -1.0 / (2.0 * l2);
        mu[i] = m;
        mu[L + i] = v + m * m;
      }
      break;
    }
    case Family::ContinuousBernoulli:
      for (int i = 0; i < L; ++i) mu[i] = cb_mean(p.lambda[i]);
      break;
    case Family::Gamma:
      for (int i = 0; i < L; ++i) {
        const double alpha = p.lambda[i] + 1.0, beta = -p.lambda[L + i];
        mu[i] = boost::math::digamma(alpha) - std::log(beta);
        mu[L + i] = alpha / beta;
      }
      break;
  }
  return {p.tag, std::move(mu)};
}

NaturalParams natural_from_mean(const MeanParams& m) {
  if (m.mu.size() != m.tag.stat_dim())
    throw invalid_parameter("mean parameter length does not match stat dim");
  if (!m.mu.allFinite()) throw invalid_parameter("mean parameters must be finite");
  const int L = m.tag.dim;
  switch (m.tag.family) {
    case Family::GaussianDense: {
      const Vec mean = m.mu.head(L);
      const Mat cov = sym_from_vec(m.mu.tail(L * L), L) - mean * mean.transpose();
      Eigen::LLT<Mat> llt(cov);
      if (llt.info() != Eigen::Success)
        throw invalid_parameter("gaussian mean parameters are not interior (covariance not SPD)");
      return gaussian_natural(mean, cov, Family::GaussianDense);
    }
    case Family::GaussianDiag: {
      Vec lambda(2 * L);
      for (int i = 0; i < L; ++i) {
        const double mean = m.mu[i];
        const double v = m.mu[L + i] - mean * mean;
        if (!(v > 0.0))
          throw invalid_parameter("diag gaussian mean parameters are not interior (variance <= 0)");
        lambda[i] = mean / v;
        lambda[L + i] = -0.5 / v;
      }
      return {m.tag, std::move(lambda)};
    }
    case Family::ContinuousBernoulli: {
      Vec lambda(L);
      for (int i = 0; i < L; ++i) lambda[i] = cb_natural_from_mean_1d(m.mu[i]);
      return {m.tag, std::move(lambda)};
    }
    case Family::Gamma: {
      Vec lambda(2 * L);
      for (int i = 0; i < L; ++i) {
        const double alpha = gamma_shape_from_mean(m.mu[i], m.mu[L + i]);
        const double beta = alpha / m.mu[L + i];
        lambda[i] = alpha - 1.0;
        lambda[L + i] = -beta;
      }
      return {m.tag, std::move(lambda)};
    }
  }
  throw invalid_parameter("unknown family");
}

// ------------------------------------------------------------------ sampling

Mat sample(const NaturalParams& p, int n, Rng& rng) {
  validate(p);
  if (n < 1) throw invalid_parameter("sample count must be >= 1");
  const int L = p.tag.dim;
  Mat out(n, L);
  switch (p.tag.family) {
    case Family::GaussianDense: {
      const auto mom = gaussian_moments(p);
      const Mat chol = chol_spd(mom.cov, "gaussian sampling").matrixL();
      for (int s = 0; s < n; ++s)
        out.row(s) = (mom.mean + chol * rng.normal_vec(L)).transpose();
      break;
    }
    case Family::GaussianDiag: {
      for (int s = 0; s < n; ++s)
        for (int i = 0; i < L; ++i) {
          const double v = -0.5 / p.lambda[L + i];
          out(s, i) = -p.lambda[i] / (2.0 * p.lambda[L + i]) + std::sqrt(v) * rng.normal();
        }
      break;
    }
    case Family::ContinuousBernoulli: {
      for (int s = 0; s < n; ++s)
        for (int i = 0; i < L; ++i) {
          const double eta = p.lambda[i];
          const double u = rng.uniform();
          out(s, i) = std::abs(eta) < 1e-12 ? u : std::log1p(u * std::expm1(eta)) / eta;
        }
      break;
    }
    case Family::Gamma: {
      for (int s = 0; s < n; ++s)
        for (int i = 0; i < L; ++i)
          out(s, i) = rng.gamma(p.lambda[i] + 1.0, -p.lambda[L + i]);
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------- entropy, KL, pdf

double entropy(const NaturalParams& p) {
  const MeanParams mu = mean_from_natural(p);
  return log_partition(p) - p.lambda.dot(mu.mu);
}

double kl(const NaturalParams& p, const NaturalParams& q) {
  if (p.tag != q.tag) throw invalid_parameter("kl: family tags must match");
  if ((p.lambda - q.lambda).isZero(0.0)) return 0.0;
  const MeanParams mu = mean_from_natural(p);
  return (p.lambda - q.lambda).dot(mu.mu) - log_partition(p) + log_partition(q);
}

double log_density(const NaturalParams& p, const Vec& z) {
  if (z.size() != p.tag.dim) throw invalid_parameter("log_density: point has wrong dimension");
  if (!in_support(p.tag, z)) return -std::numeric_limits<double>::infinity();
  return p.lambda.dot(sufficient_stats(p.tag, z)) - log_partition(p);
}

// ---------------------------------------------------------- gaussian helpers

NaturalParams gaussian_natural(const Vec& mean, const Mat& cov, Family which) {
  if (which != Family::GaussianDense && which != Family::GaussianDiag)
    throw invalid_parameter("gaussian_natural: family must be gaussian");
  const int L = static_cast<int>(mean.size());
  if (which == Family::GaussianDiag) {
    Vec lambda(2 * L);
    for (int i = 0; i < L; ++i) {
      const double v = cov(i, i);
      if (!(v > 0.0)) throw invalid_parameter("gaussian_natural: variance must be positive");
      lambda[i] = mean[i] / v;
      lambda[L + i] = -0.5 / v;
    }
    return {{which, L}, std::move(lambda)};
  }
  const auto llt = chol_spd(cov, "gaussian_natural");
  const Mat prec = llt.solve(Mat::Identity(L, L));
  Vec lambda(L + L * L);
  lambda.head(L) = llt.solve(mean);
  lambda.tail(L * L) = vec_from_sym(-0.5 * prec);
  return {{which, L}, std::move(lambda)};
}

GaussianMoments gaussian_moments(const NaturalParams& p) {
  const int L = p.tag.dim;
  if (p.tag.family == Family::GaussianDiag) {
    GaussianMoments mom{Vec(L), Mat::Zero(L, L)};
    for (int i = 0; i < L; ++i) {
      const double l2 = p.lambda[L + i];
      if (!(l2 < 0.0)) throw invalid_parameter("gaussian_moments: second natural entry must be < 0");
      mom.cov(i, i) = -0.5 / l2;
      mom.mean[i] = -p.lambda[i] / (2.0 * l2);
    }
    return mom;
  }
  if (p.tag.family != Family::GaussianDense)
    throw invalid_parameter("gaussian_moments: family must be gaussian");
  const Mat prec = -2.0 * sym_from_vec(p.lambda.tail(L * L), L);
  const auto llt = chol_spd(prec, "gaussian_moments");
  GaussianMoments mom;
  mom.cov = llt.solve(Mat::Identity(L, L));
  mom.cov = 0.5 * (mom.cov + mom.cov.transpose());
  mom.mean = llt.solve(p.lambda.head(L));
  return mom;
}

}  // namespace evkf
