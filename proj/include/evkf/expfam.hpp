#pragma once

#include "evkf/common.hpp"

namespace evkf {

// Constant base measure, minimal families. The base measure is folded into
// the log partition, so log_density = lambda . t(z) - A(lambda) exactly.
enum class Family { GaussianDense, GaussianDiag, ContinuousBernoulli, Gamma };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

struct FamilyTag {
  Family family = Family::GaussianDense;
  int dim = 1;  // latent dimension L

  // length of t(z): GaussianDense L + L^2, GaussianDiag 2L, CB L, Gamma 2L
  int stat_dim() const;
  bool operator==(const FamilyTag& o) const { return family == o.family && dim == o.dim; }
  bool operator!=(const FamilyTag& o) const { return !(*this == o); }
};

// Natural coordinates lambda of p(z) = exp(lambda . t(z) - A(lambda)).
// Gaussian blocks are stored [lambda1 (L); vec_rowmajor(Lambda2) (LxL)] for
// dense, [lambda1; lambda2_diag] for diag; Gamma as [alpha-1; -beta]; CB as
// the per-coordinate eta.
struct NaturalParams {
  FamilyTag tag;
  Vec lambda;
};

// Mean coordinates mu = E[t(z)], same storage layout as NaturalParams.
struct MeanParams {
  FamilyTag tag;
  Vec mu;
};

// throws invalid_parameter when lambda leaves the family's natural domain
void validate(const NaturalParams& p);
bool is_valid(const NaturalParams& p);

double log_partition(const NaturalParams& p);
MeanParams mean_from_natural(const NaturalParams& p);
NaturalParams natural_from_mean(const MeanParams& m);

// n i.i.d. rows, deterministic under the rng stream
Mat sample(const NaturalParams& p, int n, Rng& rng);

double entropy(const NaturalParams& p);
double kl(const NaturalParams& p, const NaturalParams& q);

// -inf outside the support (CB: [0,1]^L, Gamma: (0,inf)^L)
double log_density(const NaturalParams& p, const Vec& z);
bool in_support(const FamilyTag& tag, const Vec& z);

Vec sufficient_stats(const FamilyTag& tag, const Vec& z);

// ---- Gaussian moment helpers (shared by dynamics / filters) ----

struct GaussianMoments {
  Vec mean;
  Mat cov;
};

NaturalParams gaussian_natural(const Vec& mean, const Mat& cov, Family which = Family::GaussianDense);
GaussianMoments gaussian_moments(const NaturalParams& p);

// symmetric solve helper; retries with escalating jitter on factorization failure
Eigen::LLT<Mat> chol_spd(const Mat& s, const char* what);

Mat sym_from_vec(const Vec& v, int dim);
Vec vec_from_sym(const Mat& m);

// ---- scalar continuous Bernoulli pieces (shared with observations) ----
double cb_log_partition(double eta);
double cb_mean(double eta);      // A'(eta)
double cb_var(double eta);       // A''(eta)
double cb_dvar_deta(double eta); // A'''(eta)

// ---- scalar gamma pieces ----
// natural (l1, l2) <-> (shape, rate) = (l1 + 1, -l2)
double gamma_shape_from_mean(double mean_log, double mean_lin);

}  // namespace evkf
