#pragma once

#include "evkf/expfam.hpp"
#include "evkf/nets.hpp"

namespace evkf {

// Conditional exponential-family dynamics p_theta(z_t | z_{t-1}), exposed
// through the natural-parameter map lambda_theta(z_{t-1}).
enum class DynamicsKind {
  LinearGaussian,   // N(Az, Q)
  MlpGaussian,      // N(net(z), Q)
  BuiltinGaussian,  // N(map(z), Q), fixed closed-form map
  MlpCB,            // prod CB(eta = net(z)), identity head
  MlpGamma,         // prod Gamma(b0 f(z)^2, b0 f(z)), softplus head
  BuiltinGamma,     // same law, fixed closed-form f
};

std::string dynamics_kind_name(DynamicsKind k);
DynamicsKind dynamics_kind_from_name(const std::string& name);

// Closed-form mean maps used by the synthetic systems.
struct BuiltinMap {
  enum class Kind { Crnn, Vdp, Ring };
  Kind kind = Kind::Crnn;
  double gamma = 0.0, dt = 0.0, tau = 0.0;   // crnn
  double tau1 = 0.0, tau2 = 0.0;             // vdp (gamma, dt shared)
  double omega = 0.0, kappa = 0.0, r0 = 0.0; // ring (dt shared)
  double floor = 0.05;                       // ring positivity floor
  Mat W;                                     // crnn recurrent weights
  Vec center;                                // ring center

  Vec eval(const Vec& z) const;
  Mat jacobian(const Vec& z) const;
};

struct DynamicsModel {
  FamilyTag family;
  DynamicsKind kind = DynamicsKind::LinearGaussian;
  Mat A;               // LinearGaussian
  Mlp net;             // Mlp kinds
  BuiltinMap builtin;  // Builtin kinds
  Mat Q;               // Gaussian kinds, SPD
  Mat Qinv;            // cached
  double b0 = 1.0;     // Gamma kinds, > 0
  bool trainable = true;
  bool train_log_q = false;  // learn a diagonal log-parameterized Q
};

DynamicsModel make_linear_gaussian(const Mat& A, const Mat& Q);
DynamicsModel make_mlp_gaussian(const Mlp& net, const Mat& Q);
DynamicsModel make_mlp_cb(const Mlp& net);
DynamicsModel make_mlp_gamma(const Mlp& net, double b0);

// z_{t+1} ~ N(z + dt/tau (gamma W tanh(z) - z), Q)
DynamicsModel builtin_crnn(int L, double gamma, const Mat& W, double dt, double tau, const Mat& Q);

// noise-corrupted Van der Pol, Q = sigma^2 I
DynamicsModel builtin_vdp(double tau1, double tau2, double gamma, double dt, double sigma);

// positive-quadrant limit cycle with Gamma transitions of variance 1/b0
DynamicsModel builtin_gamma_ring(const Vec& center, double r0, double omega, double kappa,
                                 double dt, double b0);

NaturalParams natural_map(const DynamicsModel& model, const Vec& z);

// f_theta(z): conditional mean for Gaussian/Gamma kinds, CB mean for CB kinds
Vec conditional_mean_map(const DynamicsModel& model, const Vec& z);
Mat conditional_mean_jacobian(const DynamicsModel& model, const Vec& z);

Vec conditional_sample(const DynamicsModel& model, const Vec& z, Rng& rng);
double conditional_log_density(const DynamicsModel& model, const Vec& z_prev, const Vec& z_next);
double conditional_kl(const DynamicsModel& a, const DynamicsModel& b, const Vec& z);

// ---- trainable parameter block (flat, for Adam) ----
int dyn_param_count(const DynamicsModel& model);
Vec dyn_flatten(const DynamicsModel& model);
void dyn_set_params(DynamicsModel& model, const Vec& flat);

// gradient of r . lambda_theta(z) with respect to the trainable parameters
Vec dyn_natural_map_vjp(const DynamicsModel& model, const Vec& z, const Vec& r);

std::string dynamics_to_json(const DynamicsModel& model);
DynamicsModel dynamics_from_json(const std::string& text);

}  // namespace evkf
