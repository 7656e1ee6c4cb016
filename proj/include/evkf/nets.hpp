#pragma once

#include "evkf/common.hpp"

#include <vector>

namespace evkf {

enum class OutputActivation { Identity, Softplus, Sigmoid };

std::string output_activation_name(OutputActivation a);
OutputActivation output_activation_from_name(const std::string& name);

// Fully connected net, SiLU hidden units, manual reverse mode.
struct Mlp {
  struct Layer {
    Mat W;
    Vec b;
  };
  std::vector<Layer> layers;
  OutputActivation out_activation = OutputActivation::Identity;

  int in_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().W.cols()); }
  int out_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().W.rows()); }
};

// uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases
Mlp make_mlp(int in_dim, const std::vector<int>& hidden, int out_dim, OutputActivation out,
             Rng& rng);

Vec forward(const Mlp& net, const Vec& x);

struct MlpGrad {
  std::vector<Mlp::Layer> layers;  // d(upstream . out)/dW, /db
  Vec input;                       // d(upstream . out)/dx
};

// exact gradient of upstream . forward(net, x)
MlpGrad backward(const Mlp& net, const Vec& x, const Vec& upstream);

// d out / d x, out_dim x in_dim
Mat input_jacobian(const Mlp& net, const Vec& x);

int param_count(const Mlp& net);
Vec flatten_params(const Mlp& net);
void set_params(Mlp& net, const Vec& flat);
Vec flatten_grad(const MlpGrad& grad);

double silu(double x);
double silu_deriv(double x);
double softplus(double x);
double sigmoid(double x);

struct AdamState {
  Vec m;
  Vec v;
  long step = 0;
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam(int dim, double lr = 1e-2, double beta1 = 0.9, double beta2 = 0.999,
                    double eps = 1e-8);

// standard bias-corrected update; returns the new parameter vector
Vec adam_step(const Vec& params, const Vec& grad, AdamState& state);

// plain gradient descent sharing AdamState.lr (Algorithm-1 style switch)
Vec sgd_step(const Vec& params, const Vec& grad, AdamState& state);

std::string mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const std::string& text);

}  // namespace evkf
