#include "evkf/nets.hpp"

#include <json.hpp>

namespace evkf {

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }
double silu(double x) { return x * sigmoid(x); }
double silu_deriv(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}
double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

std::string output_activation_name(OutputActivation a) {
  switch (a) {
    case OutputActivation::Identity: return "identity";
    case OutputActivation::Softplus: return "softplus";
    case OutputActivation::Sigmoid: return "sigmoid";
  }
  throw invalid_parameter("unknown output activation");
}

OutputActivation output_activation_from_name(const std::string& name) {
  if (name == "identity") return OutputActivation::Identity;
  if (name == "softplus") return OutputActivation::Softplus;
  if (name == "sigmoid") return OutputActivation::Sigmoid;
  throw invalid_parameter("unknown output activation: " + name);
}

Mlp make_mlp(int in_dim, const std::vector<int>& hidden, int out_dim, OutputActivation out,
             Rng& rng) {
  if (in_dim < 1 || out_dim < 1) throw invalid_parameter("mlp dims must be >= 1");
  Mlp net;
  net.out_activation = out;
  int prev = in_dim;
  auto push = [&](int rows) {
    Mlp::Layer layer;
    layer.W.resize(rows, prev);
    const double bound = std::sqrt(6.0 / (prev + rows));
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < prev; ++j) layer.W(i, j) = rng.uniform(-bound, bound);
    layer.b = Vec::Zero(rows);
    net.layers.push_back(std::move(layer));
    prev = rows;
  };
  for (int h : hidden) push(h);
  push(out_dim);
  return net;
}

namespace {

double out_act(OutputActivation a, double x) {
  switch (a) {
    case OutputActivation::Identity: return x;
    case OutputActivation::Softplus: return softplus(x);
    case OutputActivation::Sigmoid: return sigmoid(x);
  }
  return x;
}

double out_act_deriv(OutputActivation a, double x) {
  switch (a) {
    case OutputActivation::Identity: return 1.0;
    case OutputActivation::Softplus: return sigmoid(x);
    case OutputActivation::Sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
  }
  return 1.0;
}

void check_input(const Mlp& net, const Vec& x) {
  if (net.layers.empty()) throw invalid_parameter("mlp has no layers");
  if (x.size() != net.in_dim())
    throw invalid_parameter("mlp input dim " + std::to_string(x.size()) + " != " +
                            std::to_string(net.in_dim()));
}

}  // namespace

Vec forward(const Mlp& net, const Vec& x) {
  check_input(net, x);
  Vec h = x;
  for (size_t li = 0; li < net.layers.size(); ++li) {
    Vec pre = net.layers[li].W * h + net.layers[li].b;
    if (li + 1 < net.layers.size())
      h = pre.unaryExpr([](double v) { return silu(v); });
    else
      h = pre.unaryExpr([&](double v) { return out_act(net.out_activation, v); });
  }
  return h;
}

MlpGrad backward(const Mlp& net, const Vec& x, const Vec& upstream) {
  check_input(net, x);
  if (upstream.size() != net.out_dim())
    throw invalid_parameter("mlp upstream gradient dim mismatch");
  const size_t n = net.layers.size();
  std::vector<Vec> inputs(n);   // activation entering each layer
  std::vector<Vec> pres(n);     // pre-activation of each layer
  Vec h = x;
  for (size_t li = 0; li < n; ++li) {
    inputs[li] = h;
    pres[li] = net.layers[li].W * h + net.layers[li].b;
    if (li + 1 < n)
      h = pres[li].unaryExpr([](double v) { return silu(v); });
    else
      h = pres[li].unaryExpr([&](double v) { return out_act(net.out_activation, v); });
  }
  MlpGrad grad;
  grad.layers.resize(n);
  Vec delta = upstream;
  for (size_t li = n; li-- > 0;) {
    Vec dpre(pres[li].size());
    if (li + 1 == n)
      for (Eigen::Index i = 0; i < dpre.size(); ++i)
        dpre[i] = delta[i] * out_act_deriv(net.out_activation, pres[li][i]);
    else
      for (Eigen::Index i = 0; i < dpre.size(); ++i) dpre[i] = delta[i] * silu_deriv(pres[li][i]);
    grad.layers[li].W = dpre * inputs[li].transpose();
    grad.layers[li].b = dpre;
    delta = net.layers[li].W.transpose() * dpre;
  }
  grad.input = delta;
  return grad;
}

Mat input_jacobian(const Mlp& net, const Vec& x) {
  const int rows = net.out_dim();
  Mat jac(rows, net.in_dim());
  Vec e = Vec::Zero(rows);
  for (int i = 0; i < rows; ++i) {
    e[i] = 1.0;
    jac.row(i) = backward(net, x, e).input.transpose();
    e[i] = 0.0;
  }
  return jac;
}

int param_count(const Mlp& net) {
  int n = 0;
  for (const auto& l : net.layers) n += static_cast<int>(l.W.size() + l.b.size());
  return n;
}

Vec flatten_params(const Mlp& net) {
  Vec flat(param_count(net));
  int at = 0;
  for (const auto& l : net.layers) {
    for (Eigen::Index i = 0; i < l.W.rows(); ++i)
      for (Eigen::Index j = 0; j < l.W.cols(); ++j) flat[at++] = l.W(i, j);
    for (Eigen::Index i = 0; i < l.b.size(); ++i) flat[at++] = l.b[i];
  }
  return flat;
}

void set_params(Mlp& net, const Vec& flat) {
  if (flat.size() != param_count(net)) throw invalid_parameter("mlp parameter vector size mismatch");
  int at = 0;
  for (auto& l : net.layers) {
    for (Eigen::Index i = 0; i < l.W.rows(); ++i)
      for (Eigen::Index j = 0; j < l.W.cols(); ++j) l.W(i, j) = flat[at++];
    for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b[i] = flat[at++];
  }
}

Vec flatten_grad(const MlpGrad& grad) {
  int n = 0;
  for (const auto& l : grad.layers) n += static_cast<int>(l.W.size() + l.b.size());
  Vec flat(n);
  int at = 0;
  for (const auto& l : grad.layers) {
    for (Eigen::Index i = 0; i < l.W.rows(); ++i)
      for (Eigen::Index j = 0; j < l.W.cols(); ++j) flat[at++] = l.W(i, j);
    for (Eigen::Index i = 0; i < l.b.size(); ++i) flat[at++] = l.b[i];
  }
  return flat;
}

AdamState make_adam(int dim, double lr, double beta1, double beta2, double eps) {
  AdamState st;
  st.m = Vec::Zero(dim);
  st.v = Vec::Zero(dim);
  st.lr = lr;
  st.beta1 = beta1;
  st.beta2 = beta2;
  st.eps = eps;
  return st;
}

Vec adam_step(const Vec& params, const Vec& grad, AdamState& state) {
  if (params.size() != grad.size() || params.size() != state.m.size())
    throw invalid_parameter("adam_step: dimension mismatch");
  if (!grad.allFinite()) throw numeric_error("adam_step: non-finite gradient");
  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, double(state.step));
  const Vec mhat = state.m / c1;
  const Vec vhat = state.v / c2;
  return params - state.lr * mhat.cwiseQuotient(vhat.cwiseSqrt().array().matrix() +
                                                Vec::Constant(params.size(), state.eps));
}

Vec sgd_step(const Vec& params, const Vec& grad, AdamState& state) {
  if (!grad.allFinite()) throw numeric_error("sgd_step: non-finite gradient");
  state.step += 1;
  return params - state.lr * grad;
}

std::string mlp_to_json(const Mlp& net) {
  nlohmann::json doc;
  doc["out_activation"] = output_activation_name(net.out_activation);
  auto& shapes = doc["shapes"] = nlohmann::json::array();
  for (const auto& l : net.layers)
    shapes.push_back({static_cast<int>(l.W.rows()), static_cast<int>(l.W.cols())});
  const Vec flat = flatten_params(net);
  doc["data"] = std::vector<double>(flat.data(), flat.data() + flat.size());
  return doc.dump();
}

Mlp mlp_from_json(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  Mlp net;
  net.out_activation = output_activation_from_name(doc.at("out_activation").get<std::string>());
  for (const auto& shape : doc.at("shapes")) {
    Mlp::Layer l;
    l.W = Mat::Zero(shape.at(0).get<int>(), shape.at(1).get<int>());
    l.b = Vec::Zero(shape.at(0).get<int>());
    net.layers.push_back(std::move(l));
  }
  const auto data = doc.at("data").get<std::vector<double>>();
  set_params(net, Eigen::Map<const Vec>(data.data(), static_cast<Eigen::Index>(data.size())));
  return net;
}

}  // namespace evkf
