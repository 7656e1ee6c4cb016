#include "evkf/dynamics.hpp"

#include <json.hpp>

namespace evkf {

namespace {

constexpr double kCbClampLo = 1e-6;
constexpr double kGammaClampLo = 1e-6;
constexpr double kGammaMeanFloor = 1e-6;

bool is_gaussian_kind(DynamicsKind k) {
  return k == DynamicsKind::LinearGaussian || k == DynamicsKind::MlpGaussian ||
         k == DynamicsKind::BuiltinGaussian;
}

bool is_gamma_kind(DynamicsKind k) {
  return k == DynamicsKind::MlpGamma || k == DynamicsKind::BuiltinGamma;
}

Vec clamp_cb_input(const Vec& z) {
  return z.cwiseMax(kCbClampLo).cwiseMin(1.0 - kCbClampLo);
}

Vec clamp_gamma_input(const Vec& z) { return z.cwiseMax(kGammaClampLo); }

void set_q(DynamicsModel& m, const Mat& q) {
  if (q.rows() != q.cols()) throw invalid_parameter("Q must be square");
  const auto llt = Eigen::LLT<Mat>(0.5 * (q + q.transpose()));
  if (llt.info() != Eigen::Success)
    throw invalid_parameter("dynamics state noise Q must be symmetric positive definite");
  m.Q = 0.5 * (q + q.transpose());
  m.Qinv = llt.solve(Mat::Identity(q.rows(), q.cols()));
  m.Qinv = 0.5 * (m.Qinv + m.Qinv.transpose());
}

}  // namespace

std::string dynamics_kind_name(DynamicsKind k) {
  switch (k) {
    case DynamicsKind::LinearGaussian: return "linear_gaussian";
    case DynamicsKind::MlpGaussian: return "mlp_gaussian";
    case DynamicsKind::BuiltinGaussian: return "builtin_gaussian";
    case DynamicsKind::MlpCB: return "mlp_cb";
    case DynamicsKind::MlpGamma: return "mlp_gamma";
    case DynamicsKind::BuiltinGamma: return "builtin_gamma";
  }
  throw invalid_parameter("unknown dynamics kind");
}

DynamicsKind dynamics_kind_from_name(const std::string& name) {
  if (name == "linear_gaussian") return DynamicsKind::LinearGaussian;
  if (name == "mlp_gaussian") return DynamicsKind::MlpGaussian;
  if (name == "builtin_gaussian") return DynamicsKind::BuiltinGaussian;
  if (name == "mlp_cb") return DynamicsKind::MlpCB;
  if (name == "mlp_gamma") return DynamicsKind::MlpGamma;
  if (name == "builtin_gamma") return DynamicsKind::BuiltinGamma;
  throw invalid_parameter("unknown dynamics kind: " + name);
}

// ------------------------------------------------------------- builtin maps

Vec BuiltinMap::eval(const Vec& z) const {
  switch (kind) {
    case Kind::Crnn:
      return z + (dt / tau) * (gamma * (W * z.array().tanh().matrix()) - z);
    case Kind::Vdp: {
      Vec f(2);
      f[0] = z[0] + (dt / tau1) * z[1];
      f[1] = z[1] + (dt / tau2) * (gamma * (1.0 - z[0] * z[0]) * z[1] - z[0]);
      return f;
    }
    case Kind::Ring: {
      const Vec u = z - center;
      const double r = std::max(u.norm(), 1e-9);
      Vec drift(2);
      drift[0] = omega * -u[1];
      drift[1] = omega * u[0];
      drift += kappa * (r0 - r) / r * u;
      const Vec raw = z + dt * drift;
      Vec f(2);
      for (int i = 0; i < 2; ++i) f[i] = floor + softplus(raw[i] - floor);
      return f;
    }
  }
  throw invalid_parameter("unknown builtin map");
}

Mat BuiltinMap::jacobian(const Vec& z) const {
  switch (kind) {
    case Kind::Crnn: {
      const int L = static_cast<int>(z.size());
      const Vec sech2 = (1.0 - z.array().tanh().square()).matrix();
      return Mat::Identity(L, L) +
             (dt / tau) * (gamma * W * sech2.asDiagonal().toDenseMatrix() - Mat::Identity(L, L));
    }
    case Kind::Vdp: {
      Mat jac(2, 2);
      jac(0, 0) = 1.0;
      jac(0, 1) = dt / tau1;
      jac(1, 0) = (dt / tau2) * (-2.0 * gamma * z[0] * z[1] - 1.0);
      jac(1, 1) = 1.0 + (dt / tau2) * gamma * (1.0 - z[0] * z[0]);
      return jac;
    }
    case Kind::Ring: {
      const Vec u = z - center;
      const double r = std::max(u.norm(), 1e-9);
      Mat perp(2, 2);
      perp << 0.0, -1.0, 1.0, 0.0;
      const Mat dradial =
          (r0 / r - 1.0) * Mat::Identity(2, 2) - (r0 / (r * r * r)) * (u * u.transpose());
      const Mat jraw = Mat::Identity(2, 2) + dt * (omega * perp + kappa * dradial);
      const Vec raw = z + dt * (omega * perp * u + kappa * ((r0 - r) / r) * u);
      Vec gate(2);
      for (int i = 0; i < 2; ++i) gate[i] = sigmoid(raw[i] - floor);
      return gate.asDiagonal() * jraw;
    }
  }
  throw invalid_parameter("unknown builtin map");
}

// ------------------------------------------------------------- constructors

DynamicsModel make_linear_gaussian(const Mat& A, const Mat& Q) {
  DynamicsModel m;
  m.kind = DynamicsKind::LinearGaussian;
  m.family = {Family::GaussianDense, static_cast<int>(A.rows())};
  if (A.rows() != A.cols() || A.rows() != Q.rows())
    throw invalid_parameter("linear gaussian dynamics: A and Q must be LxL");
  m.A = A;
  set_q(m, Q);
  return m;
}

DynamicsModel make_mlp_gaussian(const Mlp& net, const Mat& Q) {
  DynamicsModel m;
  m.kind = DynamicsKind::MlpGaussian;
  if (net.in_dim() != net.out_dim() || net.in_dim() != Q.rows())
    throw invalid_parameter("mlp gaussian dynamics: net must map L -> L matching Q");
  m.family = {Family::GaussianDense, net.in_dim()};
  m.net = net;
  set_q(m, Q);
  return m;
}

DynamicsModel make_mlp_cb(const Mlp& net) {
  DynamicsModel m;
  m.kind = DynamicsKind::MlpCB;
  if (net.in_dim() != net.out_dim())
    throw invalid_parameter("mlp cb dynamics: net must map L -> L");
  if (net.out_activation != OutputActivation::Identity)
    throw invalid_parameter("mlp cb dynamics: natural-parameter head must be identity");
  m.family = {Family::ContinuousBernoulli, net.in_dim()};
  m.net = net;
  return m;
}

DynamicsModel make_mlp_gamma(const Mlp& net, double b0) {
  DynamicsModel m;
  m.kind = DynamicsKind::MlpGamma;
  if (net.in_dim() != net.out_dim())
    throw invalid_parameter("mlp gamma dynamics: net must map L -> L");
  if (net.out_activation != OutputActivation::Softplus)
    throw invalid_parameter("mlp gamma dynamics: mean head must be softplus (strictly positive)");
  if (!(b0 > 0.0)) throw invalid_parameter("mlp gamma dynamics: b0 must be > 0");
  m.family = {Family::Gamma, net.in_dim()};
  m.net = net;
  m.b0 = b0;
  return m;
}

DynamicsModel builtin_crnn(int L, double gamma, const Mat& W, double dt, double tau, const Mat& Q) {
  if (L < 1 || W.rows() != L || W.cols() != L)
    throw invalid_parameter("builtin_crnn: W must be LxL with L >= 1");
  DynamicsModel m;
  m.kind = DynamicsKind::BuiltinGaussian;
  m.family = {Family::GaussianDense, L};
  m.builtin.kind = BuiltinMap::Kind::Crnn;
  m.builtin.gamma = gamma;
  m.builtin.W = W;
  m.builtin.dt = dt;
  m.builtin.tau = tau;
  m.trainable = false;
  set_q(m, Q);
  return m;
}

DynamicsModel builtin_vdp(double tau1, double tau2, double gamma, double dt, double sigma) {
  if (!(tau1 > 0.0 && tau2 > 0.0 && dt > 0.0))
    throw invalid_parameter("builtin_vdp: time constants must be positive");
  if (!(sigma > 0.0)) throw invalid_parameter("builtin_vdp: sigma must be > 0 (Q must be SPD)");
  DynamicsModel m;
  m.kind = DynamicsKind::BuiltinGaussian;
  m.family = {Family::GaussianDense, 2};
  m.builtin.kind = BuiltinMap::Kind::Vdp;
  m.builtin.tau1 = tau1;
  m.builtin.tau2 = tau2;
  m.builtin.gamma = gamma;
  m.builtin.dt = dt;
  m.trainable = false;
  set_q(m, sigma * sigma * Mat::Identity(2, 2));
  return m;
}

DynamicsModel builtin_gamma_ring(const Vec& center, double r0, double omega, double kappa,
                                 double dt, double b0) {
  if (center.size() != 2) throw invalid_parameter("builtin_gamma_ring: 2-D only");
  if (!(b0 > 0.0)) throw invalid_parameter("builtin_gamma_ring: b0 must be > 0");
  DynamicsModel m;
  m.kind = DynamicsKind::BuiltinGamma;
  m.family = {Family::Gamma, 2};
  m.builtin.kind = BuiltinMap::Kind::Ring;
  m.builtin.center = center;
  m.builtin.r0 = r0;
  m.builtin.omega = omega;
  m.builtin.kappa = kappa;
  m.builtin.dt = dt;
  m.b0 = b0;
  m.trainable = false;
  return m;
}

// ------------------------------------------------------------------ the map

Vec conditional_mean_map(const DynamicsModel& model, const Vec& z) {
  switch (model.kind) {
    case DynamicsKind::LinearGaussian: return model.A * z;
    case DynamicsKind::MlpGaussian: return forward(model.net, z);
    case DynamicsKind::BuiltinGaussian: return model.builtin.eval(z);
    case DynamicsKind::MlpCB: {
      const Vec eta = forward(model.net, clamp_cb_input(z));
      Vec mean(eta.size());
      for (Eigen::Index i = 0; i < eta.size(); ++i) mean[i] = cb_mean(eta[i]);
      return mean;
    }
    case DynamicsKind::MlpGamma:
      return forward(model.net, clamp_gamma_input(z)).cwiseMax(kGammaMeanFloor);
    case DynamicsKind::BuiltinGamma:
      return model.builtin.eval(clamp_gamma_input(z)).cwiseMax(kGammaMeanFloor);
  }
  throw invalid_parameter("unknown dynamics kind");
}

Mat conditional_mean_jacobian(const DynamicsModel& model, const Vec& z) {
  switch (model.kind) {
    case DynamicsKind::LinearGaussian: return model.A;
    case DynamicsKind::MlpGaussian: return input_jacobian(model.net, z);
    case DynamicsKind::BuiltinGaussian: return model.builtin.jacobian(z);
    case DynamicsKind::MlpCB: {
      const Vec zc = clamp_cb_input(z);
      const Vec eta = forward(model.net, zc);
      Mat jac = input_jacobian(model.net, zc);
      for (Eigen::Index i = 0; i < eta.size(); ++i) jac.row(i) *= cb_var(eta[i]);
      return jac;
    }
    case DynamicsKind::MlpGamma: return input_jacobian(model.net, clamp_gamma_input(z));
    case DynamicsKind::BuiltinGamma: return model.builtin.jacobian(clamp_gamma_input(z));
  }
  throw invalid_parameter("unknown dynamics kind");
}

NaturalParams natural_map(const DynamicsModel& model, const Vec& z) {
  if (!in_support(model.family, z))
    throw invalid_parameter("natural_map: z outside the dynamics support");
  const int L = model.family.dim;
  if (is_gaussian_kind(model.kind)) {
    const Vec mean = conditional_mean_map(model, z);
    Vec lambda(L + L * L);
    lambda.head(L) = model.Qinv * mean;
    lambda.tail(L * L) = vec_from_sym(-0.5 * model.Qinv);
    return {model.family, std::move(lambda)};
  }
  if (model.kind == DynamicsKind::MlpCB)
    return {model.family, forward(model.net, clamp_cb_input(z))};
  // gamma kinds: shape b0 f^2, rate b0 f
  const Vec f = conditional_mean_map(model, z);
  Vec lambda(2 * L);
  lambda.head(L) = (model.b0 * f.array().square() - 1.0).matrix();
  lambda.tail(L) = -model.b0 * f;
  return {model.family, std::move(lambda)};
}

Vec conditional_sample(const DynamicsModel& model, const Vec& z, Rng& rng) {
  const NaturalParams p = natural_map(model, z);
  return sample(p, 1, rng).row(0).transpose();
}

double conditional_log_density(const DynamicsModel& model, const Vec& z_prev, const Vec& z_next) {
  return log_density(natural_map(model, z_prev), z_next);
}

double conditional_kl(const DynamicsModel& a, const DynamicsModel& b, const Vec& z) {
  if (a.family != b.family) throw invalid_parameter("conditional_kl: family mismatch");
  return kl(natural_map(a, z), natural_map(b, z));
}

// ------------------------------------------------------- trainable interface

int dyn_param_count(const DynamicsModel& model) {
  if (!model.trainable) return model.train_log_q ? model.family.dim : 0;
  int n = 0;
  switch (model.kind) {
    case DynamicsKind::LinearGaussian: n = static_cast<int>(model.A.size()); break;
    case DynamicsKind::MlpGaussian:
    case DynamicsKind::MlpCB:
    case DynamicsKind::MlpGamma: n = param_count(model.net); break;
    default: n = 0; break;
  }
  if (model.train_log_q) n += model.family.dim;
  return n;
}

Vec dyn_flatten(const DynamicsModel& model) {
  Vec flat(dyn_param_count(model));
  int at = 0;
  if (model.trainable) {
    if (model.kind == DynamicsKind::LinearGaussian) {
      for (Eigen::Index i = 0; i < model.A.rows(); ++i)
        for (Eigen::Index j = 0; j < model.A.cols(); ++j) flat[at++] = model.A(i, j);
    } else if (model.kind == DynamicsKind::MlpGaussian || model.kind == DynamicsKind::MlpCB ||
               model.kind == DynamicsKind::MlpGamma) {
      const Vec nf = flatten_params(model.net);
      flat.segment(at, nf.size()) = nf;
      at += static_cast<int>(nf.size());
    }
  }
  if (model.train_log_q)
    for (int i = 0; i < model.family.dim; ++i) flat[at++] = std::log(model.Q(i, i));
  return flat;
}

void dyn_set_params(DynamicsModel& model, const Vec& flat) {
  if (flat.size() != dyn_param_count(model))
    throw invalid_parameter("dyn_set_params: size mismatch");
  int at = 0;
  if (model.trainable) {
    if (model.kind == DynamicsKind::LinearGaussian) {
      for (Eigen::Index i = 0; i < model.A.rows(); ++i)
        for (Eigen::Index j = 0; j < model.A.cols(); ++j) model.A(i, j) = flat[at++];
    } else if (model.kind == DynamicsKind::MlpGaussian || model.kind == DynamicsKind::MlpCB ||
               model.kind == DynamicsKind::MlpGamma) {
      const int n = param_count(model.net);
      set_params(model.net, flat.segment(at, n));
      at += n;
    }
  }
  if (model.train_log_q) {
    Mat q = model.Q;
    for (int i = 0; i < model.family.dim; ++i) q(i, i) = std::exp(flat[at++]);
    set_q(model, q);
  }
}

Vec dyn_natural_map_vjp(const DynamicsModel& model, const Vec& z, const Vec& r) {
  const int L = model.family.dim;
  Vec flat = Vec::Zero(dyn_param_count(model));
  int at = 0;
  if (model.trainable) {
    switch (model.kind) {
      case DynamicsKind::LinearGaussian: {
        // lambda1 = Qinv A z
        const Mat ga = model.Qinv * r.head(L) * z.transpose();
        for (Eigen::Index i = 0; i < ga.rows(); ++i)
          for (Eigen::Index j = 0; j < ga.cols(); ++j) flat[at++] = ga(i, j);
        break;
      }
      case DynamicsKind::MlpGaussian: {
        const Vec up = model.Qinv * r.head(L);
        const Vec g = flatten_grad(backward(model.net, z, up));
        flat.segment(at, g.size()) = g;
        at += static_cast<int>(g.size());
        break;
      }
      case DynamicsKind::MlpCB: {
        const Vec g = flatten_grad(backward(model.net, clamp_cb_input(z), r));
        flat.segment(at, g.size()) = g;
        at += static_cast<int>(g.size());
        break;
      }
      case DynamicsKind::MlpGamma: {
        const Vec zc = clamp_gamma_input(z);
        const Vec f = forward(model.net, zc).cwiseMax(kGammaMeanFloor);
        // lambda = (b0 f^2 - 1, -b0 f)
        Vec up(L);
        for (int i = 0; i < L; ++i)
          up[i] = r[i] * 2.0 * model.b0 * f[i] + r[L + i] * (-model.b0);
        const Vec g = flatten_grad(backward(model.net, zc, up));
        flat.segment(at, g.size()) = g;
        at += static_cast<int>(g.size());
        break;
      }
      default:
        break;
    }
  }
  if (model.train_log_q && is_gaussian_kind(model.kind)) {
    // diagonal Q: lambda1_i = f_i / q_i, lambda2_ii = -1/(2 q_i)
    const Vec mean = conditional_mean_map(model, z);
    for (int i = 0; i < L; ++i) {
      const double qi = model.Q(i, i);
      flat[at++] = r[i] * (-mean[i] / qi) + r[L + i * L + i] * (0.5 / qi);
    }
  }
  return flat;
}

// -------------------------------------------------------------- persistence

namespace {

nlohmann::json mat_to_json(const Mat& m) {
  nlohmann::json j;
  j["rows"] = static_cast<int>(m.rows());
  j["cols"] = static_cast<int>(m.cols());
  std::vector<double> data;
  data.reserve(m.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j2 = 0; j2 < m.cols(); ++j2) data.push_back(m(i, j2));
  j["data"] = data;
  return j;
}

Mat mat_from_json(const nlohmann::json& j) {
  Mat m(j.at("rows").get<int>(), j.at("cols").get<int>());
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != m.size())
    throw invalid_parameter("matrix json: data length mismatch");
  int at = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j2 = 0; j2 < m.cols(); ++j2) m(i, j2) = data[at++];
  return m;
}

}  // namespace

std::string dynamics_to_json(const DynamicsModel& model) {
  nlohmann::json doc;
  doc["kind"] = dynamics_kind_name(model.kind);
  doc["family"] = family_name(model.family.family);
  doc["dim"] = model.family.dim;
  doc["trainable"] = model.trainable;
  doc["train_log_q"] = model.train_log_q;
  switch (model.kind) {
    case DynamicsKind::LinearGaussian:
      doc["A"] = mat_to_json(model.A);
      doc["Q"] = mat_to_json(model.Q);
      break;
    case DynamicsKind::MlpGaussian:
      doc["net"] = nlohmann::json::parse(mlp_to_json(model.net));
      doc["Q"] = mat_to_json(model.Q);
      break;
    case DynamicsKind::MlpCB:
      doc["net"] = nlohmann::json::parse(mlp_to_json(model.net));
      break;
    case DynamicsKind::MlpGamma:
      doc["net"] = nlohmann::json::parse(mlp_to_json(model.net));
      doc["b0"] = model.b0;
      break;
    case DynamicsKind::BuiltinGaussian:
    case DynamicsKind::BuiltinGamma: {
      nlohmann::json b;
      b["map"] = model.builtin.kind == BuiltinMap::Kind::Crnn ? "crnn"
                 : model.builtin.kind == BuiltinMap::Kind::Vdp ? "vdp"
                                                               : "ring";
      b["gamma"] = model.builtin.gamma;
      b["dt"] = model.builtin.dt;
      b["tau"] = model.builtin.tau;
      b["tau1"] = model.builtin.tau1;
      b["tau2"] = model.builtin.tau2;
      b["omega"] = model.builtin.omega;
      b["kappa"] = model.builtin.kappa;
      b["r0"] = model.builtin.r0;
      b["floor"] = model.builtin.floor;
      if (model.builtin.W.size() > 0) b["W"] = mat_to_json(model.builtin.W);
      if (model.builtin.center.size() > 0)
        b["center"] = std::vector<double>(model.builtin.center.data(),
                                          model.builtin.center.data() + model.builtin.center.size());
      doc["builtin"] = b;
      if (model.kind == DynamicsKind::BuiltinGaussian) doc["Q"] = mat_to_json(model.Q);
      else doc["b0"] = model.b0;
      break;
    }
  }
  return doc.dump();
}

DynamicsModel dynamics_from_json(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  const DynamicsKind kind = dynamics_kind_from_name(doc.at("kind").get<std::string>());
  DynamicsModel m;
  switch (kind) {
    case DynamicsKind::LinearGaussian:
      m = make_linear_gaussian(mat_from_json(doc.at("A")), mat_from_json(doc.at("Q")));
      break;
    case DynamicsKind::MlpGaussian:
      m = make_mlp_gaussian(mlp_from_json(doc.at("net").dump()), mat_from_json(doc.at("Q")));
      break;
    case DynamicsKind::MlpCB:
      m = make_mlp_cb(mlp_from_json(doc.at("net").dump()));
      break;
    case DynamicsKind::MlpGamma:
      m = make_mlp_gamma(mlp_from_json(doc.at("net").dump()), doc.at("b0").get<double>());
      break;
    case DynamicsKind::BuiltinGaussian:
    case DynamicsKind::BuiltinGamma: {
      const auto& b = doc.at("builtin");
      const std::string map = b.at("map").get<std::string>();
      if (map == "crnn") {
        m = builtin_crnn(doc.at("dim").get<int>(), b.at("gamma").get<double>(),
                         mat_from_json(b.at("W")), b.at("dt").get<double>(),
                         b.at("tau").get<double>(), mat_from_json(doc.at("Q")));
      } else if (map == "vdp") {
        m = builtin_vdp(b.at("tau1").get<double>(), b.at("tau2").get<double>(),
                        b.at("gamma").get<double>(), b.at("dt").get<double>(), 1.0);
        m.Q = mat_from_json(doc.at("Q"));
        m.Qinv = Eigen::LLT<Mat>(m.Q).solve(Mat::Identity(2, 2));
      } else {
        const auto cv = b.at("center").get<std::vector<double>>();
        m = builtin_gamma_ring(Eigen::Map<const Vec>(cv.data(), 2), b.at("r0").get<double>(),
                               b.at("omega").get<double>(), b.at("kappa").get<double>(),
                               b.at("dt").get<double>(), doc.at("b0").get<double>());
        m.builtin.floor = b.at("floor").get<double>();
      }
      break;
    }
  }
  m.trainable = doc.at("trainable").get<bool>();
  m.train_log_q = doc.at("train_log_q").get<bool>();
  return m;
}

}  // namespace evkf
