#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "evkf/nets.hpp"
#include "support.hpp"

using namespace evkf;
using namespace evkf::test;

namespace {

Mlp linear_net(const Mat& w, const Vec& b) {
  Mlp net;
  net.layers.push_back({w, b});
  return net;
}

}  // namespace

TEST_CASE("forward basics") {
  {
    Mlp net = linear_net(Mat::Zero(3, 2), Vec::Zero(3));
    CHECK(forward(net, Vec::Ones(2)).isZero(0.0));
  }
  {
    Mlp net = linear_net(Mat::Identity(3, 3), Vec::Zero(3));
    Vec x(3);
    x << 0.3, -1.2, 4.0;
    CHECK(forward(net, x) == x);
  }
  {
    Rng rng(5);
    Mlp net = make_mlp(4, {16}, 3, OutputActivation::Identity, rng);
    Vec x(4);
    x << 0.1, 0.2, -0.3, 0.4;
    const Vec y1 = forward(net, x);
    const Vec y2 = forward(net, x);
    CHECK(y1 == y2);
    Rng rng2(5);
    Mlp net2 = make_mlp(4, {16}, 3, OutputActivation::Identity, rng2);
    CHECK(forward(net2, x) == y1);
  }
  CHECK_THROWS_AS(forward(linear_net(Mat::Identity(2, 2), Vec::Zero(2)), Vec::Zero(3)),
                  invalid_parameter);
}

TEST_CASE("backward: linear case is g x^T and g") {
  Mat w(2, 3);
  w << 1, 2, 3, 4, 5, 6;
  Mlp net = linear_net(w, Vec::Zero(2));
  Vec x(3), g(2);
  x << 0.5, -1.0, 2.0;
  g << 2.0, -3.0;
  const MlpGrad grad = backward(net, x, g);
  CHECK((grad.layers[0].W - g * x.transpose()).norm() == doctest::Approx(0.0));
  CHECK((grad.layers[0].b - g).norm() == doctest::Approx(0.0));
  CHECK((grad.input - w.transpose() * g).norm() == doctest::Approx(0.0));
}

TEST_CASE("silu derivative at zero is one half") {
  CHECK(silu_deriv(0.0) == doctest::Approx(0.5));
  // and through a network: d/dx [silu(x)] at 0
  Mlp net;
  net.layers.push_back({Mat::Identity(1, 1), Vec::Zero(1)});
  net.layers.push_back({Mat::Identity(1, 1), Vec::Zero(1)});
  const MlpGrad grad = backward(net, Vec::Zero(1), Vec::Ones(1));
  CHECK(grad.input[0] == doctest::Approx(0.5));
}

TEST_CASE("backward matches central finite differences on random nets") {
  Rng rng(77);
  const OutputActivation acts[] = {OutputActivation::Identity, OutputActivation::Softplus,
                                   OutputActivation::Sigmoid};
  for (int trial = 0; trial < 50; ++trial) {
    const int in = 1 + static_cast<int>(rng.next_u64() % 4);
    const int out = 1 + static_cast<int>(rng.next_u64() % 3);
    const int hidden = 2 + static_cast<int>(rng.next_u64() % 6);
    Mlp net = make_mlp(in, {hidden}, out, acts[trial % 3], rng);
    Vec x = rng.normal_vec(in);
    Vec g = rng.normal_vec(out);
    auto scalar = [&](const Vec& flat) {
      Mlp tmp = net;
      set_params(tmp, flat);
      return g.dot(forward(tmp, x));
    };
    const Vec flat = flatten_params(net);
    const Vec analytic = flatten_grad(backward(net, x, g));
    for (int k = 0; k < flat.size(); ++k) {
      Vec lo = flat, hi = flat;
      hi[k] += 1e-5;
      lo[k] -= 1e-5;
      const double fd = (scalar(hi) - scalar(lo)) / 2e-5;
      CHECK(rel_err(analytic[k], fd, 1e-6) < 1e-4);
    }
    // input gradient too
    const Vec gin = backward(net, x, g).input;
    for (int k = 0; k < x.size(); ++k) {
      Vec lo = x, hi = x;
      hi[k] += 1e-5;
      lo[k] -= 1e-5;
      const double fd = (g.dot(forward(net, hi)) - g.dot(forward(net, lo))) / 2e-5;
      CHECK(rel_err(gin[k], fd, 1e-6) < 1e-4);
    }
  }
}

TEST_CASE("input_jacobian agrees with backward rows") {
  Rng rng(11);
  Mlp net = make_mlp(3, {8}, 2, OutputActivation::Identity, rng);
  Vec x = rng.normal_vec(3);
  const Mat jac = input_jacobian(net, x);
  Vec e = Vec::Zero(2);
  e[1] = 1.0;
  CHECK((jac.row(1).transpose() - backward(net, x, e).input).norm() < 1e-14);
}

TEST_CASE("output activations respect their ranges") {
  Rng rng(13);
  Mlp sp = make_mlp(2, {8}, 2, OutputActivation::Softplus, rng);
  Mlp sg = make_mlp(2, {8}, 2, OutputActivation::Sigmoid, rng);
  for (int i = 0; i < 100; ++i) {
    const Vec x = 3.0 * rng.normal_vec(2);
    CHECK((forward(sp, x).array() > 0.0).all());
    const Vec y = forward(sg, x);
    CHECK(((y.array() > 0.0) && (y.array() < 1.0)).all());
  }
}

TEST_CASE("adam zero gradient leaves parameters, bumps the counter") {
  AdamState st = make_adam(3);
  const Vec p = Vec::Ones(3);
  const Vec p2 = adam_step(p, Vec::Zero(3), st);
  CHECK(p2 == p);
  CHECK(st.step == 1);
}

TEST_CASE("adam constant gradient moves by about lr against the sign") {
  AdamState st = make_adam(1, 1e-2);
  Vec p = Vec::Zero(1);
  const Vec g = Vec::Constant(1, 7.3);
  for (int i = 0; i < 50; ++i) p = adam_step(p, g, st);
  // after bias correction each step is ~ -lr * sign(g)
  CHECK(p[0] < 0.0);
  CHECK(std::abs(-p[0] - 50 * 1e-2) / (50 * 1e-2) < 0.05);
}

TEST_CASE("adam drives a scalar quadratic to its minimum") {
  AdamState st = make_adam(1, 1e-2);
  Vec w = Vec::Zero(1);
  for (int i = 0; i < 2000; ++i) {
    const Vec g = Vec::Constant(1, w[0] - 3.0);
    w = adam_step(w, g, st);
  }
  CHECK(std::abs(w[0] - 3.0) < 1e-2);
}

TEST_CASE("adam rejects non-finite gradients") {
  AdamState st = make_adam(1);
  CHECK_THROWS_AS(adam_step(Vec::Zero(1), Vec::Constant(1, std::nan("")), st), numeric_error);
}

TEST_CASE("json round-trip reproduces the net bitwise") {
  Rng rng(19);
  Mlp net = make_mlp(3, {5, 4}, 2, OutputActivation::Softplus, rng);
  const Mlp back = mlp_from_json(mlp_to_json(net));
  const Vec x = rng.normal_vec(3);
  CHECK(forward(net, x) == forward(back, x));
  CHECK(flatten_params(net) == flatten_params(back));
}
