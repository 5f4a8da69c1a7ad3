#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gradcheck.hpp"
#include "wsplin/nn/layers.hpp"
#include "wsplin/nn/optim.hpp"

using namespace wsplin;
using namespace wsplin::nn;

TEST_CASE("affine gradients match finite differences") {
  Affine layer(7, 5);
  const auto r = gradcheck::check_layer(layer, {3, 7}, Mode::kEval, 42);
  CHECK(r.max_param_err < 1e-6);
  CHECK(r.max_input_err < 1e-6);
}

TEST_CASE("conv2d gradients match finite differences") {
  for (int stride : {1, 2}) {
    Conv2d layer(3, 4, 3, stride, 1);
    const auto r = gradcheck::check_layer(layer, {2, 3, 8, 8}, Mode::kEval, 43);
    CHECK(r.max_param_err < 1e-6);
    CHECK(r.max_input_err < 1e-6);
  }
}

TEST_CASE("depthwise conv gradients match finite differences") {
  for (int stride : {1, 2}) {
    DepthwiseConv2d layer(3, 3, stride, 1);
    const auto r = gradcheck::check_layer(layer, {2, 3, 8, 8}, Mode::kEval, 44);
    CHECK(r.max_param_err < 1e-6);
    CHECK(r.max_input_err < 1e-6);
  }
}

TEST_CASE("batchnorm gradients match finite differences in both modes") {
  {
    BatchNorm2d layer(3);
    const auto r = gradcheck::check_layer(layer, {4, 3, 5, 5}, Mode::kTrain, 45);
    CHECK(r.max_param_err < 1e-5);
    CHECK(r.max_input_err < 1e-5);
  }
  {
    BatchNorm2d layer(3);
    const auto r = gradcheck::check_layer(layer, {4, 3, 5, 5}, Mode::kEval, 46);
    CHECK(r.max_param_err < 1e-6);
    CHECK(r.max_input_err < 1e-6);
  }
}

TEST_CASE("activation and pooling gradients match finite differences") {
  {
    Sigmoid layer;
    const auto r = gradcheck::check_layer(layer, {3, 6}, Mode::kEval, 47);
    CHECK(r.max_input_err < 1e-6);
  }
  {
    Swish layer;
    const auto r = gradcheck::check_layer(layer, {3, 6}, Mode::kEval, 48);
    CHECK(r.max_input_err < 1e-6);
  }
  {
    GlobalAvgPool layer;
    const auto r = gradcheck::check_layer(layer, {2, 3, 4, 4}, Mode::kEval, 49);
    CHECK(r.max_input_err < 1e-6);
  }
  {
    Softmax layer;
    const auto r = gradcheck::check_layer(layer, {3, 5}, Mode::kEval, 50);
    CHECK(r.max_input_err < 1e-6);
  }
}

TEST_CASE("squeeze-excite gradients match finite differences") {
  SqueezeExcite layer(6, 2);
  const auto r = gradcheck::check_layer(layer, {2, 6, 4, 4}, Mode::kEval, 51);
  CHECK(r.max_param_err < 1e-6);
  CHECK(r.max_input_err < 1e-6);
}

TEST_CASE("mbconv block gradients match finite differences") {
  {
    MBConv block(4, 4, 3, 1, 2);  // skip path active
    const auto r = gradcheck::check_layer(block, {2, 4, 8, 8}, Mode::kTrain, 52, 32, 32);
    CHECK(r.max_param_err < 1e-5);
    CHECK(r.max_input_err < 1e-5);
  }
  {
    MBConv block(4, 6, 5, 2, 2);  // no skip
    const auto r = gradcheck::check_layer(block, {2, 4, 9, 9}, Mode::kTrain, 53, 32, 32);
    CHECK(r.max_param_err < 1e-5);
    CHECK(r.max_input_err < 1e-5);
  }
}

TEST_CASE("relu zeroes gradients on inactive units") {
  ReLU layer;
  int slots = 0;
  layer.assign_slots(slots);
  Ctx ctx(slots, 0);
  Tensor x({1, 4});
  x[0] = -1.0;
  x[1] = 2.0;
  x[2] = -0.5;
  x[3] = 0.5;
  const Tensor y = layer.forward(x, ctx);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 2.0);
  Tensor gy = Tensor::full({1, 4}, 1.0);
  const Tensor gx = layer.backward(gy, ctx);
  CHECK(gx[0] == 0.0);
  CHECK(gx[1] == 1.0);
  CHECK(gx[2] == 0.0);
  CHECK(gx[3] == 1.0);
}

TEST_CASE("dropout scales kept units and vanishes in eval mode") {
  Dropout layer(0.5);
  int slots = 0;
  layer.assign_slots(slots);
  Tensor x = Tensor::full({1, 1000}, 1.0);

  Ctx train_ctx(slots, 0);
  train_ctx.mode = Mode::kTrain;
  train_ctx.rng.seed(9);
  const Tensor y = layer.forward(x, train_ctx);
  int64_t kept = 0;
  for (int64_t i = 0; i < y.numel(); ++i) {
    if (y[i] != 0.0) {
      CHECK(y[i] == doctest::Approx(2.0));
      ++kept;
    }
  }
  CHECK(kept > 400);
  CHECK(kept < 600);

  Ctx eval_ctx(slots, 0);
  eval_ctx.mode = Mode::kEval;
  const Tensor ye = layer.forward(x, eval_ctx);
  for (int64_t i = 0; i < ye.numel(); ++i) CHECK(ye[i] == 1.0);
}

TEST_CASE("batchnorm running stats converge toward batch statistics") {
  BatchNorm2d layer(1, 1e-3, 0.5);
  int slots = 0;
  layer.assign_slots(slots);
  std::vector<Param*> params;
  layer.collect_params(params);
  for (size_t i = 0; i < params.size(); ++i) params[i]->id = static_cast<int>(i);
  std::mt19937_64 rng(3);
  layer.init(rng);

  Tensor x({2, 1, 2, 2});
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<double>(i);  // mean 3.5
  for (int it = 0; it < 30; ++it) {
    Ctx ctx(slots, static_cast<int>(params.size()));
    ctx.mode = Mode::kTrain;
    layer.forward(x, ctx);
  }
  CHECK(layer.running_mean[0] == doctest::Approx(3.5).epsilon(1e-6));
}

TEST_CASE("adam converges on a quadratic bowl") {
  Affine layer(1, 1);
  int slots = 0;
  layer.assign_slots(slots);
  std::vector<Param*> params;
  layer.collect_params(params);
  for (size_t i = 0; i < params.size(); ++i) params[i]->id = static_cast<int>(i);
  layer.weight.value[0] = 3.0;
  layer.bias.value[0] = -2.0;

  Adam adam(params);
  for (int it = 0; it < 4000; ++it) {
    std::vector<Tensor> grads(2);
    grads[0] = Tensor({1, 1});
    grads[0][0] = 2.0 * layer.weight.value[0];
    grads[1] = Tensor({1});
    grads[1][0] = 2.0 * layer.bias.value[0];
    adam.step(0.01, grads);
  }
  CHECK(std::abs(layer.weight.value[0]) < 1e-3);
  CHECK(std::abs(layer.bias.value[0]) < 1e-3);
}

TEST_CASE("lookahead interpolates slow weights") {
  Affine layer(1, 1);
  std::vector<Param*> params;
  layer.collect_params(params);
  for (size_t i = 0; i < params.size(); ++i) params[i]->id = static_cast<int>(i);
  layer.weight.value[0] = 0.0;
  layer.bias.value[0] = 0.0;

  // Inner optimizer: plain SGD-like stub via Adam on constant gradient.
  auto adam = std::make_unique<Adam>(params);
  Lookahead look(std::move(adam), params, 5, 0.5);
  std::vector<Tensor> grads(2);
  grads[0] = Tensor::full({1, 1}, 1.0);
  grads[1] = Tensor::full({1}, 1.0);
  for (int it = 0; it < 5; ++it) look.step(0.1, grads);
  // After k steps the fast weights snap halfway back toward the start.
  CHECK(layer.weight.value[0] > -0.5);
  CHECK(layer.weight.value[0] < 0.0);
}
