#pragma once

// Finite-difference gradient checking used by the unit tests and the
// acceptance suite. Everything runs in double precision with central
// differences.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "wsplin/model/wsplin_model.hpp"
#include "wsplin/nn/layers.hpp"
#include "wsplin/objectives.hpp"

namespace wsplin::gradcheck {

inline double rel_err(double a, double b) {
  // Both sides below the noise floor of central differences count as a match
  // (dead ReLU paths and other genuinely zero gradients).
  if (std::abs(a) < 1e-7 && std::abs(b) < 1e-7) return 0.0;
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

// Scalar probe loss over a layer output: a fixed random linear functional,
// which makes dL/dy the weight vector itself.
struct LayerCheckResult {
  double max_param_err = 0.0;
  double max_input_err = 0.0;
};

inline LayerCheckResult check_layer(nn::Layer& layer, const Shape& input_shape, nn::Mode mode,
                                    uint64_t seed, int param_probes = 24, int input_probes = 24) {
  int slots = 0;
  layer.assign_slots(slots);
  std::vector<nn::Param*> params;
  layer.collect_params(params);
  for (size_t i = 0; i < params.size(); ++i) params[i]->id = static_cast<int>(i);

  std::mt19937_64 rng(seed);
  layer.init(rng);
  // Nudge biases off zero so their gradient paths are exercised.
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (nn::Param* p : params) {
    for (int64_t i = 0; i < p->value.numel(); ++i) {
      if (p->value[i] == 0.0) p->value[i] = 0.1 * u(rng);
    }
  }

  Tensor x(input_shape);
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = u(rng);

  auto make_ctx = [&]() {
    nn::Ctx ctx(slots, static_cast<int>(params.size()));
    ctx.mode = mode;
    ctx.rng.seed(seed + 1);
    return ctx;
  };

  // Probe functional.
  std::vector<double> w;
  Tensor y0;
  {
    auto ctx = make_ctx();
    y0 = layer.forward(x, ctx);
  }
  w.resize(static_cast<size_t>(y0.numel()));
  for (auto& v : w) v = u(rng);

  auto loss_of = [&](const Tensor& input) {
    auto ctx = make_ctx();
    const Tensor y = layer.forward(input, ctx);
    double loss = 0.0;
    for (int64_t i = 0; i < y.numel(); ++i) loss += w[static_cast<size_t>(i)] * y[i];
    return loss;
  };

  // Analytic pass.
  auto ctx = make_ctx();
  const Tensor y = layer.forward(x, ctx);
  Tensor gy(y.shape());
  for (int64_t i = 0; i < gy.numel(); ++i) gy[i] = w[static_cast<size_t>(i)];
  const Tensor gx = layer.backward(gy, ctx);

  LayerCheckResult result;
  auto probe_indices = [&](int64_t numel, int count) {
    std::vector<int64_t> idx;
    if (numel <= count) {
      for (int64_t i = 0; i < numel; ++i) idx.push_back(i);
    } else {
      std::uniform_int_distribution<int64_t> pick(0, numel - 1);
      for (int i = 0; i < count; ++i) idx.push_back(pick(rng));
    }
    return idx;
  };

  for (nn::Param* p : params) {
    Tensor& grad = ctx.grads[static_cast<size_t>(p->id)];
    for (int64_t i : probe_indices(p->value.numel(), param_probes)) {
      const double orig = p->value[i];
      const double h = 1e-5 * std::max(1.0, std::abs(orig));
      p->value[i] = orig + h;
      const double up = loss_of(x);
      p->value[i] = orig - h;
      const double dn = loss_of(x);
      p->value[i] = orig;
      const double fd = (up - dn) / (2.0 * h);
      const double an = grad.numel() ? grad[i] : 0.0;
      result.max_param_err = std::max(result.max_param_err, rel_err(fd, an));
    }
  }
  for (int64_t i : probe_indices(x.numel(), input_probes)) {
    const double orig = x[i];
    const double h = 1e-5 * std::max(1.0, std::abs(orig));
    x[i] = orig + h;
    const double up = loss_of(x);
    x[i] = orig - h;
    const double dn = loss_of(x);
    x[i] = orig;
    const double fd = (up - dn) / (2.0 * h);
    result.max_input_err = std::max(result.max_input_err, rel_err(fd, gx[i]));
  }
  return result;
}

// Composed-model check: total loss (cross-entropy + lambda * sparsity) of one
// sample against central differences over sampled parameters of every tensor.
struct ModelCheckResult {
  double max_rel_err = 0.0;
  int probes = 0;
};

inline double model_total_loss(WsplinModel& model, const Tensor& patches, int label_class,
                               double lambda) {
  nn::Ctx ctx = model.make_ctx(nn::Mode::kTrain, 0);
  const auto fwd = model.forward(patches, ctx);
  Tensor labels({1, model.config().num_classes});
  labels[label_class] = 1.0;
  std::vector<Tensor> S = {fwd.S};
  return total_loss(fwd.probs, labels, S, lambda, model.config().normal_class).total;
}

inline ModelCheckResult check_model(WsplinModel& model, const Tensor& patches, int label_class,
                                    uint64_t seed, int probes_per_tensor = 4) {
  const PipelineConfig& cfg = model.config();
  const double lambda = cfg.lambda;

  // Analytic gradients through the training path.
  nn::Ctx ctx = model.make_ctx(nn::Mode::kTrain, 0);
  const auto fwd = model.forward(patches, ctx);
  Tensor dprobs({1, cfg.num_classes});
  dprobs[label_class] = -1.0 / std::max(fwd.probs[label_class], kProbFloor);
  const bool distressed = cfg.normal_class < 0 || label_class != cfg.normal_class;
  Tensor dS_extra;
  if (distressed && lambda > 0.0) dS_extra = Tensor::full(fwd.S.shape(), lambda);
  model.backward(dprobs, dS_extra, ctx);

  std::mt19937_64 rng(seed);
  ModelCheckResult result;
  for (nn::Param* p : model.params()) {
    const Tensor& grad = ctx.grads[static_cast<size_t>(p->id)];
    std::vector<int64_t> idx = {0, p->value.numel() - 1};
    std::uniform_int_distribution<int64_t> pick(0, p->value.numel() - 1);
    for (int i = 0; i < probes_per_tensor - 2; ++i) idx.push_back(pick(rng));
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());

    for (int64_t i : idx) {
      const double orig = p->value[i];
      const double h = 1e-5 * std::max(1.0, std::abs(orig));
      p->value[i] = orig + h;
      const double up = model_total_loss(model, patches, label_class, lambda);
      p->value[i] = orig - h;
      const double dn = model_total_loss(model, patches, label_class, lambda);
      p->value[i] = orig;
      const double fd = (up - dn) / (2.0 * h);
      const double an = grad.numel() ? grad[i] : 0.0;
      result.max_rel_err = std::max(result.max_rel_err, rel_err(fd, an));
      ++result.probes;
    }
  }
  return result;
}

}  // namespace wsplin::gradcheck
