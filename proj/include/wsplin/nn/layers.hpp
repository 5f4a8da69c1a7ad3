#pragma once

#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "wsplin/tensor.hpp"

namespace wsplin::nn {

enum class Mode { kTrain, kEval };

struct Param {
  std::string name;
  Tensor value;
  int id = -1;
};

// Per-pass state: activation caches (by layer slot) and gradient accumulators
// (by parameter id). Every concurrent forward/backward owns its own Ctx, so
// layers stay read-only during data-parallel sections and gradient reduction
// order is entirely up to the caller.
struct Ctx {
  Mode mode = Mode::kEval;
  std::mt19937_64 rng{0};
  std::vector<std::vector<Tensor>> saved;
  std::vector<Tensor> grads;

  explicit Ctx(int n_slots = 0, int n_params = 0)
      : saved(static_cast<size_t>(n_slots)), grads(static_cast<size_t>(n_params)) {}

  std::vector<Tensor>& slot(int s) { return saved[static_cast<size_t>(s)]; }

  Tensor& grad_for(const Param& p) {
    Tensor& g = grads[static_cast<size_t>(p.id)];
    if (g.numel() != p.value.numel()) g = Tensor::zeros(p.value.shape());
    return g;
  }
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, Ctx& ctx) = 0;
  virtual Tensor backward(const Tensor& gy, Ctx& ctx) = 0;
  virtual void collect_params(std::vector<Param*>&) {}
  virtual void collect_state(const std::string& prefix,
                             std::vector<std::pair<std::string, Tensor*>>& out);
  virtual void assign_slots(int& next) { slot_ = next++; }
  virtual void init(std::mt19937_64&) {}
  // True when training-mode forward mutates layer state (batch-norm running
  // stats); the trainer serializes such models instead of fanning out.
  virtual bool has_batch_state() const { return false; }

 protected:
  int slot_ = -1;
};

class Affine : public Layer {
 public:
  Affine(int64_t in, int64_t out);
  Tensor forward(const Tensor& x, Ctx& ctx) override;
  Tensor backward(const Tensor& gy, Ctx& ctx) override;
  void collect_params(std::vector<Param*>& out) override;
  void init(std::mt19937_64& rng) override;

  Param weight;  // out x in
  Param bias;    // out

 private:
  int64_t in_, out_;
};

class Conv2d : public Layer {
 public:
  // use_bias is off for convolutions feeding a batch norm, where a bias is
  // cancelled by the mean subtraction.
  Conv2d(int cin, int cout, int kernel, int stride, int pad, bool use_bias = true);
  Tensor forward(const Tensor& x, Ctx& ctx) override;
  Tensor backward(const Tensor& gy, Ctx& ctx) override;
  void collect_params(std::vector<Param*>& out) override;
  void init(std::mt19937_64& rng) override;

  Param weight;  // cout x cin x k x k
  Param bias;    // cout, empty when use_bias is off

 private:
  int cin_, cout_, k_, stride_, pad_;
  bool use_bias_;
};

class DepthwiseConv2d : public Layer {
 public:
  DepthwiseConv2d(int channels, int kernel, int stride, int pad, bool use_bias = true);
  Tensor forward(const Tensor& x, Ctx& ctx) override;
  Tensor backward(const Tensor& gy, Ctx& ctx) override;
  void collect_params(std::vector<Param*>& out) override;
  void init(std::mt19937_64& rng) override;

  Param weight;  // c x k x k
  Param bias;    // c, empty when use_bias is off

 private:
  int c_, k_, stride_, pad_;
  bool use_bias_;
};

class BatchNorm2d : public Layer {
 public:
  explicit BatchNorm2d(int channels, double eps = 1e-3, double momentum = 0.1);
  Tensor forward(const Tensor& x, Ctx& ctx) override;
  Tensor backward(const Tensor& gy, Ctx& ctx) override;
  void collect_params(std::vector<Param*>& out) override;
  void collect_state(const std::string& prefix,
                     std::vector<std::pair<std::string, Tensor*>>& out) override;
  void init(std::mt19937_64& rng) override;
  bool has_batch_state() const override { return true; }

  Param gamma;
  Param beta;
  Tensor running_mean;
  Tensor running_var;

 private:
  int c_;
  double eps_, momentum_;
};

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& x, Ctx& ctx) override;
  Tensor backward(const Tensor& gy, Ctx& ctx) override;
};

class Sigmoid : public Layer {
 public:
  Tensor forward(const Tensor& x, Ctx& ctx) override;
  Tensor backward(const Tensor& gy, Ctx& ctx) override;
};

class Swish : public Layer {
 public:
  Tensor forward(const Tensor& x, Ctx& ctx) override;
  Tensor backward(const Tensor& gy, Ctx& ctx) override;
};

class Dropout : public Layer {
 public:
  explicit Dropout(double rate);
  Tensor forward(const Tensor& x, Ctx& ctx) override;
  Tensor backward(const Tensor& gy, Ctx& ctx) override;

 private:
  double rate_;
};

class GlobalAvgPool : public Layer {
 public:
  Tensor forward(const Tensor& x, Ctx& ctx) override;
  Tensor backward(const Tensor& gy, Ctx& ctx) override;
};

class Softmax : public Layer {
 public:
  Tensor forward(const Tensor& x, Ctx& ctx) override;
  Tensor backward(const Tensor& gy, Ctx& ctx) override;
};

class SqueezeExcite : public Layer {
 public:
  SqueezeExcite(int channels, int reduced);
  Tensor forward(const Tensor& x, Ctx& ctx) override;
  Tensor backward(const Tensor& gy, Ctx& ctx) override;
  void collect_params(std::vector<Param*>& out) override;
  void init(std::mt19937_64& rng) override;

  Param w_reduce, b_reduce;  // reduced x c, reduced
  Param w_expand, b_expand;  // c x reduced, c

 private:
  int c_, reduced_;
};

class Sequential : public Layer {
 public:
  template <class T, class... Args>
  T& add(Args&&... args) {
    auto layer = std::make_unique<T>(std::forward<Args>(args)...);
    T& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  void add_layer(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  Tensor forward(const Tensor& x, Ctx& ctx) override;
  Tensor backward(const Tensor& gy, Ctx& ctx) override;
  void collect_params(std::vector<Param*>& out) override;
  void collect_state(const std::string& prefix,
                     std::vector<std::pair<std::string, Tensor*>>& out) override;
  void assign_slots(int& next) override;
  void init(std::mt19937_64& rng) override;
  bool has_batch_state() const override;

  size_t size() const { return layers_.size(); }
  Layer& at(size_t i) { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Inverted residual block: optional 1x1 expansion, depthwise conv, squeeze
// excitation, 1x1 projection, identity skip when shapes allow.
class MBConv : public Layer {
 public:
  MBConv(int cin, int cout, int kernel, int stride, int expand_ratio, double se_ratio = 0.25);
  Tensor forward(const Tensor& x, Ctx& ctx) override;
  Tensor backward(const Tensor& gy, Ctx& ctx) override;
  void collect_params(std::vector<Param*>& out) override;
  void collect_state(const std::string& prefix,
                     std::vector<std::pair<std::string, Tensor*>>& out) override;
  void assign_slots(int& next) override;
  void init(std::mt19937_64& rng) override;
  bool has_batch_state() const override { return true; }

 private:
  Sequential body_;
  bool skip_;
};

}  // namespace wsplin::nn
