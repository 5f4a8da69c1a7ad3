#pragma once

#include <memory>
#include <vector>

#include "wsplin/nn/layers.hpp"

namespace wsplin::nn {

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  // grads is indexed by param id, aligned with the params the optimizer was
  // built over. Missing (empty) grads are treated as zero.
  virtual void step(double lr, const std::vector<Tensor>& grads) = 0;
};

// Adaptive-moment estimation with bias correction.
class Adam : public Optimizer {
 public:
  explicit Adam(std::vector<Param*> params, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(double lr, const std::vector<Tensor>& grads) override;

 private:
  std::vector<Param*> params_;
  std::vector<Tensor> m_, v_;
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

// Lookahead wrapper: every k inner steps the slow weights move toward the
// fast weights by alpha, and the fast weights reset to the slow ones.
class Lookahead : public Optimizer {
 public:
  Lookahead(std::unique_ptr<Optimizer> inner, std::vector<Param*> params, int k = 6,
            double alpha = 0.5);
  void step(double lr, const std::vector<Tensor>& grads) override;

 private:
  std::unique_ptr<Optimizer> inner_;
  std::vector<Param*> params_;
  std::vector<Tensor> slow_;
  int k_;
  double alpha_;
  int64_t t_ = 0;
};

}  // namespace wsplin::nn
