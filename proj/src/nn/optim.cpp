#include "wsplin/nn/optim.hpp"

#include <cmath>

namespace wsplin::nn {

Adam::Adam(std::vector<Param*> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Param* p : params_) {
    m_.push_back(Tensor::zeros(p->value.shape()));
    v_.push_back(Tensor::zeros(p->value.shape()));
  }
}

void Adam::step(double lr, const std::vector<Tensor>& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Param* p = params_[i];
    const size_t id = static_cast<size_t>(p->id);
    if (id >= grads.size() || grads[id].numel() == 0) continue;
    const Tensor& g = grads[id];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (int64_t j = 0; j < g.numel(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p->value[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

Lookahead::Lookahead(std::unique_ptr<Optimizer> inner, std::vector<Param*> params, int k,
                     double alpha)
    : inner_(std::move(inner)), params_(std::move(params)), k_(k), alpha_(alpha) {
  slow_.reserve(params_.size());
  for (Param* p : params_) slow_.push_back(p->value);
}

void Lookahead::step(double lr, const std::vector<Tensor>& grads) {
  inner_->step(lr, grads);
  if (++t_ % k_ != 0) return;
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& slow = slow_[i];
    Tensor& fast = params_[i]->value;
    for (int64_t j = 0; j < slow.numel(); ++j) {
      slow[j] += alpha_ * (fast[j] - slow[j]);
      fast[j] = slow[j];
    }
  }
}

}  // namespace wsplin::nn
