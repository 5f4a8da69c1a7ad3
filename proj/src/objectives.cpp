#include "wsplin/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace wsplin {

int one_hot_index(const Tensor& labels, int64_t row) {
  const int64_t C = labels.dim(1);
  int idx = -1;
  for (int64_t j = 0; j < C; ++j) {
    const double v = labels.at(row, j);
    if (v == 1.0) {
      if (idx >= 0) throw LabelError("label row has multiple nonzero entries");
      idx = static_cast<int>(j);
    } else if (v != 0.0) {
      throw LabelError("label row is not one-hot");
    }
  }
  if (idx < 0) throw LabelError("label row has no nonzero entry");
  return idx;
}

double classification_loss(const Tensor& predictions, const Tensor& labels) {
  if (predictions.ndim() != 2 || labels.ndim() != 2 ||
      predictions.dim(0) != labels.dim(0) || predictions.dim(1) != labels.dim(1)) {
    throw ShapeError("predictions " + predictions.shape_str() + " vs labels " + labels.shape_str());
  }
  const int64_t n = predictions.dim(0);
  if (n == 0) throw ShapeError("empty batch");
  double sum = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const int j = one_hot_index(labels, i);
    sum += std::log(std::max(predictions.at(i, j), kProbFloor));
  }
  return -sum / static_cast<double>(n);
}

Tensor classification_loss_grad(const Tensor& predictions, const Tensor& labels) {
  const int64_t n = predictions.dim(0);
  Tensor g = Tensor::zeros(predictions.shape());
  for (int64_t i = 0; i < n; ++i) {
    const int j = one_hot_index(labels, i);
    const double p = predictions.at(i, j);
    if (p > kProbFloor) {
      g.at(i, j) = -1.0 / (p * static_cast<double>(n));
    }
  }
  return g;
}

double sparsity_loss(const std::vector<Tensor>& S_batch, const Tensor& labels, int normal_class) {
  if (static_cast<int64_t>(S_batch.size()) != labels.dim(0)) {
    throw ShapeError("S batch size vs labels mismatch");
  }
  if (normal_class >= labels.dim(1)) {
    throw InvalidConfigError("normal_class outside label space");
  }
  double sum = 0.0;
  for (size_t i = 0; i < S_batch.size(); ++i) {
    if (one_hot_index(labels, static_cast<int64_t>(i)) == normal_class) continue;
    const Tensor& S = S_batch[i];
    for (int64_t k = 0; k < S.numel(); ++k) sum += std::abs(S[k]);
  }
  return sum;
}

std::vector<Tensor> sparsity_loss_grad(const std::vector<Tensor>& S_batch, const Tensor& labels,
                                       int normal_class) {
  std::vector<Tensor> grads;
  grads.reserve(S_batch.size());
  for (size_t i = 0; i < S_batch.size(); ++i) {
    const bool distressed = one_hot_index(labels, static_cast<int64_t>(i)) != normal_class;
    grads.push_back(distressed ? Tensor::full(S_batch[i].shape(), 1.0)
                               : Tensor::zeros(S_batch[i].shape()));
  }
  return grads;
}

LossBreakdown total_loss(const Tensor& predictions, const Tensor& labels,
                         const std::vector<Tensor>& S_batch, double lambda, int normal_class) {
  if (lambda < 0.0) throw InvalidConfigError("lambda must be nonnegative");
  LossBreakdown out;
  out.lambda = lambda;
  out.classification = classification_loss(predictions, labels);
  out.sparsity = sparsity_loss(S_batch, labels, normal_class);
  out.total = out.classification + lambda * out.sparsity;
  return out;
}

}  // namespace wsplin
