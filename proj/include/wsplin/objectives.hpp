#pragma once

#include <vector>

#include "wsplin/tensor.hpp"

namespace wsplin {

struct LossBreakdown {
  double classification = 0.0;
  double sparsity = 0.0;
  double total = 0.0;
  double lambda = 0.0;
};

// Probabilities are clamped at this floor before the log.
inline constexpr double kProbFloor = 1e-12;

// Mean cross-entropy, -(1/n) sum_i sum_j y_ij log p_ij.
// `predictions` and `labels` are n x C; every label row must be one-hot.
double classification_loss(const Tensor& predictions, const Tensor& labels);

// d classification_loss / d predictions, same shape as predictions.
Tensor classification_loss_grad(const Tensor& predictions, const Tensor& labels);

// Entrywise L1 of the confidence matrices of distressed samples; samples
// labeled with the normal class contribute exactly zero. Unnormalized sum, so
// the published lambda transfers unchanged. A negative normal_class means the
// label space has no normal class and every sample counts as distressed.
double sparsity_loss(const std::vector<Tensor>& S_batch, const Tensor& labels, int normal_class);

// d sparsity_loss / d S_i per sample: all-ones for distressed samples (S is
// nonnegative), all-zeros for normal ones.
std::vector<Tensor> sparsity_loss_grad(const std::vector<Tensor>& S_batch, const Tensor& labels,
                                       int normal_class);

// total = classification + lambda * sparsity, in this exact arithmetic.
LossBreakdown total_loss(const Tensor& predictions, const Tensor& labels,
                         const std::vector<Tensor>& S_batch, double lambda, int normal_class);

// Index of the single 1.0 in a one-hot row; throws LabelError otherwise.
int one_hot_index(const Tensor& labels, int64_t row);

}  // namespace wsplin
