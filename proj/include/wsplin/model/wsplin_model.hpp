#pragma once

#include <filesystem>
#include <memory>
#include <opencv2/core.hpp>
#include <string>
#include <vector>

#include <json.hpp>

#include "wsplin/model/backbone.hpp"
#include "wsplin/nn/layers.hpp"
#include "wsplin/patch_geometry.hpp"

namespace wsplin {

struct PipelineConfig {
  Strategy strategy = Strategy::IP;
  double alpha = 0.25;
  double lambda = 1e-3;
  int num_classes = 2;
  int normal_class = 0;
  PyramidSpec pyramid = PyramidSpec::defaults();
  BackboneSpec backbone;
  double cdn_dropout = 0.5;
  std::vector<std::string> class_names;

  void validate() const;
  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
  std::string canonical_text() const;
};

// PLIN + squash + CDN as one trainable unit. One image corresponds to one
// m x C confidence matrix; batches are handled by the caller, one Ctx per
// image, so eval-mode inference can fan out over a read-only model.
class WsplinModel {
 public:
  explicit WsplinModel(PipelineConfig cfg, uint64_t init_seed = 0);

  const PipelineConfig& config() const { return cfg_; }
  int patch_count() const { return m_; }
  int num_params() const { return static_cast<int>(params_.size()); }

  nn::Ctx make_ctx(nn::Mode mode, uint64_t rng_seed = 0) const;

  // Patches -> squashed per-patch confidences in (0,1), shape [m, C].
  Tensor plin_forward(const Tensor& patches, nn::Ctx& ctx);
  // Confidence matrix -> probability vector, shape [1, C].
  Tensor cdn_forward(const Tensor& S, nn::Ctx& ctx);

  struct ForwardResult {
    Tensor S;      // m x C
    Tensor probs;  // 1 x C
  };
  ForwardResult forward(const Tensor& patches, nn::Ctx& ctx);

  // dprobs: gradient wrt the probability vector; dS_extra: additional
  // gradient injected directly on S (the sparsity path), may be empty.
  void backward(const Tensor& dprobs, const Tensor& dS_extra, nn::Ctx& ctx);

  struct Prediction {
    int class_index = 0;
    std::vector<double> probabilities;
    Tensor S;
    PatchSet patches;
  };
  // Full-image path: channel-adapt, extract patches, eval-mode forward,
  // argmax with ties resolved to the lowest class index.
  Prediction predict(const cv::Mat& image);

  std::vector<nn::Param*>& params() { return params_; }
  std::vector<std::pair<std::string, Tensor*>> state();
  nn::Sequential& backbone() { return *backbone_; }
  nn::Sequential& cdn() { return *cdn_; }
  bool has_batch_state() const { return backbone_->has_batch_state(); }

  void save_checkpoint(const std::filesystem::path& path);
  static std::unique_ptr<WsplinModel> load_checkpoint(const std::filesystem::path& path);

 private:
  PipelineConfig cfg_;
  int m_ = 0;
  std::unique_ptr<nn::Sequential> backbone_;
  nn::Sigmoid squash_;
  std::unique_ptr<nn::Sequential> cdn_;
  std::vector<nn::Param*> params_;
  int n_slots_ = 0;
};

// Reads a tensor-block file (the checkpoint payload format) and fills the
// given named tensors; unknown or missing names raise CheckpointError.
void load_tensor_blocks(const std::filesystem::path& path,
                        std::vector<std::pair<std::string, Tensor*>> state);

}  // namespace wsplin
