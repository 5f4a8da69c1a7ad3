#pragma once

#include <cstdint>
#include <opencv2/core.hpp>
#include <string>
#include <utility>
#include <vector>

#include "wsplin/errors.hpp"
#include "wsplin/tensor.hpp"

namespace wsplin {

struct Box {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  int64_t area() const { return static_cast<int64_t>(w) * h; }
  bool operator==(const Box&) const = default;
};

// One window of the patch grid. box_in_layer is expressed in the resized
// layer's pixels, box_in_source in the coordinates of the layer-0 image.
struct PatchBox {
  int layer = 0;
  int col = 0;
  int row = 0;
  Box box_in_layer;
  Box box_in_source;

  bool operator==(const PatchBox&) const = default;
};

struct PyramidSpec {
  std::vector<std::pair<int, int>> layer_resolutions;  // (width, height), layer 0 first
  int window_size = 300;
  int stride = 300;

  static PyramidSpec defaults() {
    PyramidSpec s;
    s.layer_resolutions = {{1200, 900}, {600, 600}, {300, 300}};
    s.window_size = 300;
    s.stride = 300;
    return s;
  }

  // Scaled-down geometry with the same 12/4/1 patch structure; used by the
  // fast test suites.
  static PyramidSpec mini() {
    PyramidSpec s;
    s.layer_resolutions = {{160, 120}, {80, 80}, {40, 40}};
    s.window_size = 40;
    s.stride = 40;
    return s;
  }

  int source_width() const { return layer_resolutions.at(0).first; }
  int source_height() const { return layer_resolutions.at(0).second; }
  void validate() const;
};

// The chosen per-layer index subsets of the coverage-maximizing sampler.
struct SamplePlan {
  std::vector<int> per_layer_counts;
  std::vector<std::vector<int>> chosen_indices;  // per layer, ascending local indices
  double alpha = 1.0;

  bool operator==(const SamplePlan&) const = default;
};

enum class Strategy { SW, IP, SS };

Strategy strategy_from_string(const std::string& s);
std::string strategy_to_string(Strategy s);

// Non-overlapping row-major window grid; trailing margins smaller than the
// window are discarded.
std::vector<PatchBox> slide_window(int width, int height, int window, int stride);

// Grid of every pyramid layer, layer ids ascending, each box mapped back to
// source coordinates by per-axis scaling.
std::vector<PatchBox> pyramid_patches(int width, int height, const PyramidSpec& spec);

// n_l = ceil(m_l * alpha), clamped to [1, m_l].
std::vector<int> per_layer_counts(const std::vector<int>& m_per_layer, double alpha);

// Exact area of the union of axis-aligned rectangles (coordinate compression).
int64_t rect_union_area(const std::vector<Box>& rects);

// Exhaustive search over per-layer index subsets of the given sizes for the
// combination maximizing union coverage in source coordinates. Ties resolve
// to the lexicographically smallest concatenated index sequence.
SamplePlan sparse_sample(const std::vector<PatchBox>& boxes, const std::vector<int>& counts,
                         int64_t max_combinations = 1000000);

struct PatchSet {
  std::vector<PatchBox> boxes;
  Tensor patches;  // m x channels x window x window, values in [0,1]
  int source_width = 0;
  int source_height = 0;
};

// Number of patches a strategy yields under a spec (the m of the model).
int patch_count_for(Strategy strategy, const PyramidSpec& spec, double alpha);

// Resizes the image to layer 0 if needed, builds the strategy's boxes, crops
// each window from its resized layer and stacks them in box order.
PatchSet extract_patches(const cv::Mat& image, Strategy strategy, const PyramidSpec& spec,
                         double alpha);

}  // namespace wsplin
