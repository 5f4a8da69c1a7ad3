#include "wsplin/patch_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <opencv2/imgproc.hpp>

#include "wsplin/image.hpp"

namespace wsplin {

void PyramidSpec::validate() const {
  if (layer_resolutions.empty()) {
    throw InvalidGeometryError("pyramid spec has no layers");
  }
  if (window_size <= 0 || stride <= 0) {
    throw InvalidGeometryError("window and stride must be positive");
  }
  for (const auto& [w, h] : layer_resolutions) {
    if (w < window_size || h < window_size) {
      throw InvalidGeometryError("layer resolution " + std::to_string(w) + "x" +
                                 std::to_string(h) + " smaller than window " +
                                 std::to_string(window_size));
    }
  }
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "sw") return Strategy::SW;
  if (s == "ip") return Strategy::IP;
  if (s == "ss") return Strategy::SS;
  throw InvalidConfigError("unknown strategy '" + s + "' (expected sw, ip or ss)");
}

std::string strategy_to_string(Strategy s) {
  switch (s) {
    case Strategy::SW: return "sw";
    case Strategy::IP: return "ip";
    case Strategy::SS: return "ss";
  }
  return "?";
}

std::vector<PatchBox> slide_window(int width, int height, int window, int stride) {
  if (window <= 0 || stride <= 0) {
    throw InvalidGeometryError("window and stride must be positive");
  }
  if (width < window || height < window) {
    throw InvalidGeometryError("image " + std::to_string(width) + "x" + std::to_string(height) +
                               " smaller than window " + std::to_string(window));
  }
  const int cols = (width - window) / stride + 1;
  const int rows = (height - window) / stride + 1;
  std::vector<PatchBox> boxes;
  boxes.reserve(static_cast<size_t>(cols) * rows);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      PatchBox b;
      b.layer = 0;
      b.col = c;
      b.row = r;
      b.box_in_layer = {c * stride, r * stride, window, window};
      b.box_in_source = b.box_in_layer;
      boxes.push_back(b);
    }
  }
  return boxes;
}

namespace {

Box map_to_source(const Box& in_layer, int layer_w, int layer_h, int src_w, int src_h) {
  const double sx = static_cast<double>(src_w) / layer_w;
  const double sy = static_cast<double>(src_h) / layer_h;
  Box out;
  out.x = static_cast<int>(std::llround(in_layer.x * sx));
  out.y = static_cast<int>(std::llround(in_layer.y * sy));
  out.w = static_cast<int>(std::llround(in_layer.w * sx));
  out.h = static_cast<int>(std::llround(in_layer.h * sy));
  out.x = std::clamp(out.x, 0, src_w - 1);
  out.y = std::clamp(out.y, 0, src_h - 1);
  out.w = std::min(out.w, src_w - out.x);
  out.h = std::min(out.h, src_h - out.y);
  return out;
}

}  // namespace

std::vector<PatchBox> pyramid_patches(int width, int height, const PyramidSpec& spec) {
  spec.validate();
  std::vector<PatchBox> all;
  for (size_t l = 0; l < spec.layer_resolutions.size(); ++l) {
    const auto [lw, lh] = spec.layer_resolutions[l];
    std::vector<PatchBox> layer = slide_window(lw, lh, spec.window_size, spec.stride);
    for (PatchBox& b : layer) {
      b.layer = static_cast<int>(l);
      b.box_in_source = map_to_source(b.box_in_layer, lw, lh, width, height);
      all.push_back(b);
    }
  }
  return all;
}

std::vector<int> per_layer_counts(const std::vector<int>& m_per_layer, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw InvalidConfigError("alpha must lie in (0,1], got " + std::to_string(alpha));
  }
  std::vector<int> counts;
  counts.reserve(m_per_layer.size());
  for (int m : m_per_layer) {
    if (m <= 0) throw InvalidConfigError("per-layer patch count must be positive");
    int n = static_cast<int>(std::ceil(static_cast<double>(m) * alpha));
    counts.push_back(std::clamp(n, 1, m));
  }
  return counts;
}

int64_t rect_union_area(const std::vector<Box>& rects) {
  std::vector<int64_t> xs, ys;
  xs.reserve(rects.size() * 2);
  ys.reserve(rects.size() * 2);
  for (const Box& r : rects) {
    if (r.w <= 0 || r.h <= 0) continue;
    xs.push_back(r.x);
    xs.push_back(static_cast<int64_t>(r.x) + r.w);
    ys.push_back(r.y);
    ys.push_back(static_cast<int64_t>(r.y) + r.h);
  }
  if (xs.empty()) return 0;
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());

  int64_t total = 0;
  for (size_t i = 0; i + 1 < xs.size(); ++i) {
    for (size_t j = 0; j + 1 < ys.size(); ++j) {
      const int64_t cx = xs[i];
      const int64_t cy = ys[j];
      for (const Box& r : rects) {
        if (r.w <= 0 || r.h <= 0) continue;
        if (cx >= r.x && cx + 1 <= static_cast<int64_t>(r.x) + r.w && cy >= r.y &&
            cy + 1 <= static_cast<int64_t>(r.y) + r.h) {
          total += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]);
          break;
        }
      }
    }
  }
  return total;
}

namespace {

int64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  int64_t r = 1;
  for (int i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;
    if (r < 0 || r > (int64_t(1) << 62)) return int64_t(1) << 62;  // saturate
  }
  return r;
}

// Advances a k-subset of [0,m) in lexicographic order; returns false after
// the last one.
bool next_combination(std::vector<int>& idx, int m) {
  const int k = static_cast<int>(idx.size());
  for (int i = k - 1; i >= 0; --i) {
    if (idx[static_cast<size_t>(i)] < m - (k - i)) {
      ++idx[static_cast<size_t>(i)];
      for (int j = i + 1; j < k; ++j) {
        idx[static_cast<size_t>(j)] = idx[static_cast<size_t>(j - 1)] + 1;
      }
      return true;
    }
  }
  return false;
}

}  // namespace

SamplePlan sparse_sample(const std::vector<PatchBox>& boxes, const std::vector<int>& counts,
                         int64_t max_combinations) {
  // Group local indices by layer in order of appearance.
  std::vector<std::vector<const PatchBox*>> layers;
  for (const PatchBox& b : boxes) {
    if (b.layer < 0) throw InvalidGeometryError("negative layer id");
    if (static_cast<size_t>(b.layer) >= layers.size()) layers.resize(static_cast<size_t>(b.layer) + 1);
    layers[static_cast<size_t>(b.layer)].push_back(&b);
  }
  if (layers.empty()) throw InvalidConfigError("sparse_sample: no boxes");
  if (counts.size() != layers.size()) {
    throw InvalidConfigError("counts cover " + std::to_string(counts.size()) + " layers but boxes span " +
                             std::to_string(layers.size()));
  }
  int64_t combos = 1;
  for (size_t l = 0; l < layers.size(); ++l) {
    const int m = static_cast<int>(layers[l].size());
    if (counts[l] < 1 || counts[l] > m) {
      throw InvalidConfigError("layer " + std::to_string(l) + ": count " + std::to_string(counts[l]) +
                               " outside [1," + std::to_string(m) + "]");
    }
    combos = combos * binomial(m, counts[l]);
    if (combos > max_combinations) {
      throw InfeasibleEnumerationError(
          "subset enumeration exceeds " + std::to_string(max_combinations) +
          " combinations; choose a coarser alpha so fewer subsets need scoring");
    }
  }

  const size_t L = layers.size();
  std::vector<std::vector<int>> current(L);
  for (size_t l = 0; l < L; ++l) {
    current[l].resize(static_cast<size_t>(counts[l]));
    for (int i = 0; i < counts[l]; ++i) current[l][static_cast<size_t>(i)] = i;
  }

  std::vector<Box> chosen;
  chosen.reserve(static_cast<size_t>(
      std::accumulate(counts.begin(), counts.end(), 0)));

  int64_t best_area = -1;
  std::vector<std::vector<int>> best = current;

  // Odometer over layers with layer 0 outermost: visits flat index sequences
  // in lexicographic order, so keeping only strict improvements makes the
  // first maximum the lexicographically smallest one.
  for (;;) {
    chosen.clear();
    for (size_t l = 0; l < L; ++l) {
      for (int i : current[l]) chosen.push_back(layers[l][static_cast<size_t>(i)]->box_in_source);
    }
    const int64_t area = rect_union_area(chosen);
    if (area > best_area) {
      best_area = area;
      best = current;
    }
    size_t l = L;
    bool advanced = false;
    while (l > 0) {
      --l;
      if (next_combination(current[l], static_cast<int>(layers[l].size()))) {
        advanced = true;
        break;
      }
      for (int i = 0; i < counts[l]; ++i) current[l][static_cast<size_t>(i)] = i;
    }
    if (!advanced) break;
  }
  SamplePlan plan;
  plan.per_layer_counts = counts;
  plan.chosen_indices = best;
  return plan;
}

int patch_count_for(Strategy strategy, const PyramidSpec& spec, double alpha) {
  spec.validate();
  const auto grid = [&](int w, int h) {
    return ((w - spec.window_size) / spec.stride + 1) * ((h - spec.window_size) / spec.stride + 1);
  };
  if (strategy == Strategy::SW) {
    return grid(spec.source_width(), spec.source_height());
  }
  int total = 0;
  std::vector<int> per_layer;
  for (const auto& [w, h] : spec.layer_resolutions) per_layer.push_back(grid(w, h));
  if (strategy == Strategy::IP) {
    for (int m : per_layer) total += m;
    return total;
  }
  for (int n : per_layer_counts(per_layer, alpha)) total += n;
  return total;
}

PatchSet extract_patches(const cv::Mat& image, Strategy strategy, const PyramidSpec& spec,
                         double alpha) {
  spec.validate();
  if (image.empty()) throw InvalidGeometryError("empty image");

  const int src_w = spec.source_width();
  const int src_h = spec.source_height();
  cv::Mat source = resize_to(image, src_w, src_h);

  std::vector<PatchBox> boxes;
  if (strategy == Strategy::SW) {
    boxes = slide_window(src_w, src_h, spec.window_size, spec.stride);
  } else {
    boxes = pyramid_patches(src_w, src_h, spec);
    if (strategy == Strategy::SS) {
      std::vector<int> per_layer;
      for (const auto& [w, h] : spec.layer_resolutions) {
        per_layer.push_back(((w - spec.window_size) / spec.stride + 1) *
                            ((h - spec.window_size) / spec.stride + 1));
      }
      const SamplePlan plan = sparse_sample(boxes, per_layer_counts(per_layer, alpha));
      std::vector<PatchBox> kept;
      size_t offset = 0;
      for (size_t l = 0; l < plan.chosen_indices.size(); ++l) {
        for (int i : plan.chosen_indices[l]) {
          kept.push_back(boxes[offset + static_cast<size_t>(i)]);
        }
        offset += static_cast<size_t>(per_layer[l]);
      }
      boxes = std::move(kept);
    }
  }

  const int channels = source.channels();
  const int win = spec.window_size;
  const int64_t m = static_cast<int64_t>(boxes.size());
  PatchSet set;
  set.boxes = boxes;
  set.source_width = src_w;
  set.source_height = src_h;
  set.patches = Tensor({m, channels, win, win});

  // Resize each referenced layer once.
  std::vector<cv::Mat> layer_images(spec.layer_resolutions.size());
  for (const PatchBox& b : boxes) {
    cv::Mat& li = layer_images[static_cast<size_t>(b.layer)];
    if (li.empty()) {
      const auto [lw, lh] = spec.layer_resolutions[static_cast<size_t>(b.layer)];
      li = resize_to(source, lw, lh);
    }
  }

  double* out = set.patches.data();
  const double inv = 1.0 / 255.0;
  for (int64_t p = 0; p < m; ++p) {
    const PatchBox& b = boxes[static_cast<size_t>(p)];
    const cv::Mat& li = layer_images[static_cast<size_t>(b.layer)];
    const cv::Mat roi = li(cv::Rect(b.box_in_layer.x, b.box_in_layer.y, win, win));
    for (int c = 0; c < channels; ++c) {
      for (int y = 0; y < win; ++y) {
        const uchar* row = roi.ptr<uchar>(y);
        double* dst = out + ((p * channels + c) * win + y) * win;
        for (int x = 0; x < win; ++x) {
          dst[x] = row[x * channels + c] * inv;
        }
      }
    }
  }
  return set;
}

}  // namespace wsplin
