#pragma once

#include <cstdint>
#include <opencv2/core.hpp>
#include <random>

namespace wsplin {

// Train-time augmentation: independent horizontal/vertical flips (p=0.5
// each), a quarter-turn rotation, multiplicative brightness in [0.8, 1.2].
struct AugmentParams {
  bool flip_horizontal = false;
  bool flip_vertical = false;
  int rotate_quarters = 0;  // clockwise quarter turns, 0..3
  double brightness = 1.0;

  static AugmentParams draw(std::mt19937_64& rng);
};

cv::Mat apply_augment(const cv::Mat& img, const AugmentParams& params);
cv::Mat augment(const cv::Mat& img, uint64_t seed);

}  // namespace wsplin
