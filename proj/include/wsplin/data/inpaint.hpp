#pragma once

#include <opencv2/core.hpp>

#include "wsplin/errors.hpp"

namespace wsplin {

struct MaskedCrackImage {
  cv::Mat image;  // CV_8UC1 or CV_8UC3
  cv::Mat mask;   // CV_8UC1, nonzero marks diseased pixels
};

// Replaces every diseased pixel with the value of its nearest unmasked pixel
// (exact Euclidean distance; ties resolve to the smallest row, then column).
// Unmasked pixels are untouched, so the operation is idempotent for a fixed
// mask. A mask covering the entire image is a SynthesisError.
cv::Mat synthesize_normal(const MaskedCrackImage& crack);

}  // namespace wsplin
