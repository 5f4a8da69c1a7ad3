#pragma once

#include <opencv2/core.hpp>
#include <string>
#include <vector>

#include "wsplin/errors.hpp"

namespace wsplin {

// A pavement image with its one-hot category and split tag.
struct LabeledImage {
  cv::Mat pixels;  // CV_8UC1 or CV_8UC3
  int class_index = -1;
  int num_classes = 0;
  std::string split;
  std::string path;

  std::vector<double> one_hot() const {
    std::vector<double> y(static_cast<size_t>(num_classes), 0.0);
    if (class_index < 0 || class_index >= num_classes) {
      throw LabelError("class index " + std::to_string(class_index) + " outside [0," +
                       std::to_string(num_classes) + ")");
    }
    y[static_cast<size_t>(class_index)] = 1.0;
    return y;
  }
};

// Converts between 1- and 3-channel imagery so any corpus can feed any
// backbone: gray fed to a color net is replicated, color fed to a gray net
// is luma-converted.
cv::Mat to_channels(const cv::Mat& img, int channels);

// imread wrapper that throws IngestionError instead of returning empty mats.
cv::Mat load_image(const std::string& path);

// Deterministic resize: area interpolation when shrinking, bilinear when
// growing. Returns the input unchanged when dims already match.
cv::Mat resize_to(const cv::Mat& img, int width, int height);

}  // namespace wsplin
