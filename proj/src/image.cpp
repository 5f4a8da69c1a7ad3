#include "wsplin/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace wsplin {

cv::Mat to_channels(const cv::Mat& img, int channels) {
  if (channels != 1 && channels != 3) {
    throw InvalidConfigError("unsupported channel count " + std::to_string(channels));
  }
  if (img.channels() == channels) return img;
  cv::Mat out;
  if (channels == 1) {
    cv::cvtColor(img, out, cv::COLOR_BGR2GRAY);
  } else {
    cv::cvtColor(img, out, cv::COLOR_GRAY2BGR);
  }
  return out;
}

cv::Mat load_image(const std::string& path) {
  cv::Mat img = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (img.empty()) {
    throw IngestionError("cannot read image '" + path + "'");
  }
  if (img.channels() == 4) {
    cv::cvtColor(img, img, cv::COLOR_BGRA2BGR);
  }
  if (img.depth() != CV_8U) {
    cv::Mat tmp;
    img.convertTo(tmp, CV_8U);
    img = tmp;
  }
  return img;
}

cv::Mat resize_to(const cv::Mat& img, int width, int height) {
  if (img.cols == width && img.rows == height) return img;
  cv::Mat out;
  const bool shrinking = static_cast<int64_t>(width) * height <
                         static_cast<int64_t>(img.cols) * img.rows;
  cv::resize(img, out, cv::Size(width, height), 0, 0,
             shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  return out;
}

}  // namespace wsplin
