#include "wsplin/train/augment.hpp"

#include <opencv2/imgproc.hpp>

namespace wsplin {

AugmentParams AugmentParams::draw(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  AugmentParams p;
  p.flip_horizontal = u(rng) < 0.5;
  p.flip_vertical = u(rng) < 0.5;
  p.rotate_quarters = std::uniform_int_distribution<int>(0, 3)(rng);
  p.brightness = std::uniform_real_distribution<double>(0.8, 1.2)(rng);
  return p;
}

cv::Mat apply_augment(const cv::Mat& img, const AugmentParams& params) {
  cv::Mat out = img;
  if (params.flip_horizontal) {
    cv::Mat t;
    cv::flip(out, t, 1);
    out = t;
  }
  if (params.flip_vertical) {
    cv::Mat t;
    cv::flip(out, t, 0);
    out = t;
  }
  switch (params.rotate_quarters & 3) {
    case 1: {
      cv::Mat t;
      cv::rotate(out, t, cv::ROTATE_90_CLOCKWISE);
      out = t;
      break;
    }
    case 2: {
      cv::Mat t;
      cv::rotate(out, t, cv::ROTATE_180);
      out = t;
      break;
    }
    case 3: {
      cv::Mat t;
      cv::rotate(out, t, cv::ROTATE_90_COUNTERCLOCKWISE);
      out = t;
      break;
    }
    default: break;
  }
  if (params.brightness != 1.0) {
    cv::Mat t;
    out.convertTo(t, -1, params.brightness, 0.0);
    out = t;
  } else if (out.data == img.data) {
    out = img.clone();
  }
  return out;
}

cv::Mat augment(const cv::Mat& img, uint64_t seed) {
  std::mt19937_64 rng(seed);
  return apply_augment(img, AugmentParams::draw(rng));
}

}  // namespace wsplin
