#include "wsplin/data/inpaint.hpp"

#include <algorithm>
#include <vector>

namespace wsplin {

namespace {

struct Offset {
  int64_t d2;
  int dy;
  int dx;
};

// All offsets with 0 < dy^2+dx^2 <= radius^2, ordered by (distance, dy, dx).
// The signed (dy, dx) order realizes the smallest-row-then-column rule on
// absolute coordinates.
std::vector<Offset> offsets_up_to(int radius) {
  std::vector<Offset> offs;
  const int64_t r2 = static_cast<int64_t>(radius) * radius;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      const int64_t d2 = static_cast<int64_t>(dy) * dy + static_cast<int64_t>(dx) * dx;
      if (d2 == 0 || d2 > r2) continue;
      offs.push_back({d2, dy, dx});
    }
  }
  std::sort(offs.begin(), offs.end(), [](const Offset& a, const Offset& b) {
    if (a.d2 != b.d2) return a.d2 < b.d2;
    if (a.dy != b.dy) return a.dy < b.dy;
    return a.dx < b.dx;
  });
  return offs;
}

}  // namespace

cv::Mat synthesize_normal(const MaskedCrackImage& crack) {
  const cv::Mat& img = crack.image;
  const cv::Mat& mask = crack.mask;
  if (img.empty() || mask.empty() || img.size() != mask.size() || mask.type() != CV_8UC1) {
    throw SynthesisError("image and CV_8UC1 mask of equal size required");
  }
  const int h = img.rows, w = img.cols;
  if (cv::countNonZero(mask) == h * w) {
    throw SynthesisError("mask covers the entire image; nothing to sample from");
  }

  cv::Mat out = img.clone();
  const int max_radius = 2 * std::max(h, w);
  int radius = 8;
  std::vector<Offset> offs = offsets_up_to(radius);

  const int ch = img.channels();
  for (int y = 0; y < h; ++y) {
    const uchar* mrow = mask.ptr<uchar>(y);
    for (int x = 0; x < w; ++x) {
      if (!mrow[x]) continue;
      bool found = false;
      while (!found) {
        for (const Offset& o : offs) {
          const int ny = y + o.dy;
          const int nx = x + o.dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          if (mask.at<uchar>(ny, nx)) continue;
          const uchar* src = img.ptr<uchar>(ny) + static_cast<size_t>(nx) * ch;
          uchar* dst = out.ptr<uchar>(y) + static_cast<size_t>(x) * ch;
          std::copy(src, src + ch, dst);
          found = true;
          break;
        }
        if (!found) {
          if (radius >= max_radius) {
            throw SynthesisError("no unmasked neighbor found");
          }
          radius = std::min(radius * 2, max_radius);
          offs = offsets_up_to(radius);
        }
      }
    }
  }
  return out;
}

}  // namespace wsplin
