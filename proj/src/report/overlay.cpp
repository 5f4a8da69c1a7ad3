#include "wsplin/report/overlay.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "wsplin/image.hpp"

namespace wsplin {

namespace {

const cv::Scalar kPalette[] = {
    {64, 64, 64},    // class 0 (normal) kept muted
    {60, 76, 231},   // red
    {74, 195, 139},  // green
    {219, 152, 52},  // blue
    {60, 160, 255},  // orange
    {182, 89, 155},  // purple
    {32, 165, 218},  // yellow
    {156, 188, 26},  // teal
};

cv::Scalar class_color(int c) { return kPalette[static_cast<size_t>(c) % std::size(kPalette)]; }

}  // namespace

std::string sidecar_line(const PatchBox& b, const double* confidences, int num_classes) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d\t%d\t%d\t%d\t%d\t%d\t%d\t%d\t%d\t%d\t%d", b.layer, b.col,
                b.row, b.box_in_layer.x, b.box_in_layer.y, b.box_in_layer.w, b.box_in_layer.h,
                b.box_in_source.x, b.box_in_source.y, b.box_in_source.w, b.box_in_source.h);
  std::string line = buf;
  for (int c = 0; c < num_classes; ++c) {
    std::snprintf(buf, sizeof(buf), "\t%.9g", confidences[c]);
    line += buf;
  }
  return line;
}

OverlayArtifact render_overlay(const cv::Mat& source, const PatchSet& patches, const Tensor& S,
                               const std::vector<std::string>& class_names,
                               double tag_threshold) {
  const int m = static_cast<int>(patches.boxes.size());
  const int C = static_cast<int>(class_names.size());
  if (S.ndim() != 2 || S.dim(0) != m || S.dim(1) != C) {
    throw ShapeError("confidence matrix " + S.shape_str() + " does not match " +
                     std::to_string(m) + " patches x " + std::to_string(C) + " classes");
  }

  OverlayArtifact art;
  cv::Mat base = resize_to(source, patches.source_width, patches.source_height);
  art.rendered = to_channels(base, 3).clone();

  art.sidecar_text = "# layer\tcol\trow\tlx\tly\tlw\tlh\tsx\tsy\tsw\tsh";
  for (const std::string& name : class_names) art.sidecar_text += "\t" + name;
  art.sidecar_text += "\n";
  for (int p = 0; p < m; ++p) {
    art.sidecar_text += sidecar_line(patches.boxes[static_cast<size_t>(p)],
                                     S.data() + static_cast<int64_t>(p) * C, C);
    art.sidecar_text += "\n";
  }

  // Big coarse-layer boxes first so fine-layer boxes stay visible on top.
  std::vector<int> draw_order(static_cast<size_t>(m));
  std::iota(draw_order.begin(), draw_order.end(), 0);
  std::stable_sort(draw_order.begin(), draw_order.end(), [&](int a, int b) {
    return patches.boxes[static_cast<size_t>(a)].layer > patches.boxes[static_cast<size_t>(b)].layer;
  });

  for (int p : draw_order) {
    const PatchBox& b = patches.boxes[static_cast<size_t>(p)];
    const double* row = S.data() + static_cast<int64_t>(p) * C;
    int top = 0;
    for (int c = 1; c < C; ++c) {
      if (row[c] > row[top]) top = c;
    }
    const double conf = row[top];
    const cv::Rect rect(b.box_in_source.x, b.box_in_source.y, b.box_in_source.w, b.box_in_source.h);
    const cv::Scalar color = class_color(top);

    cv::Mat roi = art.rendered(rect);
    cv::Mat tint(roi.size(), roi.type(), color);
    cv::addWeighted(tint, conf, roi, 1.0 - conf, 0.0, roi);
    cv::rectangle(art.rendered, rect, cv::Scalar(230, 230, 230), 1, cv::LINE_8);

    if (conf > tag_threshold) {
      char tag[96];
      std::snprintf(tag, sizeof(tag), "%s %.2f", class_names[static_cast<size_t>(top)].c_str(),
                    conf);
      const cv::Point anchor(rect.x + 4, rect.y + 16);
      cv::putText(art.rendered, tag, anchor, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                  cv::Scalar(0, 0, 0), 3, cv::LINE_8);
      cv::putText(art.rendered, tag, anchor, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                  cv::Scalar(255, 255, 255), 1, cv::LINE_8);
    }
  }
  return art;
}

void write_overlay(const OverlayArtifact& artifact, const std::filesystem::path& out_dir,
                   const std::string& stem) {
  std::filesystem::create_directories(out_dir);
  cv::imwrite((out_dir / (stem + "_overlay.png")).string(), artifact.rendered);
  std::ofstream f(out_dir / (stem + "_patches.tsv"), std::ios::binary);
  f << artifact.sidecar_text;
}

}  // namespace wsplin
