#include "wsplin/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "wsplin/rng.hpp"

namespace wsplin {

namespace {

using Rng = std::mt19937_64;

double uni(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uni_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

cv::Mat make_background(Rng& rng, int w, int h) {
  const int base = uni_int(rng, 112, 148);

  // Coarse tonal variation: a small node grid upsampled bilinearly.
  const int nx = 17, ny = 13;
  cv::Mat nodes(ny, nx, CV_32F);
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) nodes.at<float>(y, x) = static_cast<float>(uni(rng, -16.0, 16.0));
  }
  cv::Mat coarse;
  cv::resize(nodes, coarse, cv::Size(w, h), 0, 0, cv::INTER_LINEAR);

  // Grain: white noise smoothed into a locally correlated texture, so that
  // neighbor-fill erasure remains faithful to the surrounding surface.
  cv::Mat grain(h, w, CV_32F);
  std::uniform_real_distribution<double> fine(-12.0, 12.0);
  for (int y = 0; y < h; ++y) {
    float* grow = grain.ptr<float>(y);
    for (int x = 0; x < w; ++x) grow[x] = static_cast<float>(fine(rng));
  }
  cv::GaussianBlur(grain, grain, cv::Size(9, 9), 2.0);

  cv::Mat img(h, w, CV_8UC1);
  for (int y = 0; y < h; ++y) {
    const float* crow = coarse.ptr<float>(y);
    const float* grow = grain.ptr<float>(y);
    uchar* row = img.ptr<uchar>(y);
    for (int x = 0; x < w; ++x) {
      row[x] = cv::saturate_cast<uchar>(base + static_cast<int>(crow[x] + 4.0f * grow[x]));
    }
  }
  return img;
}

struct MotifScale {
  double sx, sy, s;
};

cv::Point jitter_step(Rng& rng, cv::Point p, double dx, double dy, double lateral) {
  return {p.x + static_cast<int>(dx + uni(rng, -lateral, lateral)),
          p.y + static_cast<int>(dy + uni(rng, -lateral, lateral))};
}

std::vector<cv::Point> draw_jagged_line(Rng& rng, cv::Mat& mask, cv::Point start, double dir_x,
                                        double dir_y, double length, int thickness,
                                        double lateral) {
  std::vector<cv::Point> vertices{start};
  cv::Point p = start;
  double travelled = 0.0;
  const double step = std::max(8.0, length / 14.0);
  while (travelled < length) {
    const cv::Point q = jitter_step(rng, p, dir_x * step, dir_y * step, lateral);
    cv::line(mask, p, q, cv::Scalar(255), thickness, cv::LINE_8);
    travelled += step;
    p = q;
    vertices.push_back(p);
  }
  return vertices;
}

enum class Motif { Longitudinal, Transverse, Alligator, Mending, Raveling, Pouring, Massive };

Motif motif_for(const std::string& name, int fallback_index) {
  if (name == "longitudinal") return Motif::Longitudinal;
  if (name == "transverse") return Motif::Transverse;
  if (name == "alligator") return Motif::Alligator;
  if (name == "mending") return Motif::Mending;
  if (name == "raveling") return Motif::Raveling;
  if (name == "pouring") return Motif::Pouring;
  if (name == "massive") return Motif::Massive;
  return static_cast<Motif>(fallback_index % 7);
}

struct MotifResult {
  cv::Mat mask;     // CV_8UC1, 255 on distress pixels
  double darkness;  // subtractive depth for crack-like motifs; 0 for mending
  bool is_mending = false;
  int mending_shift = 0;
};

MotifResult draw_motif(Rng& rng, Motif motif, int w, int h, double shrink) {
  const MotifScale sc{w / 1200.0 * shrink, h / 900.0 * shrink,
                      std::min(w / 1200.0, h / 900.0) * shrink};
  MotifResult r;
  r.mask = cv::Mat::zeros(h, w, CV_8UC1);
  const auto th = [&](double t) { return std::max(2, static_cast<int>(t * sc.s)); };

  // Rotation and flip augmentations must not alias one class into another,
  // so classes are told apart by structure (plain / feathered / lattice /
  // filled / speckle / dark band / branched trunk) rather than orientation
  // alone.
  switch (motif) {
    case Motif::Longitudinal: {
      const int x0 = static_cast<int>(uni(rng, 0.15, 0.85) * w);
      const int y0 = static_cast<int>(uni(rng, 0.05, 0.20) * h);
      const double len = uni(rng, 0.55, 0.85) * h;
      draw_jagged_line(rng, r.mask, {x0, y0}, 0.0, 1.0, len, th(uni(rng, 8, 14)), 18.0 * sc.s);
      r.darkness = uni(rng, 45, 85);
      break;
    }
    case Motif::Transverse: {
      const int x0 = static_cast<int>(uni(rng, 0.05, 0.20) * w);
      const int y0 = static_cast<int>(uni(rng, 0.15, 0.85) * h);
      const double len = uni(rng, 0.55, 0.85) * w;
      const int trunk = th(uni(rng, 8, 14));
      const auto vertices =
          draw_jagged_line(rng, r.mask, {x0, y0}, 1.0, 0.0, len, trunk, 18.0 * sc.s);
      // Short perpendicular offshoots along the trunk.
      const int n_off = uni_int(rng, 5, 8);
      for (int i = 0; i < n_off; ++i) {
        const cv::Point at = vertices[static_cast<size_t>(
            uni_int(rng, 1, static_cast<int>(vertices.size()) - 1))];
        const double side = uni(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
        draw_jagged_line(rng, r.mask, at, 0.0, side, uni(rng, 40, 80) * sc.s,
                         std::max(2, trunk * 2 / 3), 8.0 * sc.s);
      }
      r.darkness = uni(rng, 45, 85);
      break;
    }
    case Motif::Alligator: {
      const int cx = static_cast<int>(uni(rng, 0.30, 0.70) * w);
      const int cy = static_cast<int>(uni(rng, 0.30, 0.70) * h);
      const int rw = static_cast<int>(uni(rng, 0.14, 0.20) * w);
      const int rh = static_cast<int>(uni(rng, 0.14, 0.20) * h);
      const int n_v = uni_int(rng, 3, 4);
      const int n_h = uni_int(rng, 3, 4);
      for (int i = 0; i < n_v; ++i) {
        const int x = cx - rw + static_cast<int>((2.0 * rw * (i + 0.5)) / n_v);
        draw_jagged_line(rng, r.mask, {x, cy - rh}, 0.0, 1.0, 2.0 * rh, th(uni(rng, 6, 9)),
                         10.0 * sc.s);
      }
      for (int i = 0; i < n_h; ++i) {
        const int y = cy - rh + static_cast<int>((2.0 * rh * (i + 0.5)) / n_h);
        draw_jagged_line(rng, r.mask, {cx - rw, y}, 1.0, 0.0, 2.0 * rw, th(uni(rng, 6, 9)),
                         10.0 * sc.s);
      }
      r.darkness = uni(rng, 45, 80);
      break;
    }
    case Motif::Mending: {
      const int cx = static_cast<int>(uni(rng, 0.30, 0.70) * w);
      const int cy = static_cast<int>(uni(rng, 0.30, 0.70) * h);
      const float rw = static_cast<float>(uni(rng, 220, 300) * sc.sx);
      const float rh = static_cast<float>(uni(rng, 160, 240) * sc.sy);
      const float angle = static_cast<float>(uni(rng, 0.0, 180.0));
      cv::RotatedRect rect(cv::Point2f(static_cast<float>(cx), static_cast<float>(cy)),
                           cv::Size2f(rw, rh), angle);
      cv::Point2f pts[4];
      rect.points(pts);
      cv::Point poly[4];
      for (int i = 0; i < 4; ++i) poly[i] = pts[i];
      cv::fillConvexPoly(r.mask, poly, 4, cv::Scalar(255), cv::LINE_8);
      r.is_mending = true;
      const int sign = uni(rng, 0.0, 1.0) < 0.5 ? -1 : 1;
      r.mending_shift = sign * uni_int(rng, 22, 38);
      break;
    }
    case Motif::Raveling: {
      const int cx = static_cast<int>(uni(rng, 0.30, 0.70) * w);
      const int cy = static_cast<int>(uni(rng, 0.30, 0.70) * h);
      const double ax = uni(rng, 160, 260) * sc.sx;
      const double ay = uni(rng, 120, 220) * sc.sy;
      const int dots = uni_int(rng, 500, 900);
      for (int i = 0; i < dots; ++i) {
        const double ang = uni(rng, 0.0, 2.0 * CV_PI);
        const double rad = std::sqrt(uni(rng, 0.0, 1.0));
        const int x = cx + static_cast<int>(std::cos(ang) * rad * ax);
        const int y = cy + static_cast<int>(std::sin(ang) * rad * ay);
        cv::circle(r.mask, {x, y}, std::max(1, static_cast<int>(uni(rng, 1, 3) * sc.s)),
                   cv::Scalar(255), cv::FILLED, cv::LINE_8);
      }
      r.darkness = uni(rng, 40, 75);
      break;
    }
    case Motif::Pouring: {
      const bool vertical = uni(rng, 0.0, 1.0) < 0.5;
      if (vertical) {
        const int x0 = static_cast<int>(uni(rng, 0.15, 0.85) * w);
        const int y0 = static_cast<int>(uni(rng, 0.05, 0.20) * h);
        draw_jagged_line(rng, r.mask, {x0, y0}, 0.0, 1.0, uni(rng, 0.5, 0.8) * h,
                         th(uni(rng, 16, 24)), 12.0 * sc.s);
      } else {
        const int x0 = static_cast<int>(uni(rng, 0.05, 0.20) * w);
        const int y0 = static_cast<int>(uni(rng, 0.15, 0.85) * h);
        draw_jagged_line(rng, r.mask, {x0, y0}, 1.0, 0.0, uni(rng, 0.5, 0.8) * w,
                         th(uni(rng, 16, 24)), 12.0 * sc.s);
      }
      r.darkness = uni(rng, 105, 140);
      break;
    }
    case Motif::Massive: {
      const bool down = uni(rng, 0.0, 1.0) < 0.5;
      const int x0 = static_cast<int>(uni(rng, 0.05, 0.25) * w);
      const int y0 = static_cast<int>((down ? uni(rng, 0.05, 0.25) : uni(rng, 0.75, 0.95)) * h);
      const double len = uni(rng, 0.6, 0.85) * std::hypot(w, h) * 0.8;
      const int trunk = th(uni(rng, 18, 26));
      const auto vertices = draw_jagged_line(rng, r.mask, {x0, y0}, 0.8, down ? 0.6 : -0.6, len,
                                             trunk, 20.0 * sc.s);
      const int n_branch = uni_int(rng, 1, 2);
      for (int i = 0; i < n_branch; ++i) {
        const cv::Point at = vertices[static_cast<size_t>(
            uni_int(rng, 1, static_cast<int>(vertices.size()) - 1))];
        const double bx = uni(rng, -1.0, 1.0);
        const double by = uni(rng, 0.0, 1.0) < 0.5 ? -0.8 : 0.8;
        draw_jagged_line(rng, r.mask, at, bx, by, uni(rng, 150, 300) * sc.s,
                         std::max(2, trunk * 3 / 4), 16.0 * sc.s);
      }
      r.darkness = uni(rng, 55, 85);
      break;
    }
  }
  return r;
}

void apply_motif(Rng& rng, cv::Mat& img, const MotifResult& m) {
  if (m.is_mending) {
    std::uniform_int_distribution<int> fine(-4, 4);
    for (int y = 0; y < img.rows; ++y) {
      const uchar* mrow = m.mask.ptr<uchar>(y);
      uchar* row = img.ptr<uchar>(y);
      for (int x = 0; x < img.cols; ++x) {
        if (mrow[x]) row[x] = cv::saturate_cast<uchar>(row[x] + m.mending_shift + fine(rng));
      }
    }
    return;
  }
  cv::Mat soft;
  m.mask.convertTo(soft, CV_32F, 1.0 / 255.0);
  cv::GaussianBlur(soft, soft, cv::Size(5, 5), 0.0);
  for (int y = 0; y < img.rows; ++y) {
    const float* srow = soft.ptr<float>(y);
    uchar* row = img.ptr<uchar>(y);
    for (int x = 0; x < img.cols; ++x) {
      if (srow[x] > 0.0f) {
        row[x] = cv::saturate_cast<uchar>(row[x] - m.darkness * srow[x]);
      }
    }
  }
}

std::vector<std::string> synthetic_class_names(int num_classes) {
  static const std::vector<std::string> kDistress = {
      "longitudinal", "transverse", "alligator", "mending", "raveling", "pouring", "massive"};
  std::vector<std::string> names = {"normal"};
  for (int i = 1; i < num_classes; ++i) {
    if (i - 1 < static_cast<int>(kDistress.size())) {
      names.push_back(kDistress[static_cast<size_t>(i - 1)]);
    } else {
      names.push_back("motif" + std::to_string(i));
    }
  }
  return names;
}

}  // namespace

CorpusManifest generate_synthetic_corpus(const std::filesystem::path& out_dir,
                                         const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw InvalidConfigError("synthetic corpus needs at least 2 classes");
  if (spec.images_per_class < 1) throw InvalidConfigError("need at least 1 image per class");
  if (!(spec.train_ratio >= 0.0 && spec.train_ratio <= 1.0)) {
    throw InvalidConfigError("train_ratio must lie in [0,1]");
  }

  const std::vector<std::string> names = synthetic_class_names(spec.num_classes);
  const double max_fraction = 0.10;

  CorpusManifest manifest;
  manifest.seed = spec.seed;
  manifest.base_dir = out_dir;
  {
    std::vector<std::string> for_map = names;
    manifest.class_map = build_class_map(std::move(for_map));
  }

  for (int cls = 0; cls < spec.num_classes; ++cls) {
    const std::string& name = names[static_cast<size_t>(cls)];
    std::filesystem::create_directories(out_dir / name);
    for (int idx = 0; idx < spec.images_per_class; ++idx) {
      Rng rng = make_rng(spec.seed, static_cast<uint64_t>(cls), static_cast<uint64_t>(idx));
      cv::Mat img = make_background(rng, spec.width, spec.height);

      const std::string file = name + "/" + name + "_" + std::to_string(idx) + ".png";
      if (cls != 0) {
        const Motif motif = motif_for(name, cls - 1);
        double shrink = 1.0;
        MotifResult m;
        for (;;) {
          m = draw_motif(rng, motif, spec.width, spec.height, shrink);
          const double fraction = static_cast<double>(cv::countNonZero(m.mask)) /
                                  (static_cast<double>(spec.width) * spec.height);
          if (fraction > 0.0 && fraction <= max_fraction) break;
          shrink *= fraction > max_fraction ? 0.8 : 1.25;
        }
        apply_motif(rng, img, m);
        cv::imwrite((out_dir / mask_path_for(file)).string(), m.mask);
      }
      cv::imwrite((out_dir / file).string(), img);
      manifest.entries.push_back({file, name, "test"});
    }
  }

  // Seeded per-class split.
  for (int cls = 0; cls < spec.num_classes; ++cls) {
    const std::string& name = names[static_cast<size_t>(cls)];
    std::vector<size_t> positions;
    for (size_t i = 0; i < manifest.entries.size(); ++i) {
      if (manifest.entries[i].class_name == name) positions.push_back(i);
    }
    auto rng = make_rng(spec.seed, fnv1a64(name), 0x5b);
    std::shuffle(positions.begin(), positions.end(), rng);
    const auto n_train = static_cast<size_t>(
        std::llround(spec.train_ratio * static_cast<double>(positions.size())));
    for (size_t i = 0; i < n_train; ++i) manifest.entries[positions[i]].split = "train";
  }

  manifest.save(out_dir / "manifest.txt");
  return manifest;
}

}  // namespace wsplin
