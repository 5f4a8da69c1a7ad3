#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <opencv2/core.hpp>

#include "oracles.hpp"
#include "wsplin/patch_geometry.hpp"

using namespace wsplin;

TEST_CASE("slide window grid on the default geometry") {
  const auto boxes = slide_window(1200, 900, 300, 300);
  REQUIRE(boxes.size() == 12);  // 4 columns x 3 rows
  CHECK(boxes[0].box_in_layer == Box{0, 0, 300, 300});
  CHECK(boxes[1].box_in_layer == Box{300, 0, 300, 300});  // rows outer, cols inner
  CHECK(boxes[4].box_in_layer == Box{0, 300, 300, 300});
  CHECK(boxes[11].box_in_layer == Box{900, 600, 300, 300});
  for (const auto& b : boxes) {
    CHECK(b.layer == 0);
    CHECK(b.box_in_source == b.box_in_layer);
  }
}

TEST_CASE("slide window single tile and rectangular grids") {
  CHECK(slide_window(300, 300, 300, 300).size() == 1);
  CHECK(slide_window(300, 300, 300, 300)[0].box_in_layer == Box{0, 0, 300, 300});
  CHECK(slide_window(600, 900, 300, 300).size() == 6);  // 2 x 3
}

TEST_CASE("slide window rejects undersized images") {
  CHECK_THROWS_AS(slide_window(200, 900, 300, 300), InvalidGeometryError);
  CHECK_THROWS_AS(slide_window(1200, 299, 300, 300), InvalidGeometryError);
  CHECK_THROWS_AS(slide_window(1200, 900, 300, 0), InvalidGeometryError);
}

TEST_CASE("slide window discards trailing margins smaller than the window") {
  const auto boxes = slide_window(1250, 950, 300, 300);
  CHECK(boxes.size() == 12);
  for (const auto& b : boxes) {
    CHECK(b.box_in_layer.x + b.box_in_layer.w <= 1250);
    CHECK(b.box_in_layer.y + b.box_in_layer.h <= 950);
  }
}

TEST_CASE("default pyramid yields 17 boxes split 12/4/1") {
  const auto spec = PyramidSpec::defaults();
  const auto boxes = pyramid_patches(1200, 900, spec);
  REQUIRE(boxes.size() == 17);
  int per_layer[3] = {0, 0, 0};
  for (const auto& b : boxes) per_layer[b.layer]++;
  CHECK(per_layer[0] == 12);
  CHECK(per_layer[1] == 4);
  CHECK(per_layer[2] == 1);
  // The top layer's single box spans the whole source image.
  CHECK(boxes.back().box_in_source == Box{0, 0, 1200, 900});
}

TEST_CASE("pyramid source mapping scales per axis") {
  const auto spec = PyramidSpec::defaults();
  const auto boxes = pyramid_patches(1200, 900, spec);
  // Layer-1 box (300,0,300,300) in the 600x600 layer: scales 1200/600 and
  // 900/600 per axis.
  const PatchBox* found = nullptr;
  for (const auto& b : boxes) {
    if (b.layer == 1 && b.box_in_layer == Box{300, 0, 300, 300}) found = &b;
  }
  REQUIRE(found != nullptr);
  CHECK(found->box_in_source == Box{600, 0, 600, 450});
}

TEST_CASE("degenerate single layer pyramid equals slide window") {
  PyramidSpec spec;
  spec.layer_resolutions = {{1200, 900}};
  spec.window_size = 300;
  spec.stride = 300;
  const auto pyr = pyramid_patches(1200, 900, spec);
  const auto sw = slide_window(1200, 900, 300, 300);
  REQUIRE(pyr.size() == sw.size());
  for (size_t i = 0; i < sw.size(); ++i) {
    CHECK(pyr[i].box_in_layer == sw[i].box_in_layer);
    CHECK(pyr[i].box_in_source == sw[i].box_in_source);
  }
}

TEST_CASE("pyramid ordering is stable across calls") {
  const auto spec = PyramidSpec::defaults();
  const auto a = pyramid_patches(1200, 900, spec);
  const auto b = pyramid_patches(1200, 900, spec);
  CHECK(a == b);
}

TEST_CASE("within one layer boxes tile the layer without overlap") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 25; ++trial) {
    const auto g = oracle::random_geometry(rng);
    std::vector<std::vector<Box>> per_layer(g.spec.layer_resolutions.size());
    for (const auto& b : g.boxes) per_layer[static_cast<size_t>(b.layer)].push_back(b.box_in_layer);
    for (size_t l = 0; l < per_layer.size(); ++l) {
      const auto& boxes = per_layer[l];
      int64_t sum = 0;
      for (const auto& box : boxes) sum += box.area();
      // Non-overlap: union area equals the sum of areas.
      CHECK(rect_union_area(boxes) == sum);
      // Exact tiling whenever the layer dims are stride multiples.
      const auto [lw, lh] = g.spec.layer_resolutions[l];
      if (lw % g.spec.stride == 0 && lh % g.spec.stride == 0) {
        CHECK(sum == static_cast<int64_t>(lw) * lh);
      }
    }
  }
}

TEST_CASE("box_in_source area tracks the scale product within rounding") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 25; ++trial) {
    const auto g = oracle::random_geometry(rng);
    const double sw = g.spec.source_width();
    const double sh = g.spec.source_height();
    for (const auto& b : g.boxes) {
      const auto [lw, lh] = g.spec.layer_resolutions[static_cast<size_t>(b.layer)];
      const double sx = sw / lw;
      const double sy = sh / lh;
      const double expect_w = b.box_in_layer.w * sx;
      const double expect_h = b.box_in_layer.h * sy;
      CHECK(std::abs(b.box_in_source.w - expect_w) <= 1.0);
      CHECK(std::abs(b.box_in_source.h - expect_h) <= 1.0);
      CHECK(b.box_in_source.x >= 0);
      CHECK(b.box_in_source.y >= 0);
      CHECK(b.box_in_source.x + b.box_in_source.w <= g.spec.source_width());
      CHECK(b.box_in_source.y + b.box_in_source.h <= g.spec.source_height());
    }
  }
}

TEST_CASE("per layer counts reconcile the alpha formula") {
  CHECK(per_layer_counts({12, 4, 1}, 0.25) == std::vector<int>{3, 1, 1});
  CHECK(per_layer_counts({12, 4, 1}, 1.0) == std::vector<int>{12, 4, 1});
  CHECK(per_layer_counts({12, 4, 1}, 0.5) == std::vector<int>{6, 2, 1});
}

TEST_CASE("per layer counts reject alpha outside (0,1]") {
  CHECK_THROWS_AS(per_layer_counts({12, 4, 1}, 0.0), InvalidConfigError);
  CHECK_THROWS_AS(per_layer_counts({12, 4, 1}, -0.1), InvalidConfigError);
  CHECK_THROWS_AS(per_layer_counts({12, 4, 1}, 1.5), InvalidConfigError);
}

TEST_CASE("per layer counts are monotone in alpha") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> m_dist(1, 30);
  std::uniform_real_distribution<double> a_dist(0.01, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> m = {m_dist(rng), m_dist(rng), m_dist(rng)};
    double a1 = a_dist(rng), a2 = a_dist(rng);
    if (a1 > a2) std::swap(a1, a2);
    const auto n1 = per_layer_counts(m, a1);
    const auto n2 = per_layer_counts(m, a2);
    for (size_t l = 0; l < m.size(); ++l) {
      CHECK(n1[l] <= n2[l]);
      CHECK(n1[l] >= 1);
      CHECK(n2[l] <= m[l]);
    }
  }
}

TEST_CASE("sparse sampler matches the rasterizing oracle on the default pyramid") {
  const auto spec = PyramidSpec::defaults();
  const auto boxes = pyramid_patches(1200, 900, spec);
  const std::vector<int> counts = per_layer_counts({12, 4, 1}, 0.25);
  const SamplePlan shipped = sparse_sample(boxes, counts);
  const SamplePlan expected = oracle::sparse_sample_raster_oracle(boxes, counts, 1200, 900, 10);
  CHECK(shipped == expected);
  // The full-image top-layer box makes every combination tie, so the
  // lexicographic rule selects the smallest index sequence.
  CHECK(shipped.chosen_indices ==
        std::vector<std::vector<int>>{{0, 1, 2}, {0}, {0}});
}

TEST_CASE("sparse sampler equals the oracle on randomized geometries") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const auto g = oracle::random_geometry(rng);
    const SamplePlan shipped = sparse_sample(g.boxes, g.counts);
    const SamplePlan expected = oracle::sparse_sample_raster_oracle(
        g.boxes, g.counts, g.spec.source_width(), g.spec.source_height(), 10);
    CHECK(shipped == expected);
  }
}

TEST_CASE("sparse sampler with full counts keeps everything") {
  const auto spec = PyramidSpec::defaults();
  const auto boxes = pyramid_patches(1200, 900, spec);
  const SamplePlan plan = sparse_sample(boxes, {12, 4, 1});
  CHECK(plan.chosen_indices[0] ==
        std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  CHECK(plan.chosen_indices[1] == std::vector<int>{0, 1, 2, 3});
  CHECK(plan.chosen_indices[2] == std::vector<int>{0});
}

TEST_CASE("two-layer toy resolves ties lexicographically") {
  // Layer 0: four 2x2 tiles of a 4x4 image; layer 1: one tile covering the
  // whole source. Any layer-0 choice yields union 16, so index 0 wins.
  PyramidSpec spec;
  spec.layer_resolutions = {{4, 4}, {2, 2}};
  spec.window_size = 2;
  spec.stride = 2;
  const auto boxes = pyramid_patches(4, 4, spec);
  REQUIRE(boxes.size() == 5);
  const SamplePlan plan = sparse_sample(boxes, {1, 1});
  CHECK(plan.chosen_indices == std::vector<std::vector<int>>{{0}, {0}});

  // Hand enumeration: every candidate union covers the full 16 pixels.
  for (int i = 0; i < 4; ++i) {
    const std::vector<Box> rects = {boxes[static_cast<size_t>(i)].box_in_source,
                                    boxes[4].box_in_source};
    CHECK(rect_union_area(rects) == 16);
  }
}

TEST_CASE("sparse sampler refuses oversized enumerations") {
  std::vector<PatchBox> boxes;
  for (int i = 0; i < 40; ++i) {
    PatchBox b;
    b.layer = 0;
    b.col = i;
    b.box_in_layer = {i * 10, 0, 10, 10};
    b.box_in_source = b.box_in_layer;
    boxes.push_back(b);
  }
  CHECK_THROWS_AS(sparse_sample(boxes, {20}, 1000), InfeasibleEnumerationError);
}

TEST_CASE("extract patches under all strategies") {
  cv::Mat img(900, 1200, CV_8UC1);
  for (int y = 0; y < img.rows; ++y) {
    for (int x = 0; x < img.cols; ++x) {
      img.at<uchar>(y, x) = static_cast<uchar>((x / 300 + 4 * (y / 300)) * 16 + 8);
    }
  }
  const auto spec = PyramidSpec::defaults();

  const PatchSet ip = extract_patches(img, Strategy::IP, spec, 1.0);
  CHECK(ip.boxes.size() == 17);
  CHECK(ip.patches.shape() == Shape{17, 1, 300, 300});

  const PatchSet sw = extract_patches(img, Strategy::SW, spec, 1.0);
  CHECK(sw.boxes.size() == 12);
  CHECK(sw.patches.shape() == Shape{12, 1, 300, 300});

  const PatchSet ss = extract_patches(img, Strategy::SS, spec, 0.25);
  CHECK(ss.boxes.size() == 5);
  CHECK(ss.patches.shape() == Shape{5, 1, 300, 300});

  // Layer-0 crops are verbatim image windows.
  const double v = sw.patches[0];
  CHECK(v == doctest::Approx(8.0 / 255.0));
}

TEST_CASE("extract patches resizes foreign dimensions to layer 0") {
  cv::Mat img(450, 600, CV_8UC1, cv::Scalar(127));
  const PatchSet set = extract_patches(img, Strategy::IP, PyramidSpec::defaults(), 1.0);
  CHECK(set.boxes.size() == 17);
  CHECK(set.source_width == 1200);
  CHECK(set.source_height == 900);
}

TEST_CASE("patch counts per strategy") {
  const auto spec = PyramidSpec::defaults();
  CHECK(patch_count_for(Strategy::SW, spec, 1.0) == 12);
  CHECK(patch_count_for(Strategy::IP, spec, 1.0) == 17);
  CHECK(patch_count_for(Strategy::SS, spec, 0.25) == 5);
  CHECK(patch_count_for(Strategy::SS, spec, 1.0) == 17);
}
