#include "wsplin/data/crack500.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <opencv2/imgcodecs.hpp>

#include "wsplin/data/inpaint.hpp"
#include "wsplin/image.hpp"
#include "wsplin/rng.hpp"

namespace wsplin {

namespace {

constexpr int kTargetWidth = 1200;
constexpr int kTargetHeight = 900;

bool has_image_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".pgm" ||
         ext == ".tif" || ext == ".tiff";
}

std::string numbered(const std::string& stem, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", i);
  return stem + "_" + buf + ".png";
}

}  // namespace

Crack500Result prepare_crack500_pdd(const std::filesystem::path& crack_dir,
                                    const std::filesystem::path& out_dir,
                                    int normals_to_generate, uint64_t seed) {
  if (!std::filesystem::is_directory(crack_dir)) {
    throw IngestionError("crack directory '" + crack_dir.string() + "' not found");
  }
  if (normals_to_generate < 0) throw InvalidConfigError("normal count must be nonnegative");

  std::vector<std::filesystem::path> images;
  for (const auto& entry : std::filesystem::directory_iterator(crack_dir)) {
    if (!entry.is_regular_file()) continue;
    if (!has_image_extension(entry.path()) || is_mask_path(entry.path())) continue;
    images.push_back(entry.path());
  }
  std::sort(images.begin(), images.end());

  Crack500Result result;
  result.out_dir = out_dir;

  std::vector<MaskedCrackImage> pairs;
  for (const auto& img_path : images) {
    const std::filesystem::path mask_path = mask_path_for(img_path);
    if (!std::filesystem::exists(mask_path)) {
      result.warnings.push_back("no mask for " + img_path.filename().string() + "; skipped");
      continue;
    }
    MaskedCrackImage pair;
    pair.image = to_channels(load_image(img_path.string()), 1);
    pair.mask = to_channels(load_image(mask_path.string()), 1);
    if (pair.mask.size() != pair.image.size()) {
      result.warnings.push_back("mask size mismatch for " + img_path.filename().string() +
                                "; skipped");
      continue;
    }
    pairs.push_back(std::move(pair));
  }
  if (pairs.empty()) throw IngestionError("no usable image/mask pairs in '" + crack_dir.string() + "'");
  if (normals_to_generate > static_cast<int>(pairs.size())) {
    throw InvalidConfigError("requested " + std::to_string(normals_to_generate) +
                             " normals but only " + std::to_string(pairs.size()) +
                             " crack images are available");
  }

  std::filesystem::create_directories(out_dir / "crack");
  if (normals_to_generate > 0) std::filesystem::create_directories(out_dir / "normal");

  CorpusManifest base;
  base.seed = seed;
  base.base_dir = out_dir;
  if (normals_to_generate > 0) {
    base.class_map = build_class_map({"normal", "crack"});
  } else {
    base.class_map = build_class_map({"crack"});
    result.usable_for_detection = false;
    result.warnings.push_back("no normal images generated; corpus unusable for detection");
  }

  for (size_t i = 0; i < pairs.size(); ++i) {
    const std::string rel = "crack/" + numbered("crack", static_cast<int>(i));
    cv::imwrite((out_dir / rel).string(),
                resize_to(pairs[i].image, kTargetWidth, kTargetHeight));
    base.entries.push_back({rel, "crack", "test"});
  }
  result.crack_count = static_cast<int>(pairs.size());

  std::vector<size_t> erase_order(pairs.size());
  std::iota(erase_order.begin(), erase_order.end(), size_t{0});
  {
    auto rng = make_rng(seed, 0xe7a5e);
    std::shuffle(erase_order.begin(), erase_order.end(), rng);
  }
  for (int i = 0; i < normals_to_generate; ++i) {
    const MaskedCrackImage& pair = pairs[erase_order[static_cast<size_t>(i)]];
    const cv::Mat erased = synthesize_normal(pair);
    const std::string rel = "normal/" + numbered("normal", i);
    cv::imwrite((out_dir / rel).string(), resize_to(erased, kTargetWidth, kTargetHeight));
    base.entries.push_back({rel, "normal", "test"});
  }
  result.normal_count = normals_to_generate;

  const size_t n = base.entries.size();
  const size_t n_train = (n + 1) / 2;  // ceil(n/2)
  for (int rep = 0; rep < 5; ++rep) {
    CorpusManifest replica = base;
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    auto rng = make_rng(seed, 0x5e1ec7, static_cast<uint64_t>(rep));
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t i = 0; i < n; ++i) {
      replica.entries[order[i]].split = i < n_train ? "train" : "test";
    }
    replica.save(out_dir / ("manifest_rep" + std::to_string(rep) + ".txt"));
    result.split_replicas.push_back(std::move(replica));
  }
  return result;
}

}  // namespace wsplin
