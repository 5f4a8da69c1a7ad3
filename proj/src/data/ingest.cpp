#include "wsplin/data/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>

#include "wsplin/rng.hpp"

namespace wsplin {

void SplitRatios::validate() const {
  if (train < 0.0 || test < 0.0 || std::abs(train + test - 1.0) > 1e-9) {
    throw InvalidConfigError("split ratios must be nonnegative and sum to 1");
  }
}

namespace {

bool has_image_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".pgm" ||
         ext == ".tif" || ext == ".tiff";
}

}  // namespace

IngestResult ingest(const std::filesystem::path& root, SplitRatios ratios, uint64_t seed) {
  ratios.validate();
  if (!std::filesystem::is_directory(root)) {
    throw IngestionError("corpus root '" + root.string() + "' is not a directory");
  }

  std::vector<std::string> class_dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path().filename().string());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw IngestionError("no class directories under '" + root.string() + "'");

  IngestResult result;
  result.manifest.seed = seed;
  result.manifest.base_dir = root;
  result.manifest.class_map = build_class_map(class_dirs);

  for (const std::string& cls : class_dirs) {
    std::vector<std::string> files;
    for (const auto& entry : std::filesystem::directory_iterator(root / cls)) {
      if (!entry.is_regular_file()) continue;
      if (!has_image_extension(entry.path()) || is_mask_path(entry.path())) continue;
      files.push_back(entry.path().filename().string());
    }
    std::sort(files.begin(), files.end());

    std::vector<std::string> readable;
    for (const std::string& file : files) {
      const std::string rel = cls + "/" + file;
      if (cv::imread((root / cls / file).string(), cv::IMREAD_UNCHANGED).empty()) {
        result.quarantined.push_back(rel);
      } else {
        readable.push_back(rel);
      }
    }
    if (readable.empty()) {
      throw IngestionError("class directory '" + cls + "' has no readable images");
    }

    auto rng = make_rng(seed, fnv1a64(cls));
    std::shuffle(readable.begin(), readable.end(), rng);
    const auto n_train = static_cast<size_t>(
        std::llround(ratios.train * static_cast<double>(readable.size())));
    for (size_t i = 0; i < readable.size(); ++i) {
      result.manifest.entries.push_back({readable[i], cls, i < n_train ? "train" : "test"});
    }
  }
  return result;
}

}  // namespace wsplin
