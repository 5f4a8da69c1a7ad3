#pragma once

#include <filesystem>

#include "wsplin/data/manifest.hpp"

namespace wsplin {

struct Crack500Result {
  std::vector<CorpusManifest> split_replicas;  // five half/half train-test splits
  std::filesystem::path out_dir;
  int crack_count = 0;
  int normal_count = 0;
  bool usable_for_detection = true;  // false when no normals were generated
  std::vector<std::string> warnings;
};

// Builds a two-class detection corpus from a directory of crack images with
// pixel-level masks (foo.png + foo_mask.png). All cracks are kept; a seeded
// subset is additionally erased into normal pavement images. Everything is
// converted to gray and resized to 1200x900, and five seeded half/half
// splits are written as manifest_rep0..4.txt.
Crack500Result prepare_crack500_pdd(const std::filesystem::path& crack_dir,
                                    const std::filesystem::path& out_dir,
                                    int normals_to_generate, uint64_t seed);

}  // namespace wsplin
