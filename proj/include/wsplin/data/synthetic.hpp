#pragma once

#include <filesystem>

#include "wsplin/data/manifest.hpp"

namespace wsplin {

struct SyntheticSpec {
  int images_per_class = 40;
  int num_classes = 8;
  int width = 1200;
  int height = 900;
  uint64_t seed = 0;
  double train_ratio = 0.75;
};

// Procedural desk-scale corpus: grayscale asphalt-like backgrounds, class 0
// free of markings, classes 1..C-1 carrying one distress motif each (thin
// jagged polylines, lattices, speckle fields, filled patch regions). Every
// distressed image keeps its exact pixel mask next to it (foo_mask.png) and
// covers at most 10% of the image area. Bitwise deterministic under the seed.
CorpusManifest generate_synthetic_corpus(const std::filesystem::path& out_dir,
                                         const SyntheticSpec& spec);

}  // namespace wsplin
