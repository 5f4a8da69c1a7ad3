#pragma once

#include <filesystem>

#include "wsplin/data/manifest.hpp"

namespace wsplin {

struct SplitRatios {
  double train = 0.5;
  double test = 0.5;
  void validate() const;
};

struct IngestResult {
  CorpusManifest manifest;
  std::vector<std::string> quarantined;  // unreadable files, relative paths
};

// Walks a class-folder corpus (one subdirectory per class), splits each class
// with a seeded shuffle and returns the manifest. Unreadable images land in
// the quarantine list instead of failing the run; an empty (or fully
// unreadable) class directory is an error.
IngestResult ingest(const std::filesystem::path& root, SplitRatios ratios, uint64_t seed);

}  // namespace wsplin
