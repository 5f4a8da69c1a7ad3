#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "wsplin/errors.hpp"

namespace wsplin {

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  std::string class_name;
  std::string split;  // "train" or "test"

  bool operator==(const ManifestEntry&) const = default;
};

uint64_t fnv1a64(std::string_view s);

// "normal" is pinned to index 0 when present; the remaining names follow in
// sorted order.
std::map<std::string, int> build_class_map(std::vector<std::string> names);

// Line-oriented corpus manifest: a small header (class map, seed, checksum of
// the entry lines) followed by one "path<TAB>class<TAB>split" entry per line.
struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  std::map<std::string, int> class_map;
  uint64_t seed = 0;
  std::filesystem::path base_dir;

  int class_index(const std::string& name) const;
  std::vector<std::string> class_names() const;  // in index order
  std::vector<ManifestEntry> split_entries(const std::string& split) const;
  std::filesystem::path resolve(const ManifestEntry& e) const { return base_dir / e.path; }

  std::string body_text() const;
  std::string checksum() const;  // fnv1a64 over body_text()

  void save(const std::filesystem::path& file) const;
  // verify_paths also checks that every referenced file exists.
  static CorpusManifest load(const std::filesystem::path& file, bool verify_paths = true);
};

// Drops normal-class entries and rebuilds the class map over the distress
// classes only (the second-stage recognizer's corpus view).
CorpusManifest distress_only(const CorpusManifest& manifest);

// Convention: the pixel-level mask of image foo.png sits next to it as
// foo_mask.png.
std::filesystem::path mask_path_for(const std::filesystem::path& image_path);
bool is_mask_path(const std::filesystem::path& path);

}  // namespace wsplin
