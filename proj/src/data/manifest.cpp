#include "wsplin/data/manifest.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace wsplin {

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::map<std::string, int> build_class_map(std::vector<std::string> names) {
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  std::map<std::string, int> map;
  int next = 0;
  const auto it = std::find(names.begin(), names.end(), "normal");
  if (it != names.end()) {
    map["normal"] = next++;
    names.erase(it);
  }
  for (const std::string& n : names) map[n] = next++;
  return map;
}

int CorpusManifest::class_index(const std::string& name) const {
  const auto it = class_map.find(name);
  if (it == class_map.end()) throw IngestionError("unknown class '" + name + "'");
  return it->second;
}

std::vector<std::string> CorpusManifest::class_names() const {
  std::vector<std::string> names(class_map.size());
  for (const auto& [name, idx] : class_map) names[static_cast<size_t>(idx)] = name;
  return names;
}

std::vector<ManifestEntry> CorpusManifest::split_entries(const std::string& split) const {
  std::vector<ManifestEntry> out;
  for (const ManifestEntry& e : entries) {
    if (e.split == split) out.push_back(e);
  }
  return out;
}

std::string CorpusManifest::body_text() const {
  std::string out;
  for (const ManifestEntry& e : entries) {
    out += e.path + "\t" + e.class_name + "\t" + e.split + "\n";
  }
  return out;
}

namespace {

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string CorpusManifest::checksum() const { return "fnv1a64:" + hex64(fnv1a64(body_text())); }

void CorpusManifest::save(const std::filesystem::path& file) const {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream f(file, std::ios::binary);
  if (!f) throw IngestionError("cannot write manifest '" + file.string() + "'");
  f << "# wsplin-manifest v1\n";
  f << "# seed: " << seed << "\n";
  f << "# classes:";
  for (const std::string& name : class_names()) f << " " << name << "=" << class_map.at(name);
  f << "\n";
  f << "# checksum: " << checksum() << "\n";
  f << body_text();
}

CorpusManifest CorpusManifest::load(const std::filesystem::path& file, bool verify_paths) {
  std::ifstream f(file, std::ios::binary);
  if (!f) throw IngestionError("cannot open manifest '" + file.string() + "'");
  CorpusManifest m;
  m.base_dir = file.has_parent_path() ? file.parent_path() : std::filesystem::path(".");

  std::string declared_checksum;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string key;
      hs >> key;
      if (key == "seed:") {
        hs >> m.seed;
      } else if (key == "classes:") {
        std::string tok;
        while (hs >> tok) {
          const size_t eq = tok.find('=');
          if (eq == std::string::npos) throw IngestionError("malformed class map in manifest");
          m.class_map[tok.substr(0, eq)] = std::stoi(tok.substr(eq + 1));
        }
      } else if (key == "checksum:") {
        hs >> declared_checksum;
      }
      continue;
    }
    const size_t t1 = line.find('\t');
    const size_t t2 = line.find('\t', t1 == std::string::npos ? t1 : t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) {
      throw IngestionError("malformed manifest line: " + line);
    }
    ManifestEntry e;
    e.path = line.substr(0, t1);
    e.class_name = line.substr(t1 + 1, t2 - t1 - 1);
    e.split = line.substr(t2 + 1);
    m.entries.push_back(std::move(e));
  }

  if (m.class_map.empty()) throw IngestionError("manifest has no class map");
  std::vector<bool> seen(m.class_map.size(), false);
  for (const auto& [name, idx] : m.class_map) {
    if (idx < 0 || static_cast<size_t>(idx) >= m.class_map.size() || seen[static_cast<size_t>(idx)]) {
      throw IngestionError("class indices not contiguous from 0");
    }
    seen[static_cast<size_t>(idx)] = true;
  }
  if (!declared_checksum.empty() && declared_checksum != m.checksum()) {
    throw IngestionError("manifest checksum mismatch in '" + file.string() + "'");
  }
  for (const ManifestEntry& e : m.entries) {
    m.class_index(e.class_name);
    if (verify_paths && !std::filesystem::exists(m.resolve(e))) {
      throw IngestionError("manifest entry missing on disk: " + m.resolve(e).string());
    }
  }
  return m;
}

CorpusManifest distress_only(const CorpusManifest& manifest) {
  CorpusManifest out;
  out.seed = manifest.seed;
  out.base_dir = manifest.base_dir;
  std::vector<std::string> names;
  for (const auto& [name, idx] : manifest.class_map) {
    if (name != "normal") names.push_back(name);
  }
  if (names.empty()) throw InvalidConfigError("corpus has no distress classes");
  out.class_map = build_class_map(names);
  for (const ManifestEntry& e : manifest.entries) {
    if (e.class_name != "normal") out.entries.push_back(e);
  }
  return out;
}

std::filesystem::path mask_path_for(const std::filesystem::path& image_path) {
  std::filesystem::path p = image_path;
  const std::string stem = p.stem().string();
  const std::string ext = p.extension().string();
  p.replace_filename(stem + "_mask" + ext);
  return p;
}

bool is_mask_path(const std::filesystem::path& path) {
  const std::string stem = path.stem().string();
  return stem.size() >= 5 && stem.substr(stem.size() - 5) == "_mask";
}

}  // namespace wsplin
