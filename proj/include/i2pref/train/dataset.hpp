// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "i2pref/io/png.hpp"
#include "i2pref/io/xyz.hpp"
#include "i2pref/train/synth.hpp"

namespace i2pref::train {

namespace fs = std::filesystem;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct DatasetSpec {
  std::vector<ShapeKind> categories{ShapeKind::Sphere, ShapeKind::Box, ShapeKind::Cylinder, ShapeKind::Torus};
  int train_per_category = 16;
  int val_per_category = 4;
  int test_per_category = 4;
  std::uint64_t seed = 0;
  SynthConfig synth;

  int count(const std::string& split) const {
    if (split == "train") return train_per_category;
    if (split == "val") return val_per_category;
    if (split == "test") return test_per_category;
    throw InvalidInput("unknown split '" + split + "'");
  }
};

/// Deterministic recipe for sample `index` of `category` in `split`.
struct SampleRecipe {
  ShapeParams shape;
  int view_id = 0;
  std::uint64_t seed = 0;
};

inline SampleRecipe recipe_for(const DatasetSpec& spec, const std::string& split, ShapeKind kind, int index) {
  const std::uint64_t key = fnv1a(split + "/" + to_string(kind) + "/" + std::to_string(index));
  const std::uint64_t seed = mix_seed(spec.seed, key);
  std::mt19937_64 rng(seed);
  SampleRecipe r;
  r.shape = random_shape(kind, rng);
  r.view_id = static_cast<int>(rng() % kViewsPerObject);
  r.seed = seed;
  return r;
}

using Dataset = std::vector<TrainSample>;

/// Builds a split in memory, ordered by category then index.
inline Dataset make_split(const DatasetSpec& spec, const std::string& split) {
  Dataset out;
  const int n = spec.count(split);
  for (ShapeKind k : spec.categories)
    for (int i = 0; i < n; ++i) {
      const auto r = recipe_for(spec, split, k, i);
      out.push_back(synth_sample(r.shape, r.view_id, r.seed, spec.synth));
    }
  return out;
}

inline void write_sample(const fs::path& dir, const TrainSample& s) {
  fs::create_directories(dir);
  io::write_image((dir / "image.png").string(), s.image);
  io::write_xyz((dir / "partial.xyz").string(), s.partial.span());
  io::write_xyz((dir / "gt.xyz").string(), s.gt.span());
  std::ofstream meta(dir / "meta", std::ios::binary | std::ios::trunc);
  if (!meta) throw IoError("cannot write " + (dir / "meta").string());
  meta << "category=" << s.category << "\n"
       << "view_id=" << s.view_id << "\n"
       << "seed=" << s.seed << "\n";
}

inline std::map<std::string, std::string> read_key_values(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError(file.string() + ":" + std::to_string(line_no) + ": expected key=value");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline TrainSample read_sample(const fs::path& dir, int image_height, int image_width) {
  TrainSample s;
  s.image = io::read_image((dir / "image.png").string(), image_height, image_width);
  s.partial = io::read_xyz<float>((dir / "partial.xyz").string());
  s.gt = io::read_xyz<float>((dir / "gt.xyz").string());
  const auto kv = read_key_values(dir / "meta");
  auto get = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw IoError((dir / "meta").string() + ": missing key '" + k + "'");
    return it->second;
  };
  s.category = get("category");
  try {
    s.view_id = std::stoi(get("view_id"));
    s.seed = std::stoull(get("seed"));
  } catch (const std::logic_error&) {
    throw IoError((dir / "meta").string() + ": malformed view_id or seed");
  }
  s.n_visible = s.partial.size();
  return s;
}

struct ManifestEntry {
  std::string split;
  std::string path;  // relative to the dataset root
  std::string category;
  int view_id = 0;
  std::uint64_t seed = 0;
};

inline constexpr const char* kManifestName = "manifest.tsv";

/// Generates train/val/test splits under root and writes the manifest.
/// Returns the manifest entries in file order.
inline std::vector<ManifestEntry> generate_dataset(const DatasetSpec& spec, const fs::path& root) {
  std::vector<ManifestEntry> entries;
  for (const std::string split : {"train", "val", "test"}) {
    const int n = spec.count(split);
    for (ShapeKind k : spec.categories)
      for (int i = 0; i < n; ++i) {
        const auto r = recipe_for(spec, split, k, i);
        const auto sample = synth_sample(r.shape, r.view_id, r.seed, spec.synth);
        char name[64];
        std::snprintf(name, sizeof name, "%s_%04d", to_string(k).c_str(), i);
        const fs::path rel = fs::path(split) / name;
        write_sample(root / rel, sample);
        entries.push_back({split, rel.generic_string(), sample.category, sample.view_id, sample.seed});
      }
  }
  std::ofstream out(root / kManifestName, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest in " + root.string());
  out << "# split\tpath\tcategory\tview_id\tseed\n";
  for (const auto& e : entries)
    out << e.split << '\t' << e.path << '\t' << e.category << '\t' << e.view_id << '\t' << e.seed << '\n';
  return entries;
}

inline std::vector<ManifestEntry> read_manifest(const fs::path& root) {
  std::ifstream in(root / kManifestName);
  if (!in) throw IoError("dataset manifest not found: " + (root / kManifestName).string());
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    ManifestEntry e;
    std::string view, seed;
    if (!std::getline(ss, e.split, '\t') || !std::getline(ss, e.path, '\t') || !std::getline(ss, e.category, '\t') ||
        !std::getline(ss, view, '\t') || !std::getline(ss, seed))
      throw IoError("manifest line " + std::to_string(line_no) + ": expected 5 tab-separated fields");
    e.view_id = std::stoi(view);
    e.seed = std::stoull(seed);
    entries.push_back(std::move(e));
  }
  return entries;
}

inline Dataset load_split(const fs::path& root, const std::string& split, int image_height, int image_width) {
  Dataset out;
  for (const auto& e : read_manifest(root))
    if (e.split == split) out.push_back(read_sample(root / e.path, image_height, image_width));
  return out;
}

}  // namespace i2pref::train
