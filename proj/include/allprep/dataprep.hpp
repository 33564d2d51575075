#pragma once

// Dataset manifest, stratified hold-out split and augmentation to a fixed
// per-class count.
//
// Protocol: hold out `test_per_class` originals per class, optionally merge
// preprocessed copies of the remaining originals, augment every class's
// train+val pool up to the target, then partition that pool into train/val.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "allprep/error.hpp"
#include "allprep/parallel.hpp"
#include "allprep/raster.hpp"

namespace allprep {

enum class ClassLabel { Benign, EarlyPreB, PreB, ProB };

inline constexpr std::array<ClassLabel, 4> kAllLabels = {
    ClassLabel::Benign, ClassLabel::EarlyPreB, ClassLabel::PreB, ClassLabel::ProB};

inline constexpr std::size_t kNumClasses = kAllLabels.size();

inline std::string_view label_name(ClassLabel l) {
  switch (l) {
    case ClassLabel::Benign: return "Benign";
    case ClassLabel::EarlyPreB: return "EarlyPreB";
    case ClassLabel::PreB: return "PreB";
    case ClassLabel::ProB: return "ProB";
  }
  return "?";
}

inline std::optional<ClassLabel> try_parse_label(std::string_view s) {
  for (auto l : kAllLabels) {
    if (label_name(l) == s) return l;
  }
  return std::nullopt;
}

inline ClassLabel parse_label(std::string_view s) {
  if (auto l = try_parse_label(s)) return *l;
  throw Error(Errc::UnknownLabel, "unknown class label '" + std::string(s) + "'");
}

inline std::size_t label_index(ClassLabel l) { return static_cast<std::size_t>(l); }

enum class Split { Unassigned, Train, Val, Test };
enum class Provenance { Original, Preprocessed, Augmented };
enum class AugmentOp { Rot90, Rot180, Rot270, FlipH, FlipV };

inline constexpr std::array<AugmentOp, 5> kAllAugmentOps = {
    AugmentOp::Rot90, AugmentOp::Rot180, AugmentOp::Rot270, AugmentOp::FlipH, AugmentOp::FlipV};

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::Unassigned: return "unassigned";
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

inline std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Original: return "original";
    case Provenance::Preprocessed: return "preprocessed";
    case Provenance::Augmented: return "augmented";
  }
  return "?";
}

inline std::string_view augment_op_name(AugmentOp op) {
  switch (op) {
    case AugmentOp::Rot90: return "rot90";
    case AugmentOp::Rot180: return "rot180";
    case AugmentOp::Rot270: return "rot270";
    case AugmentOp::FlipH: return "hflip";
    case AugmentOp::FlipV: return "vflip";
  }
  return "?";
}

namespace detail {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<E, N>& values,
             std::string_view (*name)(E), const char* what) {
  for (auto v : values) {
    if (name(v) == s) return v;
  }
  throw Error(Errc::ParseError, std::string("unknown ") + what + " '" + std::string(s) + "'");
}

}  // namespace detail

inline Split parse_split(std::string_view s) {
  return detail::parse_enum(s, std::array{Split::Unassigned, Split::Train, Split::Val, Split::Test},
                            split_name, "split");
}

inline Provenance parse_provenance(std::string_view s) {
  return detail::parse_enum(
      s, std::array{Provenance::Original, Provenance::Preprocessed, Provenance::Augmented},
      provenance_name, "provenance");
}

inline AugmentOp parse_augment_op(std::string_view s) {
  return detail::parse_enum(s, kAllAugmentOps, augment_op_name, "augment op");
}

struct ManifestRecord {
  std::string path;
  ClassLabel label = ClassLabel::Benign;
  Split split = Split::Unassigned;
  Provenance provenance = Provenance::Original;
  std::optional<AugmentOp> augment_op;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct SplitCounts {
  // [class][split], split indexed by the Split enum
  std::array<std::array<std::size_t, 4>, kNumClasses> by_class{};

  std::size_t total(Split s) const {
    std::size_t n = 0;
    for (const auto& c : by_class) n += c[static_cast<std::size_t>(s)];
    return n;
  }
  std::size_t of(ClassLabel l, Split s) const {
    return by_class[label_index(l)][static_cast<std::size_t>(s)];
  }
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;

  SplitCounts counts() const {
    SplitCounts c;
    for (const auto& r : records) ++c.by_class[label_index(r.label)][static_cast<std::size_t>(r.split)];
    return c;
  }

  /// Unique paths; the test split holds originals only.
  void validate() const {
    std::set<std::string> seen;
    for (const auto& r : records) {
      if (!seen.insert(r.path).second) {
        throw Error(Errc::InvalidArgument, "duplicate manifest path " + r.path);
      }
      if (r.split == Split::Test && r.provenance != Provenance::Original) {
        throw Error(Errc::InvalidArgument, "non-original record in test split: " + r.path);
      }
    }
  }

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

// ---- JSON lines -------------------------------------------------------------

inline nlohmann::ordered_json record_to_json(const ManifestRecord& r) {
  nlohmann::ordered_json j;
  j["path"] = r.path;
  j["label"] = std::string(label_name(r.label));
  j["split"] = std::string(split_name(r.split));
  j["provenance"] = std::string(provenance_name(r.provenance));
  if (r.augment_op) {
    j["augment_op"] = std::string(augment_op_name(*r.augment_op));
  } else {
    j["augment_op"] = nullptr;
  }
  return j;
}

inline ManifestRecord record_from_json(const nlohmann::json& j) {
  static const std::set<std::string> keys = {"path", "label", "split", "provenance",
                                             "augment_op"};
  if (!j.is_object() || j.size() != keys.size()) {
    throw Error(Errc::ParseError, "manifest record must have exactly 5 fields");
  }
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) throw Error(Errc::ParseError, "unexpected manifest field '" + k + "'");
  }
  try {
    ManifestRecord r;
    r.path = j.at("path").get<std::string>();
    r.label = parse_label(j.at("label").get<std::string>());
    r.split = parse_split(j.at("split").get<std::string>());
    r.provenance = parse_provenance(j.at("provenance").get<std::string>());
    if (!j.at("augment_op").is_null()) {
      r.augment_op = parse_augment_op(j.at("augment_op").get<std::string>());
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
}

inline std::string manifest_to_jsonl(const DatasetManifest& m) {
  std::string out;
  for (const auto& r : m.records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline DatasetManifest manifest_from_jsonl(std::istream& in) {
  DatasetManifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      m.records.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ParseError, "manifest line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(Errc::ParseError, "manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

inline void write_manifest(const DatasetManifest& m, const fs::path& path) {
  const std::string text = manifest_to_jsonl(m);
  detail::write_file_bytes(
      path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline DatasetManifest read_manifest(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw Error(Errc::FileNotFound, path.string());
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  return manifest_from_jsonl(in);
}

// ---- operations ---------------------------------------------------------------

namespace detail {

inline std::vector<fs::path> sorted_images_in(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && has_image_extension(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// Fisher-Yates with a portable bounded draw.
template <typename T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed, std::uint64_t stream) {
  std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * (stream + 1)));
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(
        static_cast<double>(rng() >> 11) * 0x1.0p-53 * static_cast<double>(i));
    std::swap(v[i - 1], v[std::min(j, i - 1)]);
  }
}

}  // namespace detail

/// One record per image under root/<ClassLabel>/, split unassigned.
inline DatasetManifest build_manifest(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw Error(Errc::FileNotFound, root.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::map<ClassLabel, std::vector<fs::path>> files;
  for (const auto& d : dirs) {
    const auto label = try_parse_label(d.filename().string());
    if (!label) {
      throw Error(Errc::UnknownClassDirectory, d.filename().string() + " in " + root.string());
    }
    files[*label] = detail::sorted_images_in(d);
  }
  DatasetManifest m;
  for (auto l : kAllLabels) {
    auto it = files.find(l);
    if (it == files.end() || it->second.empty()) {
      throw Error(Errc::EmptyClass, "no images for class " + std::string(label_name(l)));
    }
    for (const auto& p : it->second) {
      m.records.push_back({p.generic_string(), l, Split::Unassigned, Provenance::Original, {}});
    }
  }
  return m;
}

/// Partitions every non-test record into train/val per class. Each class
/// gets round(val_frac * pool) validation records chosen by `seed`.
inline void assign_train_val(DatasetManifest& m, double val_frac, std::uint64_t seed) {
  if (!(val_frac >= 0.0 && val_frac < 1.0)) {
    throw Error(Errc::InvalidArgument, "val_frac must be in [0,1)");
  }
  for (auto l : kAllLabels) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < m.records.size(); ++i) {
      if (m.records[i].label == l && m.records[i].split != Split::Test) pool.push_back(i);
    }
    detail::seeded_shuffle(pool, seed, 100 + label_index(l));
    const auto n_val = static_cast<std::size_t>(
        std::llround(val_frac * static_cast<double>(pool.size())));
    for (std::size_t j = 0; j < pool.size(); ++j) {
      m.records[pool[j]].split = j < n_val ? Split::Val : Split::Train;
    }
  }
}

/// Holds out exactly `test_per_class` originals per class, then splits the
/// rest into train/val. Any previous assignment is discarded.
inline DatasetManifest stratified_split(DatasetManifest m, std::size_t test_per_class,
                                        double val_frac, std::uint64_t seed) {
  for (auto l : kAllLabels) {
    std::vector<std::size_t> originals;
    for (std::size_t i = 0; i < m.records.size(); ++i) {
      auto& r = m.records[i];
      if (r.label != l) continue;
      r.split = Split::Unassigned;
      if (r.provenance == Provenance::Original) originals.push_back(i);
    }
    if (originals.size() <= test_per_class) {
      throw Error(Errc::InsufficientSamples,
                  std::string(label_name(l)) + " has " + std::to_string(originals.size()) +
                      " originals; need more than " + std::to_string(test_per_class));
    }
    detail::seeded_shuffle(originals, seed, label_index(l));
    for (std::size_t j = 0; j < test_per_class; ++j) m.records[originals[j]].split = Split::Test;
  }
  assign_train_val(m, val_frac, seed);
  m.validate();
  return m;
}

/// Adds <pre_root>/<Label>/<stem>.png for every non-test original that has
/// one. Preprocessed copies of test images are never added.
inline std::size_t merge_preprocessed(DatasetManifest& m, const fs::path& pre_root) {
  std::set<std::string> present;
  for (const auto& r : m.records) present.insert(r.path);
  std::vector<ManifestRecord> added;
  for (const auto& r : m.records) {
    if (r.provenance != Provenance::Original || r.split == Split::Test) continue;
    fs::path candidate = pre_root / std::string(label_name(r.label)) / fs::path(r.path).filename();
    candidate.replace_extension(".png");
    std::error_code ec;
    if (fs::is_regular_file(candidate, ec) && !present.count(candidate.generic_string())) {
      added.push_back({candidate.generic_string(), r.label, Split::Train, Provenance::Preprocessed, {}});
      present.insert(candidate.generic_string());
    }
  }
  m.records.insert(m.records.end(), added.begin(), added.end());
  return added.size();
}

inline RasterImage apply_augment(const RasterImage& img, AugmentOp op) {
  const int w = img.width(), h = img.height();
  const bool swap = op == AugmentOp::Rot90 || op == AugmentOp::Rot270;
  RasterImage out(swap ? h : w, swap ? w : h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int nx = x, ny = y;
      switch (op) {
        case AugmentOp::Rot90: nx = h - 1 - y; ny = x; break;  // clockwise
        case AugmentOp::Rot180: nx = w - 1 - x; ny = h - 1 - y; break;
        case AugmentOp::Rot270: nx = y; ny = w - 1 - x; break;
        case AugmentOp::FlipH: nx = w - 1 - x; break;
        case AugmentOp::FlipV: ny = h - 1 - y; break;
      }
      out.set_pixel(nx, ny, img.pixel(x, y));
    }
  }
  return out;
}

struct AugmentOptions {
  std::size_t target_per_class = 1800;
  std::vector<AugmentOp> ops{kAllAugmentOps.begin(), kAllAugmentOps.end()};
  std::uint64_t seed = 0;
  fs::path out_dir;          // augmented images go to out_dir/<Label>/
  double val_frac = 0.1;     // train/val re-partition of the augmented pool
  bool write_images = true;  // false: manifest arithmetic only
  int jobs = 1;
};

struct AugmentResult {
  DatasetManifest manifest;
  std::size_t written = 0;
};

/// Grows every class's train+val pool to exactly `target_per_class` records.
/// Sources are that pool's original/preprocessed records in seeded order;
/// new record i uses source i mod n with op (i / n) mod |ops|.
inline AugmentResult augment_to_target(DatasetManifest m, const AugmentOptions& opt) {
  if (opt.ops.empty()) throw Error(Errc::InvalidArgument, "augment: empty op set");
  struct Job {
    fs::path src;
    fs::path dst;
    AugmentOp op;
  };
  std::vector<Job> jobs;
  std::vector<ManifestRecord> added;
  for (auto l : kAllLabels) {
    std::vector<std::size_t> pool, sources;
    for (std::size_t i = 0; i < m.records.size(); ++i) {
      const auto& r = m.records[i];
      if (r.label != l || r.split == Split::Test) continue;
      pool.push_back(i);
      if (r.provenance != Provenance::Augmented) sources.push_back(i);
    }
    if (opt.target_per_class < pool.size()) {
      throw Error(Errc::TargetBelowCurrent,
                  std::string(label_name(l)) + " already has " + std::to_string(pool.size()) +
                      " train+val records, target is " + std::to_string(opt.target_per_class));
    }
    const std::size_t needed = opt.target_per_class - pool.size();
    if (needed == 0) continue;
    if (sources.empty()) {
      throw Error(Errc::InsufficientSamples,
                  std::string(label_name(l)) + " has no source images to augment");
    }
    detail::seeded_shuffle(sources, opt.seed, 200 + label_index(l));
    for (std::size_t i = 0; i < needed; ++i) {
      const auto& src = m.records[sources[i % sources.size()]];
      const AugmentOp op = opt.ops[(i / sources.size()) % opt.ops.size()];
      char idx[24];
      std::snprintf(idx, sizeof idx, "%06zu", i);
      const fs::path dst = opt.out_dir / std::string(label_name(l)) /
                           ("aug_" + std::string(idx) + "_" + fs::path(src.path).stem().string() +
                            "_" + std::string(augment_op_name(op)) + ".png");
      added.push_back({dst.generic_string(), l, Split::Train, Provenance::Augmented, op});
      jobs.push_back({src.path, dst, op});
    }
  }
  m.records.insert(m.records.end(), added.begin(), added.end());
  m.validate();

  AugmentResult res;
  if (opt.write_images && !jobs.empty()) {
    for (auto l : kAllLabels) fs::create_directories(opt.out_dir / std::string(label_name(l)));
    parallel_for(jobs.size(), opt.jobs, [&](std::size_t i) {
      save_image(apply_augment(load_image(jobs[i].src), jobs[i].op), jobs[i].dst);
    });
    res.written = jobs.size();
  }
  assign_train_val(m, opt.val_frac, opt.seed);
  res.manifest = std::move(m);
  return res;
}

}  // namespace allprep
