#pragma once

// End-to-end smear preprocessing:
//   resize -> LAB -> a* K-means -> reconstruct -> foreground selection ->
//   threshold -> morphology -> 0/255 mask -> mask application.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "allprep/cluster.hpp"
#include "allprep/colorspace.hpp"
#include "allprep/morphmask.hpp"
#include "allprep/parallel.hpp"
#include "allprep/raster.hpp"

namespace allprep {

struct PipelineConfig {
  Size target = kModelInputSize;
  int k = 7;
  std::uint64_t seed = 0;
  int max_iter = 300;
  double tol = 1e-4;
  ForegroundPolicy foreground = ForegroundPolicy::threshold(ThresholdSpec::otsu());
  StructuringElement se{3, SeShape::Square};
  std::vector<MorphStep> morph_order = default_morph_order();

  void validate() const {
    if (target.width < 1 || target.height < 1) {
      throw Error(Errc::ZeroTarget, "target size must be non-zero");
    }
    if (k < 1 || k > 256) throw Error(Errc::InvalidArgument, "k must be in [1,256]");
    if (max_iter < 1) throw Error(Errc::InvalidArgument, "max_iter must be >= 1");
    if (!(tol >= 0.0)) throw Error(Errc::InvalidArgument, "tol must be >= 0");
    StructuringElement check(se.size, se.shape);
    (void)check;
  }
};

struct PipelineResult {
  RasterImage resized;
  LabImage lab;
  ClusterModel model;
  Plane clustered;
  std::optional<int> threshold;  // absent when foreground came straight from selection
  BinaryMask binary;
  BinaryMask mask;
  Plane mask_u8;
  RasterImage output;
  std::vector<std::string> warnings;
};

inline PipelineResult run_pipeline(const RasterImage& input, const PipelineConfig& cfg) {
  cfg.validate();
  PipelineResult r;
  r.resized = resize_bilinear(input, cfg.target);
  r.lab = rgb_to_lab(r.resized);
  auto [plane_l, plane_a, plane_b] = split_channels(r.lab);
  (void)plane_l;
  (void)plane_b;

  r.model = kmeans_1d(plane_a.data(), {cfg.k, cfg.seed, cfg.max_iter, cfg.tol});
  if (r.model.degenerate) {
    r.warnings.push_back("a* plane has only " + std::to_string(r.model.k) +
                         " distinct value(s); clustered with k=" + std::to_string(r.model.k) +
                         " instead of " + std::to_string(r.model.requested_k));
  }
  r.clustered = reconstruct_clustered(r.model, plane_a.width(), plane_a.height());

  auto selection = select_foreground(r.clustered, r.model, cfg.foreground);
  if (auto* spec = std::get_if<ThresholdSpec>(&selection)) {
    auto th = binary_threshold(r.clustered, *spec);
    if (th.constant_plane) {
      r.warnings.push_back("constant a* plane: all-background mask");
    }
    r.threshold = th.threshold;
    r.binary = std::move(th.mask);
  } else {
    r.binary = std::get<BinaryMask>(std::move(selection));
  }

  r.mask = apply_morphology(r.binary, cfg.morph_order, cfg.se);
  r.mask_u8 = to_u8_mask(r.mask);
  r.output = apply_mask(r.resized, r.mask);
  return r;
}

// ---- config (JSON mirror of PipelineConfig) ---------------------------------

inline std::string morph_step_name(MorphStep s) {
  switch (s) {
    case MorphStep::FillHoles: return "fill";
    case MorphStep::Open: return "open";
    case MorphStep::Close: return "close";
  }
  return "?";
}

inline MorphStep parse_morph_step(const std::string& s) {
  if (s == "fill") return MorphStep::FillHoles;
  if (s == "open") return MorphStep::Open;
  if (s == "close") return MorphStep::Close;
  throw Error(Errc::InvalidArgument, "unknown morphology step '" + s + "' (fill|open|close)");
}

inline std::vector<MorphStep> parse_morph_order(const std::string& csv) {
  std::vector<MorphStep> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto comma = csv.find(',', start);
    const auto tok = csv.substr(start, comma == std::string::npos ? std::string::npos
                                                                  : comma - start);
    if (!tok.empty()) out.push_back(parse_morph_step(tok));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

/// "otsu" or an integer in [0,255].
inline ThresholdSpec parse_threshold(const std::string& s) {
  if (s == "otsu") return ThresholdSpec::otsu();
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw Error(Errc::InvalidArgument, "threshold must be 'otsu' or an integer, got '" + s + "'");
  }
  return ThresholdSpec::fixed(v);
}

inline ForegroundPolicy::Kind parse_foreground(const std::string& s) {
  if (s == "max-a") return ForegroundPolicy::Kind::MaxA;
  if (s == "threshold") return ForegroundPolicy::Kind::Threshold;
  throw Error(Errc::InvalidArgument, "foreground must be max-a|threshold, got '" + s + "'");
}

inline SeShape parse_se_shape(const std::string& s) {
  if (s == "square") return SeShape::Square;
  if (s == "disk") return SeShape::Disk;
  throw Error(Errc::InvalidArgument, "se shape must be square|disk, got '" + s + "'");
}

inline nlohmann::ordered_json config_to_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["width"] = c.target.width;
  j["height"] = c.target.height;
  j["k"] = c.k;
  j["seed"] = c.seed;
  j["max_iter"] = c.max_iter;
  j["tol"] = c.tol;
  if (c.foreground.spec.mode == ThresholdSpec::Mode::Otsu) {
    j["threshold"] = "otsu";
  } else {
    j["threshold"] = c.foreground.spec.value;
  }
  j["foreground"] = c.foreground.kind == ForegroundPolicy::Kind::MaxA ? "max-a" : "threshold";
  j["se_size"] = c.se.size;
  j["se_shape"] = c.se.shape == SeShape::Square ? "square" : "disk";
  auto order = nlohmann::ordered_json::array();
  for (auto s : c.morph_order) order.push_back(morph_step_name(s));
  j["morph_order"] = order;
  return j;
}

/// Overlays keys present in j onto base.
inline PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {}) {
  try {
    if (j.contains("width")) base.target.width = j.at("width").get<int>();
    if (j.contains("height")) base.target.height = j.at("height").get<int>();
    if (j.contains("k")) base.k = j.at("k").get<int>();
    if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("max_iter")) base.max_iter = j.at("max_iter").get<int>();
    if (j.contains("tol")) base.tol = j.at("tol").get<double>();
    if (j.contains("threshold")) {
      const auto& t = j.at("threshold");
      base.foreground.spec = t.is_string() ? parse_threshold(t.get<std::string>())
                                           : ThresholdSpec::fixed(t.get<int>());
    }
    if (j.contains("foreground")) {
      base.foreground.kind = parse_foreground(j.at("foreground").get<std::string>());
    }
    if (j.contains("se_size")) base.se.size = j.at("se_size").get<int>();
    if (j.contains("se_shape")) base.se.shape = parse_se_shape(j.at("se_shape").get<std::string>());
    if (j.contains("morph_order")) {
      base.morph_order.clear();
      for (const auto& s : j.at("morph_order")) {
        base.morph_order.push_back(parse_morph_step(s.get<std::string>()));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("pipeline config: ") + e.what());
  }
  base.validate();
  return base;
}

// ---- batch processing ---------------------------------------------------------

struct BatchItem {
  fs::path input;
  fs::path relative;  // output location relative to the output directory
};

/// A single file, or every JPG/PNG below a directory in sorted path order.
inline std::vector<BatchItem> collect_inputs(const fs::path& input) {
  std::error_code ec;
  if (fs::is_regular_file(input, ec)) return {{input, input.filename()}};
  if (!fs::is_directory(input, ec)) throw Error(Errc::FileNotFound, input.string());
  std::vector<BatchItem> items;
  for (const auto& e : fs::recursive_directory_iterator(input)) {
    if (e.is_regular_file() && has_image_extension(e.path())) {
      items.push_back({e.path(), fs::relative(e.path(), input)});
    }
  }
  std::sort(items.begin(), items.end(),
            [](const BatchItem& a, const BatchItem& b) { return a.relative < b.relative; });
  return items;
}

struct BatchOptions {
  int jobs = 1;
  bool debug_stages = false;
  bool dump_centroids = false;
};

struct ImageReport {
  fs::path input;
  fs::path output;
  bool ok = false;
  std::string error;
  std::vector<std::string> warnings;
  std::optional<int> threshold;
  std::vector<double> centroids;
  std::size_t foreground_pixels = 0;
};

inline ImageReport preprocess_one(const BatchItem& item, const fs::path& out_dir,
                                  const PipelineConfig& cfg, const BatchOptions& opts) {
  ImageReport rep;
  rep.input = item.input;
  fs::path rel = item.relative;
  rel.replace_extension(".png");
  rep.output = out_dir / rel;
  try {
    const auto img = load_image(item.input);
    const auto r = run_pipeline(img, cfg);
    fs::create_directories(rep.output.parent_path());
    save_image(r.output, rep.output);
    if (opts.debug_stages) {
      auto stage = [&](const char* tag) {
        fs::path p = rep.output;
        p.replace_extension(std::string(".") + tag + ".png");
        return p;
      };
      save_image(r.resized, stage("resized"));
      save_image(r.lab.A, stage("a"));
      save_image(r.clustered, stage("clustered"));
      save_image(r.binary, stage("binary"));
      save_image(r.mask_u8, stage("mask"));
    }
    if (opts.dump_centroids) {
      fs::path p = rep.output;
      p.replace_extension(".centroids.json");
      const std::string text = nlohmann::json(r.model.centroids).dump() + "\n";
      detail::write_file_bytes(
          p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    }
    rep.ok = true;
    rep.warnings = r.warnings;
    rep.threshold = r.threshold;
    rep.centroids = r.model.centroids;
    rep.foreground_pixels = r.mask.count();
  } catch (const std::exception& e) {
    rep.ok = false;
    rep.error = e.what();
  }
  return rep;
}

/// Reports come back in input order regardless of `jobs`.
inline std::vector<ImageReport> preprocess_batch(const std::vector<BatchItem>& items,
                                                 const fs::path& out_dir,
                                                 const PipelineConfig& cfg,
                                                 const BatchOptions& opts) {
  cfg.validate();
  std::vector<ImageReport> reports(items.size());
  parallel_for(items.size(), opts.jobs, [&](std::size_t i) {
    reports[i] = preprocess_one(items[i], out_dir, cfg, opts);
  });
  return reports;
}

}  // namespace allprep
