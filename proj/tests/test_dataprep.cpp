#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "test_support.hpp"

using namespace allprep;
using allprep::testing::TempDir;
using allprep::testing::make_tree;

namespace {

DatasetManifest synthetic_manifest(std::size_t per_class) {
  DatasetManifest m;
  for (auto l : kAllLabels) {
    for (std::size_t i = 0; i < per_class; ++i) {
      m.records.push_back({std::string(label_name(l)) + "/o" + std::to_string(i) + ".png", l,
                           Split::Unassigned, Provenance::Original, {}});
    }
  }
  return m;
}

std::size_t count_if(const DatasetManifest& m, auto pred) {
  return static_cast<std::size_t>(std::count_if(m.records.begin(), m.records.end(), pred));
}

AugmentOptions arithmetic_only(std::size_t target, std::uint64_t seed = 0) {
  AugmentOptions o;
  o.target_per_class = target;
  o.seed = seed;
  o.write_images = false;
  o.out_dir = "aug";
  return o;
}

}  // namespace

TEST(Labels, NamesRoundTrip) {
  for (auto l : kAllLabels) EXPECT_EQ(parse_label(label_name(l)), l);
  EXPECT_FALSE(try_parse_label("Other").has_value());
  try {
    parse_label("T-cell");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownLabel);
  }
}

TEST(BuildManifest, CountsFilesPerClass) {
  TempDir tmp;
  make_tree(tmp.path(), {3, 3, 3, 3});
  const auto m = build_manifest(tmp.path());
  EXPECT_EQ(m.records.size(), 12u);
  for (const auto& r : m.records) {
    EXPECT_EQ(r.split, Split::Unassigned);
    EXPECT_EQ(r.provenance, Provenance::Original);
  }
}

TEST(BuildManifest, PublishedClassCounts) {
  TempDir tmp;
  make_tree(tmp.path(), {512, 979, 955, 796});
  const auto m = build_manifest(tmp.path());
  EXPECT_EQ(m.records.size(), 3242u);
  EXPECT_EQ(m.counts().of(ClassLabel::EarlyPreB, Split::Unassigned), 979u);
}

TEST(BuildManifest, RejectsUnknownAndEmptyClasses) {
  TempDir a;
  make_tree(a.path(), {1, 1, 1, 1});
  fs::create_directory(a / "Other");
  try {
    build_manifest(a.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownClassDirectory);
  }
  TempDir b;
  make_tree(b.path(), {1, 0, 1, 1});
  try {
    build_manifest(b.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyClass);
  }
  EXPECT_THROW(build_manifest(b / "nope"), Error);
}

TEST(Split, HoldsOutOriginalsPerClass) {
  const auto m = stratified_split(synthetic_manifest(1800), 100, 0.1, 7);
  const auto c = m.counts();
  for (auto l : kAllLabels) {
    EXPECT_EQ(c.of(l, Split::Test), 100u);
    EXPECT_EQ(c.of(l, Split::Val), 170u);
    EXPECT_EQ(c.of(l, Split::Train), 1530u);
    EXPECT_EQ(c.of(l, Split::Unassigned), 0u);
  }
}

TEST(Split, AugmentedPoolReachesPublishedCounts) {
  const auto split = stratified_split(synthetic_manifest(1800), 100, 0.1, 7);
  const auto res = augment_to_target(split, arithmetic_only(1800, 7));
  const auto c = res.manifest.counts();
  EXPECT_EQ(c.total(Split::Train), 6480u);
  EXPECT_EQ(c.total(Split::Val), 720u);
  EXPECT_EQ(c.total(Split::Test), 400u);
  EXPECT_EQ(res.written, 0u);
}

TEST(Split, DeterministicUnderSeed) {
  const auto a = stratified_split(synthetic_manifest(300), 100, 0.1, 5);
  const auto b = stratified_split(synthetic_manifest(300), 100, 0.1, 5);
  const auto c = stratified_split(synthetic_manifest(300), 100, 0.1, 6);
  EXPECT_EQ(manifest_to_jsonl(a), manifest_to_jsonl(b));
  EXPECT_NE(manifest_to_jsonl(a), manifest_to_jsonl(c));
}

TEST(Split, InsufficientOriginals) {
  auto m = synthetic_manifest(120);
  m.records.erase(std::remove_if(m.records.begin(), m.records.end(),
                                 [n = 0](const ManifestRecord& r) mutable {
                                   return r.label == ClassLabel::PreB && n++ < 70;
                                 }),
                  m.records.end());
  try {
    stratified_split(m, 100, 0.1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InsufficientSamples);
  }
}

TEST(Augment, GrowsOriginalPlusPreprocessedPairsToTarget) {
  DatasetManifest m;
  for (auto l : kAllLabels) {
    const std::string n(label_name(l));
    for (int i = 0; i < 100; ++i) m.records.push_back({n + "/t" + std::to_string(i), l, Split::Test, Provenance::Original, {}});
    for (int i = 0; i < 412; ++i) {
      m.records.push_back({n + "/o" + std::to_string(i), l, Split::Train, Provenance::Original, {}});
      m.records.push_back({"pre/" + n + "/o" + std::to_string(i), l, Split::Train, Provenance::Preprocessed, {}});
    }
  }
  const auto res = augment_to_target(m, arithmetic_only(1800));
  const auto& out = res.manifest;
  for (auto l : kAllLabels) {
    const auto pool = count_if(out, [&](const ManifestRecord& r) { return r.label == l && r.split != Split::Test; });
    EXPECT_EQ(pool, 1800u);
    const auto aug = count_if(out, [&](const ManifestRecord& r) {
      return r.label == l && r.provenance == Provenance::Augmented;
    });
    EXPECT_EQ(aug, 1800u - 824u);
  }
  EXPECT_EQ(count_if(out, [](const ManifestRecord& r) {
              return r.split == Split::Test && r.provenance != Provenance::Original;
            }),
            0u);
  EXPECT_EQ(out.counts().total(Split::Test), 400u);
  EXPECT_EQ(out.counts().total(Split::Val) + out.counts().total(Split::Train), 7200u);
}

TEST(Augment, OpsCycleOverSources) {
  DatasetManifest m;
  for (auto l : kAllLabels) {
    for (int i = 0; i < 3; ++i) {
      m.records.push_back({std::string(label_name(l)) + "/s" + std::to_string(i) + ".png", l,
                           Split::Train, Provenance::Original, {}});
    }
  }
  const auto res = augment_to_target(m, arithmetic_only(3 + 11));
  std::vector<AugmentOp> ops;
  for (const auto& r : res.manifest.records) {
    if (r.label == ClassLabel::Benign && r.augment_op) ops.push_back(*r.augment_op);
  }
  ASSERT_EQ(ops.size(), 11u);
  for (std::size_t i = 0; i < ops.size(); ++i) EXPECT_EQ(ops[i], kAllAugmentOps[(i / 3) % 5]) << i;
}

TEST(Augment, NoOpAtTargetAndRejectsShrinking) {
  const auto split = stratified_split(synthetic_manifest(150), 100, 0.2, 1);
  const auto same = augment_to_target(split, arithmetic_only(50));
  EXPECT_EQ(same.manifest.records.size(), split.records.size());
  EXPECT_EQ(same.written, 0u);
  try {
    augment_to_target(split, arithmetic_only(49));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TargetBelowCurrent);
  }
}

TEST(Augment, WritesTransformedImages) {
  TempDir tmp;
  std::mt19937_64 rng(3);
  for (auto l : kAllLabels) {
    fs::create_directories(tmp / "src" / std::string(label_name(l)));
    for (int i = 0; i < 2; ++i) {
      RasterImage img(5, 3);
      for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng());
      save_image(img, tmp / "src" / std::string(label_name(l)) / ("p" + std::to_string(i) + ".png"));
    }
  }
  auto m = build_manifest(tmp / "src");
  for (auto& r : m.records) r.split = Split::Train;
  AugmentOptions o;
  o.target_per_class = 6;
  o.out_dir = tmp / "aug";
  o.jobs = 3;
  const auto res = augment_to_target(m, o);
  EXPECT_EQ(res.written, 16u);
  for (const auto& r : res.manifest.records) {
    if (r.provenance != Provenance::Augmented) continue;
    ASSERT_TRUE(fs::exists(r.path)) << r.path;
    const auto img = load_image(r.path);
    const bool swapped = *r.augment_op == AugmentOp::Rot90 || *r.augment_op == AugmentOp::Rot270;
    EXPECT_EQ(img.width(), swapped ? 3 : 5);
  }
}

TEST(AugmentOps, GroupIdentities) {
  std::mt19937_64 rng(4);
  RasterImage img(7, 4);
  for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng());
  auto twice = [&](AugmentOp op) { return apply_augment(apply_augment(img, op), op); };
  EXPECT_EQ(twice(AugmentOp::Rot180), img);
  EXPECT_EQ(twice(AugmentOp::FlipH), img);
  EXPECT_EQ(twice(AugmentOp::FlipV), img);
  EXPECT_EQ(apply_augment(apply_augment(img, AugmentOp::Rot90), AugmentOp::Rot270), img);
  EXPECT_EQ(twice(AugmentOp::Rot90), apply_augment(img, AugmentOp::Rot180));
  RasterImage two(2, 1);
  two.set_pixel(0, 0, {1, 1, 1});
  two.set_pixel(1, 0, {2, 2, 2});
  const auto cw = apply_augment(two, AugmentOp::Rot90);
  ASSERT_EQ(cw.width(), 1);
  EXPECT_EQ(cw.pixel(0, 0), (Rgb{1, 1, 1}));
  EXPECT_EQ(cw.pixel(0, 1), (Rgb{2, 2, 2}));
}

TEST(Manifest, JsonlRoundTripAndFieldSet) {
  auto m = stratified_split(synthetic_manifest(110), 100, 0.1, 2);
  m.records.push_back({"aug/x.png", ClassLabel::ProB, Split::Train, Provenance::Augmented, AugmentOp::FlipV});
  const auto text = manifest_to_jsonl(m);
  std::istringstream in(text);
  EXPECT_EQ(manifest_from_jsonl(in), m);
  const auto first = text.substr(0, text.find('\n'));
  EXPECT_EQ(first.find("{\"path\":"), 0u);
  EXPECT_NE(first.find("\"augment_op\":null"), std::string::npos);
  const auto j = nlohmann::json::parse(first);
  EXPECT_EQ(j.size(), 5u);
}

TEST(Manifest, ParseErrorsNameTheLine) {
  std::istringstream bad(
      "{\"path\":\"a\",\"label\":\"Benign\",\"split\":\"train\",\"provenance\":\"original\",\"augment_op\":null}\n"
      "{\"path\":\"b\",\"label\":\"Benign\",\"split\":\"train\"}\n");
  try {
    manifest_from_jsonl(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  std::istringstream label("{\"path\":\"a\",\"label\":\"Blast\",\"split\":\"train\",\"provenance\":\"original\",\"augment_op\":null}\n");
  EXPECT_THROW(manifest_from_jsonl(label), Error);
  EXPECT_THROW(read_manifest("/definitely/missing.jsonl"), Error);
}

TEST(Manifest, ValidateCatchesDuplicatesAndImpureTest) {
  DatasetManifest m = synthetic_manifest(1);
  m.records.push_back(m.records.front());
  EXPECT_THROW(m.validate(), Error);
  DatasetManifest t = synthetic_manifest(1);
  t.records[0].split = Split::Test;
  t.records[0].provenance = Provenance::Augmented;
  EXPECT_THROW(t.validate(), Error);
}

TEST(Merge, AddsOnlyNonTestPreprocessedCopies) {
  TempDir tmp;
  make_tree(tmp / "raw", {3, 3, 3, 3});
  auto m = stratified_split(build_manifest(tmp / "raw"), 1, 0.0, 0);
  for (auto l : kAllLabels) {
    fs::create_directories(tmp / "pre" / std::string(label_name(l)));
    for (int i = 0; i < 3; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "img_%05d.png", i);
      std::ofstream(tmp / "pre" / std::string(label_name(l)) / name).put('x');
    }
  }
  const auto added = merge_preprocessed(m, tmp / "pre");
  EXPECT_EQ(added, 8u);
  m.validate();
  EXPECT_EQ(merge_preprocessed(m, tmp / "pre"), 0u);
}

TEST(Split, ValFractionValidation) {
  auto m = synthetic_manifest(5);
  EXPECT_THROW(assign_train_val(m, 1.0, 0), Error);
  EXPECT_THROW(assign_train_val(m, -0.1, 0), Error);
}
