#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace allprep;
using allprep::testing::TempDir;
using allprep::testing::iou;
using allprep::testing::make_smear;

TEST(Pipeline, FixtureNucleusIsRecovered) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto f = make_smear(seed);
    const auto r = run_pipeline(f.image, {});
    EXPECT_GE(iou(r.mask, f.truth), 0.95) << "seed " << seed;
    std::size_t kept = 0, nucleus = 0, zeroed = 0, background = 0;
    for (int y = 0; y < 224; ++y) {
      for (int x = 0; x < 224; ++x) {
        if (f.truth.get(x, y)) {
          ++nucleus;
          kept += r.mask.get(x, y);
        } else {
          ++background;
          zeroed += !r.mask.get(x, y);
          if (!r.mask.get(x, y)) {
            EXPECT_EQ(r.output.pixel(x, y), (Rgb{0, 0, 0}));
          }
        }
      }
    }
    EXPECT_GE(static_cast<double>(kept) / nucleus, 0.95);
    EXPECT_GE(static_cast<double>(zeroed) / background, 0.95);
    EXPECT_TRUE(r.warnings.empty());
  }
}

TEST(Pipeline, StagesHaveModelInputShape) {
  const auto f = make_smear(1, 300);
  const auto r = run_pipeline(f.image, {});
  EXPECT_EQ(r.resized.size(), kModelInputSize);
  EXPECT_EQ(r.clustered.size(), kModelInputSize);
  EXPECT_EQ(r.mask.size(), kModelInputSize);
  EXPECT_EQ(r.output.size(), kModelInputSize);
  EXPECT_EQ(r.model.k, 7);
  for (auto v : r.mask_u8.data()) EXPECT_TRUE(v == 0 || v == 255);
}

TEST(Pipeline, MaxAPolicyStillFindsTheNucleusCore) {
  const auto f = make_smear(2);
  PipelineConfig cfg;
  cfg.foreground = ForegroundPolicy::max_a();
  const auto r = run_pipeline(f.image, cfg);
  ASSERT_TRUE(r.threshold.has_value());
  // The top a* cluster is a sliver of the nucleus; opening may erase it.
  EXPECT_GT(r.binary.count(), 0u);
  EXPECT_TRUE(r.binary.subset_of(dilate(f.truth, StructuringElement(5))));
  EXPECT_TRUE(r.mask.subset_of(dilate(f.truth, StructuringElement(5))));
}

TEST(Pipeline, AllGrayImageWarnsAndMasksEverything) {
  const RasterImage gray(64, 48, Rgb{128, 128, 128});
  const auto r = run_pipeline(gray, {});
  EXPECT_EQ(r.mask.count(), 0u);
  EXPECT_EQ(r.output, RasterImage(224, 224));
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_EQ(r.warnings.back(), "constant a* plane: all-background mask");
  EXPECT_TRUE(r.model.degenerate);
}

TEST(Pipeline, ConfigValidation) {
  PipelineConfig c;
  c.k = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.target = {0, 10};
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ZeroTarget);
  }
  c = {};
  EXPECT_THROW(c.se = StructuringElement(2), Error);
}

TEST(PipelineConfig, ParsersAcceptAndReject) {
  EXPECT_EQ(parse_threshold("otsu").mode, ThresholdSpec::Mode::Otsu);
  EXPECT_EQ(parse_threshold("140").value, 140);
  EXPECT_THROW(parse_threshold("14x"), Error);
  EXPECT_THROW(parse_threshold(""), Error);
  EXPECT_EQ(parse_morph_order("close,fill"),
            (std::vector<MorphStep>{MorphStep::Close, MorphStep::FillHoles}));
  EXPECT_TRUE(parse_morph_order("").empty());
  EXPECT_THROW(parse_morph_order("open,erode"), Error);
  EXPECT_EQ(parse_se_shape("disk"), SeShape::Disk);
  EXPECT_THROW(parse_se_shape("cross"), Error);
  EXPECT_EQ(parse_foreground("max-a"), ForegroundPolicy::Kind::MaxA);
  EXPECT_THROW(parse_foreground("min-a"), Error);
}

TEST(PipelineConfig, JsonRoundTrip) {
  PipelineConfig c;
  c.k = 5;
  c.seed = 99;
  c.target = {128, 96};
  c.foreground = ForegroundPolicy::threshold(ThresholdSpec::fixed(150));
  c.se = StructuringElement(5, SeShape::Disk);
  c.morph_order = {MorphStep::Close, MorphStep::Open};
  const auto j = config_to_json(c);
  const auto back = config_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(config_to_json(back).dump(), j.dump());
  EXPECT_EQ(j.dump(),
            R"({"width":128,"height":96,"k":5,"seed":99,"max_iter":300,"tol":0.0001,"threshold":150,)"
            R"("foreground":"threshold","se_size":5,"se_shape":"disk","morph_order":["close","open"]})");
}

TEST(PipelineConfig, PartialJsonOverlaysBase) {
  const auto c = config_from_json(nlohmann::json::parse(R"({"k": 3, "threshold": "otsu"})"));
  EXPECT_EQ(c.k, 3);
  EXPECT_EQ(c.se.size, 3);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"k": "three"})")), Error);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"se_size": 4})")), Error);
}

TEST(Batch, CollectsImagesInSortedOrder) {
  TempDir tmp;
  fs::create_directories(tmp / "in" / "sub");
  for (const char* name : {"b.png", "a.jpg", "sub/c.png", "notes.txt"}) {
    allprep::testing::spit(tmp / "in" / name, "x");
  }
  const auto items = collect_inputs(tmp / "in");
  ASSERT_EQ(items.size(), 3u);
  EXPECT_EQ(items[0].relative, fs::path("a.jpg"));
  EXPECT_EQ(items[1].relative, fs::path("b.png"));
  EXPECT_EQ(items[2].relative, fs::path("sub/c.png"));
  EXPECT_EQ(collect_inputs(tmp / "in" / "b.png").size(), 1u);
  EXPECT_THROW(collect_inputs(tmp / "missing"), Error);
}

TEST(Batch, ReportsPerFileErrorsAndWritesDebugStages) {
  TempDir tmp;
  fs::create_directories(tmp / "in");
  save_image(make_smear(4, 200).image, tmp / "in" / "good.png");
  allprep::testing::spit(tmp / "in" / "bad.png", "not a png");
  const auto items = collect_inputs(tmp / "in");
  const auto reports = preprocess_batch(items, tmp / "out", {}, {2, true, true});
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_FALSE(reports[0].ok);
  EXPECT_NE(reports[0].error.find("UnsupportedFormat"), std::string::npos);
  EXPECT_TRUE(reports[1].ok);
  for (const char* f : {"good.png", "good.resized.png", "good.a.png", "good.clustered.png",
                        "good.binary.png", "good.mask.png", "good.centroids.json"}) {
    EXPECT_TRUE(fs::exists(tmp / "out" / f)) << f;
  }
  const auto cents = nlohmann::json::parse(allprep::testing::slurp(tmp / "out" / "good.centroids.json"));
  EXPECT_EQ(cents.size(), 7u);
  EXPECT_EQ(load_mask(tmp / "out" / "good.mask.png").count(), reports[1].foreground_pixels);
}

TEST(Batch, JobsDoNotChangeOutputs) {
  TempDir tmp;
  fs::create_directories(tmp / "in");
  for (int i = 0; i < 6; ++i) save_image(make_smear(20 + i, 160).image, tmp / "in" / ("f" + std::to_string(i) + ".png"));
  const auto items = collect_inputs(tmp / "in");
  preprocess_batch(items, tmp / "o1", {}, {1, false, false});
  preprocess_batch(items, tmp / "o4", {}, {4, false, false});
  for (const auto& it : items) {
    fs::path rel = it.relative;
    EXPECT_EQ(allprep::testing::slurp(tmp / "o1" / rel), allprep::testing::slurp(tmp / "o4" / rel));
  }
}

TEST(Parallel, RunsEveryIndexAndRethrows) {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
                 if (i == 7) throw Error(Errc::IoError, "boom");
               }),
               Error);
}
