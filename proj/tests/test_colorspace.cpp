#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"

using namespace allprep;

namespace {

// Textbook sRGB -> XYZ -> L*a*b* with the D65 reference white written out
// explicitly, evaluated in long double.
std::array<long double, 3> reference_lab(Rgb px) {
  auto lin = [](int v) {
    const long double c = v / 255.0L;
    return c <= 0.04045L ? c / 12.92L : std::pow((c + 0.055L) / 1.055L, 2.4L);
  };
  const long double r = lin(px[0]), g = lin(px[1]), b = lin(px[2]);
  const long double x = 0.4124564L * r + 0.3575761L * g + 0.1804375L * b;
  const long double y = 0.2126729L * r + 0.7151522L * g + 0.0721750L * b;
  const long double z = 0.0193339L * r + 0.1191920L * g + 0.9503041L * b;
  auto f = [](long double t) {
    const long double d = 6.0L / 29.0L;
    return t > d * d * d ? std::cbrt(t) : t / (3 * d * d) + 4.0L / 29.0L;
  };
  const long double fx = f(x / 0.95047L), fy = f(y / 1.0L), fz = f(z / 1.08883L);
  return {116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz)};
}

std::array<int, 3> reference_lab8(Rgb px) {
  const auto lab = reference_lab(px);
  auto enc = [](long double v) { return static_cast<int>(std::clamp(std::floor(v + 0.5L), 0.0L, 255.0L)); };
  return {enc(lab[0] * 255 / 100), enc(lab[1] + 128), enc(lab[2] + 128)};
}

std::array<int, 3> lab8_of(Rgb px) {
  const auto e = encode_lab8(srgb_to_lab(px));
  return {e[0], e[1], e[2]};
}

}  // namespace

TEST(Colorspace, AnchorColours) {
  EXPECT_EQ(lab8_of({0, 0, 0}), (std::array<int, 3>{0, 128, 128}));
  EXPECT_EQ(lab8_of({255, 255, 255}), (std::array<int, 3>{255, 128, 128}));
  const auto gray = lab8_of({128, 128, 128});
  EXPECT_EQ(gray[1], 128);
  EXPECT_EQ(gray[2], 128);
  EXPECT_EQ(gray[0], 137);
  EXPECT_EQ(lab8_of({255, 0, 255}), (std::array<int, 3>{154, 226, 67}));
  EXPECT_EQ(lab8_of({150, 60, 160}), (std::array<int, 3>{106, 180, 91}));
  EXPECT_EQ(lab8_of({0, 255, 0}), (std::array<int, 3>{224, 42, 211}));
}

TEST(Colorspace, MatchesReferenceFormulaWithinOne) {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 20000; ++i) {
    const Rgb px{static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng()),
                 static_cast<std::uint8_t>(rng())};
    const auto got = lab8_of(px);
    const auto want = reference_lab8(px);
    for (int c = 0; c < 3; ++c) {
      ASSERT_LE(std::abs(got[c] - want[c]), 1)
          << "rgb " << int(px[0]) << "," << int(px[1]) << "," << int(px[2]) << " channel " << c;
    }
  }
}

TEST(Colorspace, MagentaHasPositiveAStar) {
  const auto magenta = srgb_to_lab({255, 0, 255});
  EXPECT_GT(magenta.a, 90.0);
  EXPECT_NEAR(srgb_to_lab({128, 128, 128}).a, 0.0, 1e-9);
}

TEST(Colorspace, NeutralAxisAndMonotoneLightness) {
  int last_l = -1;
  for (int g = 0; g < 256; ++g) {
    const auto e = lab8_of({static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(g),
                            static_cast<std::uint8_t>(g)});
    EXPECT_NEAR(e[1], 128, 1) << g;
    EXPECT_NEAR(e[2], 128, 1) << g;
    EXPECT_GE(e[0], last_l) << g;
    last_l = e[0];
  }
}

TEST(Colorspace, PlanesHaveImageShape) {
  const RasterImage img(7, 3, Rgb{100, 100, 100});
  const auto lab = rgb_to_lab(img);
  auto [l, a, b] = split_channels(lab);
  EXPECT_EQ(a.data().size(), 21u);
  EXPECT_EQ(l.size(), img.size());
  for (auto v : a.data()) EXPECT_EQ(v, 128);
  for (auto v : b.data()) EXPECT_EQ(v, 128);
}

TEST(Colorspace, PatchIsBrighterInAPlane) {
  RasterImage img(10, 10, Rgb{120, 120, 120});
  for (int y = 3; y < 6; ++y) {
    for (int x = 3; x < 6; ++x) img.set_pixel(x, y, {255, 0, 255});
  }
  const auto a = std::get<1>(split_channels(rgb_to_lab(img)));
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 10; ++x) {
      const bool patch = x >= 3 && x < 6 && y >= 3 && y < 6;
      EXPECT_EQ(a.at(x, y), patch ? 226 : 128);
    }
  }
}

TEST(Colorspace, Deterministic) {
  const auto f = allprep::testing::make_smear(5, 64, {32, 32});
  EXPECT_EQ(rgb_to_lab(f.image).A, rgb_to_lab(f.image).A);
}
