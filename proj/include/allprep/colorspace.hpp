#pragma once

// sRGB -> CIE L*a*b* (D65) with the 8-bit encoding used by common imaging
// libraries: L' = L*255/100, a' = a + 128, b' = b + 128, each rounded and
// clamped to [0,255].

#include <array>
#include <cmath>
#include <cstdint>
#include <tuple>

#include "allprep/image.hpp"

namespace allprep {

struct LabImage {
  Plane L;
  Plane A;
  Plane B;

  int width() const noexcept { return L.width(); }
  int height() const noexcept { return L.height(); }
};

struct LabValue {
  double L, a, b;
};

namespace detail {

// sRGB primaries, D65. Whitepoint normalisation uses the row sums so that
// (255,255,255) lands exactly on the whitepoint.
inline constexpr double kRgbToXyz[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};

inline const std::array<double, 256>& srgb_linear_table() {
  static const std::array<double, 256> table = [] {
    std::array<double, 256> t{};
    for (int i = 0; i < 256; ++i) {
      const double c = i / 255.0;
      t[i] = c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
    }
    return t;
  }();
  return table;
}

inline double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  constexpr double delta3 = delta * delta * delta;
  return t > delta3 ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

inline std::uint8_t clamp_lab(double v) {
  const double r = std::floor(v + 0.5);
  return static_cast<std::uint8_t>(r < 0.0 ? 0.0 : (r > 255.0 ? 255.0 : r));
}

}  // namespace detail

/// Unquantized CIE L*a*b* of one sRGB pixel.
inline LabValue srgb_to_lab(Rgb px) {
  const auto& lin = detail::srgb_linear_table();
  const double r = lin[px[0]], g = lin[px[1]], b = lin[px[2]];
  double xyz[3];
  for (int i = 0; i < 3; ++i) {
    const auto& row = detail::kRgbToXyz[i];
    xyz[i] = (row[0] * r + row[1] * g + row[2] * b) / (row[0] + row[1] + row[2]);
  }
  const double fx = detail::lab_f(xyz[0]);
  const double fy = detail::lab_f(xyz[1]);
  const double fz = detail::lab_f(xyz[2]);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

inline std::array<std::uint8_t, 3> encode_lab8(const LabValue& v) {
  return {detail::clamp_lab(v.L * 255.0 / 100.0), detail::clamp_lab(v.a + 128.0),
          detail::clamp_lab(v.b + 128.0)};
}

inline LabImage rgb_to_lab(const RasterImage& img) {
  LabImage lab{Plane(img.width(), img.height()), Plane(img.width(), img.height()),
               Plane(img.width(), img.height())};
  const auto src = img.data();
  auto L = lab.L.data();
  auto A = lab.A.data();
  auto B = lab.B.data();
  for (std::size_t i = 0; i < img.size().area(); ++i) {
    const auto enc = encode_lab8(srgb_to_lab({src[3 * i], src[3 * i + 1], src[3 * i + 2]}));
    L[i] = enc[0];
    A[i] = enc[1];
    B[i] = enc[2];
  }
  return lab;
}

/// The A plane is the clustering input.
inline std::tuple<Plane, Plane, Plane> split_channels(const LabImage& lab) {
  return {lab.L, lab.A, lab.B};
}

}  // namespace allprep
