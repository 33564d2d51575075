#pragma once

// Thresholding, binary morphology and mask application.
//
// Border convention: pixels outside the raster read as background (0) for
// both dilation and erosion. Opening is therefore the exact planar opening
// of the in-bounds set; closing additionally clears pixels whose element
// footprint leaves the raster.

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "allprep/cluster.hpp"
#include "allprep/error.hpp"
#include "allprep/image.hpp"

namespace allprep {

enum class SeShape { Square, Disk };

struct StructuringElement {
  int size = 3;
  SeShape shape = SeShape::Square;

  StructuringElement() = default;
  StructuringElement(int size_, SeShape shape_ = SeShape::Square) : size(size_), shape(shape_) {
    if (size < 1 || size % 2 == 0) {
      throw Error(Errc::InvalidArgument,
                  "structuring element size must be odd and >= 1, got " + std::to_string(size));
    }
  }

  int radius() const noexcept { return size / 2; }

  /// (dx, dy) offsets relative to the centre origin.
  std::vector<std::pair<int, int>> offsets() const {
    std::vector<std::pair<int, int>> out;
    const int r = radius();
    for (int t = -r; t <= r; ++t) {
      for (int s = -r; s <= r; ++s) {
        if (shape == SeShape::Disk && s * s + t * t > r * r) continue;
        out.emplace_back(s, t);
      }
    }
    return out;
  }
};

struct ThresholdSpec {
  enum class Mode { Otsu, Fixed };
  Mode mode = Mode::Otsu;
  int value = 0;  // fixed mode only

  static ThresholdSpec otsu() { return {}; }
  static ThresholdSpec fixed(int t) {
    if (t < 0 || t > 255) {
      throw Error(Errc::InvalidArgument, "threshold must be in [0,255], got " + std::to_string(t));
    }
    return {Mode::Fixed, t};
  }
  friend bool operator==(const ThresholdSpec&, const ThresholdSpec&) = default;
};

struct ThresholdResult {
  BinaryMask mask;
  int threshold = 0;
  bool constant_plane = false;  // otsu on a single-valued histogram
};

namespace detail {

// Compares a²/b against c²/d without rounding where 128-bit products fit.
inline int compare_ratio(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
  using u128 = unsigned __int128;
  const u128 aa = static_cast<u128>(a < 0 ? -a : a);
  const u128 cc = static_cast<u128>(c < 0 ? -c : c);
  u128 a2, c2, lhs, rhs;
  if (!__builtin_mul_overflow(aa, aa, &a2) && !__builtin_mul_overflow(cc, cc, &c2) &&
      !__builtin_mul_overflow(a2, static_cast<u128>(d), &lhs) &&
      !__builtin_mul_overflow(c2, static_cast<u128>(b), &rhs)) {
    return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
  }
  const long double l = static_cast<long double>(a) * a / b;
  const long double r = static_cast<long double>(c) * c / d;
  return l < r ? -1 : (l > r ? 1 : 0);
}

}  // namespace detail

/// Otsu's threshold for the rule `foreground iff value > T`. T maximises the
/// between-class variance of {v <= T} vs {v > T}; ties go to the smallest T.
/// Returns nullopt when fewer than two histogram bins are populated.
inline std::optional<int> otsu_threshold(std::span<const std::int64_t, 256> hist) {
  std::int64_t n = 0, s = 0;
  for (int v = 0; v < 256; ++v) {
    n += hist[v];
    s += hist[v] * v;
  }
  // Between-class variance is proportional to (S0*N - S*n0)^2 / (n0*n1).
  std::optional<int> best;
  std::int64_t best_num = 0, best_den = 1;
  std::int64_t n0 = 0, s0 = 0;
  for (int t = 0; t < 256; ++t) {
    n0 += hist[t];
    s0 += hist[t] * t;
    const std::int64_t n1 = n - n0;
    if (n0 == 0 || n1 == 0) continue;
    const std::int64_t num = s0 * n - s * n0;
    const std::int64_t den = n0 * n1;
    if (num == 0) continue;
    if (!best || detail::compare_ratio(num, den, best_num, best_den) > 0) {
      best = t;
      best_num = num;
      best_den = den;
    }
  }
  return best;
}

inline std::array<std::int64_t, 256> plane_histogram(const Plane& plane) {
  std::array<std::int64_t, 256> h{};
  for (auto v : plane.data()) ++h[v];
  return h;
}

/// bit = 1 iff value > T.
inline ThresholdResult binary_threshold(const Plane& plane, const ThresholdSpec& spec) {
  ThresholdResult r{BinaryMask(plane.width(), plane.height()), 0, false};
  if (spec.mode == ThresholdSpec::Mode::Fixed) {
    if (spec.value < 0 || spec.value > 255) {
      throw Error(Errc::InvalidArgument, "threshold out of range");
    }
    r.threshold = spec.value;
  } else {
    const auto h = plane_histogram(plane);
    if (auto t = otsu_threshold(h)) {
      r.threshold = *t;
    } else {
      r.constant_plane = true;
      r.threshold = plane.data()[0];  // nothing exceeds the only value
    }
  }
  std::vector<std::uint8_t> bits(plane.data().size());
  std::transform(plane.data().begin(), plane.data().end(), bits.begin(),
                 [t = r.threshold](std::uint8_t v) { return v > t ? 1 : 0; });
  r.mask = BinaryMask(plane.width(), plane.height(), std::move(bits));
  return r;
}

namespace detail {

template <bool IsDilate>
BinaryMask morph_extremum(const BinaryMask& mask, const StructuringElement& se) {
  const auto offs = se.offsets();
  BinaryMask out(mask.width(), mask.height());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      bool v = !IsDilate;
      for (auto [s, t] : offs) {
        const bool in = mask.get_or_zero(x + s, y + t);
        if constexpr (IsDilate) {
          if (in) {
            v = true;
            break;
          }
        } else {
          if (!in) {
            v = false;
            break;
          }
        }
      }
      out.set(x, y, v);
    }
  }
  return out;
}

}  // namespace detail

inline BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se = {}) {
  return detail::morph_extremum<true>(mask, se);
}

inline BinaryMask erode(const BinaryMask& mask, const StructuringElement& se = {}) {
  return detail::morph_extremum<false>(mask, se);
}

inline BinaryMask open(const BinaryMask& mask, const StructuringElement& se = {}) {
  return dilate(erode(mask, se), se);
}

inline BinaryMask close(const BinaryMask& mask, const StructuringElement& se = {}) {
  return erode(dilate(mask, se), se);
}

/// Background regions not 4-connected to the raster border become foreground.
inline BinaryMask fill_holes(const BinaryMask& mask) {
  const int w = mask.width(), h = mask.height();
  std::vector<std::uint8_t> reached(mask.size().area(), 0);
  std::deque<std::pair<int, int>> queue;
  auto seed = [&](int x, int y) {
    const std::size_t i = static_cast<std::size_t>(y) * w + x;
    if (!mask.get(x, y) && !reached[i]) {
      reached[i] = 1;
      queue.emplace_back(x, y);
    }
  };
  for (int x = 0; x < w; ++x) {
    seed(x, 0);
    seed(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    seed(0, y);
    seed(w - 1, y);
  }
  constexpr int dx[4] = {1, -1, 0, 0};
  constexpr int dy[4] = {0, 0, 1, -1};
  while (!queue.empty()) {
    auto [x, y] = queue.front();
    queue.pop_front();
    for (int d = 0; d < 4; ++d) {
      const int nx = x + dx[d], ny = y + dy[d];
      if (nx >= 0 && ny >= 0 && nx < w && ny < h) seed(nx, ny);
    }
  }
  std::vector<std::uint8_t> bits(reached.size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = reached[i] ? 0 : 1;
  return BinaryMask(w, h, std::move(bits));
}

enum class MorphStep { FillHoles, Open, Close };

inline std::vector<MorphStep> default_morph_order() {
  return {MorphStep::FillHoles, MorphStep::Open, MorphStep::Close};
}

inline BinaryMask apply_morphology(BinaryMask mask, std::span<const MorphStep> steps,
                                   const StructuringElement& se) {
  for (auto step : steps) {
    switch (step) {
      case MorphStep::FillHoles: mask = fill_holes(mask); break;
      case MorphStep::Open: mask = open(mask, se); break;
      case MorphStep::Close: mask = close(mask, se); break;
    }
  }
  return mask;
}

/// 1 -> 255, 0 -> 0.
inline Plane to_u8_mask(const BinaryMask& mask) {
  std::vector<std::uint8_t> out(mask.bits().size());
  std::transform(mask.bits().begin(), mask.bits().end(), out.begin(),
                 [](std::uint8_t b) -> std::uint8_t { return b ? 255 : 0; });
  return Plane(mask.width(), mask.height(), std::move(out));
}

inline BinaryMask from_u8_mask(const Plane& plane) {
  std::vector<std::uint8_t> bits(plane.data().size());
  std::transform(plane.data().begin(), plane.data().end(), bits.begin(),
                 [](std::uint8_t v) -> std::uint8_t { return v > 127 ? 1 : 0; });
  return BinaryMask(plane.width(), plane.height(), std::move(bits));
}

/// Keeps original pixels under the mask and blacks out the rest.
inline RasterImage apply_mask(const RasterImage& original, const BinaryMask& mask) {
  if (original.size() != mask.size()) {
    throw Error(Errc::ShapeMismatch, "mask " + std::to_string(mask.width()) + "x" +
                                         std::to_string(mask.height()) + " vs image " +
                                         std::to_string(original.width()) + "x" +
                                         std::to_string(original.height()));
  }
  RasterImage out = original;
  auto px = out.data();
  const auto bits = mask.bits();
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (!bits[i]) {
      px[3 * i] = px[3 * i + 1] = px[3 * i + 2] = 0;
    }
  }
  return out;
}

struct ForegroundPolicy {
  enum class Kind { MaxA, Threshold };
  Kind kind = Kind::MaxA;
  ThresholdSpec spec = ThresholdSpec::otsu();  // Threshold kind only

  static ForegroundPolicy max_a() { return {}; }
  static ForegroundPolicy threshold(ThresholdSpec s) { return {Kind::Threshold, s}; }
};

using ForegroundSelection = std::variant<ThresholdSpec, BinaryMask>;

/// Bridges the clustered plane to a threshold. `MaxA` keeps the cluster with
/// the largest centroid (most magenta) by thresholding just below its
/// rounded value; a single cluster, or a top centroid that rounds to 0,
/// makes the whole raster foreground. `Threshold` passes its threshold through.
inline ForegroundSelection select_foreground(const Plane& clustered, const ClusterModel& model,
                                             const ForegroundPolicy& policy) {
  if (policy.kind == ForegroundPolicy::Kind::Threshold) return policy.spec;
  if (model.centroids.empty()) {
    throw Error(Errc::InvalidArgument, "select_foreground: model has no centroids");
  }
  const double top = *std::max_element(model.centroids.begin(), model.centroids.end());
  const int t = static_cast<int>(std::clamp(std::floor(top + 0.5), 0.0, 255.0)) - 1;
  if (model.k == 1 || t < 0) return BinaryMask(clustered.width(), clustered.height(), true);
  return ThresholdSpec::fixed(t);
}

}  // namespace allprep
