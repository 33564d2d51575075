#pragma once

// One-dimensional K-means over 8-bit samples (the a* plane).
//
// Samples only take 256 values, so Lloyd iterations run on the histogram:
// every sample sharing a value shares a cluster, and centroid sums are exact
// integer sums. Results are therefore bit-identical to a per-sample Lloyd
// loop started from the same centroids.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "allprep/error.hpp"
#include "allprep/image.hpp"

namespace allprep {

struct KMeansParams {
  int k = 7;
  std::uint64_t seed = 0;
  int max_iter = 300;
  double tol = 1e-4;  // on the largest centroid displacement
};

struct ClusterModel {
  int k = 0;            // clusters actually produced
  int requested_k = 0;  // k asked for; differs only when degenerate
  bool degenerate = false;
  std::vector<double> centroids;
  std::vector<std::uint8_t> assignments;  // per sample, index into centroids
  double objective = 0.0;
  std::vector<double> objective_history;  // one entry per iteration, then final
  int iterations = 0;
  bool converged = false;
};

namespace detail {

using Histogram = std::array<std::int64_t, 256>;

inline Histogram histogram_of(std::span<const std::uint8_t> samples) {
  Histogram h{};
  for (auto v : samples) ++h[v];
  return h;
}

inline double sq(double d) { return d * d; }

// Nearest centroid, ties to the lowest index.
inline int nearest_centroid(double x, std::span<const double> centroids) {
  int best = 0;
  double best_d = sq(x - centroids[0]);
  for (int i = 1; i < static_cast<int>(centroids.size()); ++i) {
    const double d = sq(x - centroids[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

inline double histogram_objective(const Histogram& h, const std::array<int, 256>& label,
                                  std::span<const double> centroids) {
  double total = 0.0;
  for (int v = 0; v < 256; ++v) {
    if (h[v]) total += static_cast<double>(h[v]) * sq(v - centroids[label[v]]);
  }
  return total;
}

// A portable uniform draw in [0,1).
inline double unit_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

struct LloydState {
  std::vector<double> centroids;
  std::array<int, 256> label{};
  std::vector<double> history;
  int iterations = 0;
  bool converged = false;
};

inline void assign_values(const Histogram& h, std::span<const double> centroids,
                          std::array<int, 256>& label) {
  for (int v = 0; v < 256; ++v) {
    label[v] = h[v] ? nearest_centroid(v, centroids) : -1;
  }
}

// Empty clusters take the value farthest from its current centroid, drawn
// from a cluster that holds at least two distinct values so the donor never
// empties. Ties go to the smallest value. All samples of that value move.
inline void repair_empty_clusters(std::span<const double> centroids, std::array<int, 256>& label) {
  const int k = static_cast<int>(centroids.size());
  std::vector<int> distinct(k, 0);
  for (int v = 0; v < 256; ++v) {
    if (label[v] >= 0) ++distinct[label[v]];
  }
  for (int j = 0; j < k; ++j) {
    if (distinct[j] > 0) continue;
    int pick = -1;
    double pick_d = -1.0;
    for (int v = 0; v < 256; ++v) {
      if (label[v] < 0 || distinct[label[v]] < 2) continue;
      const double d = sq(v - centroids[label[v]]);
      if (d > pick_d) {
        pick_d = d;
        pick = v;
      }
    }
    if (pick < 0) break;  // fewer distinct values than clusters
    --distinct[label[pick]];
    label[pick] = j;
    distinct[j] = 1;
  }
}

inline LloydState lloyd_on_histogram(const Histogram& h, std::vector<double> init,
                                     int max_iter, double tol) {
  LloydState st;
  st.centroids = std::move(init);
  const int k = static_cast<int>(st.centroids.size());
  for (int it = 0; it < max_iter; ++it) {
    assign_values(h, st.centroids, st.label);
    repair_empty_clusters(st.centroids, st.label);

    std::vector<std::int64_t> sum(k, 0), count(k, 0);
    for (int v = 0; v < 256; ++v) {
      if (st.label[v] < 0) continue;
      sum[st.label[v]] += h[v] * v;
      count[st.label[v]] += h[v];
    }
    double shift = 0.0;
    for (int i = 0; i < k; ++i) {
      if (count[i] == 0) continue;  // only reachable when k > distinct values
      const double c = static_cast<double>(sum[i]) / static_cast<double>(count[i]);
      shift = std::max(shift, std::abs(c - st.centroids[i]));
      st.centroids[i] = c;
    }
    st.history.push_back(histogram_objective(h, st.label, st.centroids));
    st.iterations = it + 1;
    if (shift < tol) {
      st.converged = true;
      break;
    }
  }
  // Final labels against the final centroids keep the nearest-centroid
  // invariant even when the loop stopped on max_iter.
  assign_values(h, st.centroids, st.label);
  st.history.push_back(histogram_objective(h, st.label, st.centroids));
  return st;
}

inline ClusterModel finish_model(std::span<const std::uint8_t> samples, const Histogram& h,
                                 LloydState st, int requested_k) {
  ClusterModel m;
  m.k = static_cast<int>(st.centroids.size());
  m.requested_k = requested_k;
  m.centroids = std::move(st.centroids);
  m.assignments.resize(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    m.assignments[i] = static_cast<std::uint8_t>(st.label[samples[i]]);
  }
  m.objective_history = std::move(st.history);
  m.objective = histogram_objective(h, st.label, m.centroids);
  m.iterations = st.iterations;
  m.converged = st.converged;
  return m;
}

inline void check_samples(std::span<const std::uint8_t> samples, int k) {
  if (samples.empty()) throw Error(Errc::InvalidArgument, "kmeans: no samples");
  if (k < 1 || k > 256) {
    throw Error(Errc::InvalidArgument, "kmeans: k must be in [1,256], got " + std::to_string(k));
  }
}

}  // namespace detail

/// k-means++ seeding over the samples, driven by a 64-bit Mersenne Twister.
inline std::vector<double> kmeanspp_seed(std::span<const std::uint8_t> samples, int k,
                                         std::uint64_t seed) {
  detail::check_samples(samples, k);
  const auto h = detail::histogram_of(samples);
  std::mt19937_64 rng(seed);
  const auto n = static_cast<std::int64_t>(samples.size());

  std::vector<double> centers;
  // First centre: a uniformly chosen sample.
  std::int64_t r = static_cast<std::int64_t>(detail::unit_draw(rng) * static_cast<double>(n));
  for (int v = 0; v < 256; ++v) {
    if (r < h[v]) {
      centers.push_back(v);
      break;
    }
    r -= h[v];
  }
  std::array<double, 256> d2{};
  for (int v = 0; v < 256; ++v) d2[v] = detail::sq(v - centers[0]);
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (int v = 0; v < 256; ++v) total += static_cast<double>(h[v]) * d2[v];
    if (total <= 0.0) break;
    const double target = detail::unit_draw(rng) * total;
    double acc = 0.0;
    int pick = -1;
    for (int v = 0; v < 256; ++v) {
      if (h[v] == 0 || d2[v] == 0.0) continue;
      acc += static_cast<double>(h[v]) * d2[v];
      pick = v;
      if (acc > target) break;
    }
    centers.push_back(pick);
    for (int v = 0; v < 256; ++v) d2[v] = std::min(d2[v], detail::sq(v - pick));
  }
  return centers;
}

/// Lloyd iterations from caller-supplied centroids.
inline ClusterModel kmeans_1d_from(std::span<const std::uint8_t> samples,
                                   std::vector<double> initial_centroids,
                                   int max_iter = 300, double tol = 1e-4) {
  const int k = static_cast<int>(initial_centroids.size());
  detail::check_samples(samples, k);
  if (max_iter < 1) throw Error(Errc::InvalidArgument, "kmeans: max_iter must be >= 1");
  const auto h = detail::histogram_of(samples);
  auto st = detail::lloyd_on_histogram(h, std::move(initial_centroids), max_iter, tol);
  return detail::finish_model(samples, h, std::move(st), k);
}

/// k-means++ seeded Lloyd. When k exceeds the number of distinct values the
/// model holds one cluster per distinct value and `degenerate` is set.
inline ClusterModel kmeans_1d(std::span<const std::uint8_t> samples,
                              const KMeansParams& params = {}) {
  detail::check_samples(samples, params.k);
  const auto h = detail::histogram_of(samples);
  const int distinct = static_cast<int>(std::count_if(h.begin(), h.end(),
                                                      [](std::int64_t c) { return c > 0; }));
  if (params.k > distinct) {
    detail::LloydState st;
    for (int v = 0; v < 256; ++v) {
      if (h[v]) {
        st.label[v] = static_cast<int>(st.centroids.size());
        st.centroids.push_back(v);
      } else {
        st.label[v] = -1;
      }
    }
    st.history.push_back(0.0);
    st.converged = true;
    auto m = detail::finish_model(samples, h, std::move(st), params.k);
    m.degenerate = true;
    return m;
  }
  return kmeans_1d_from(samples, kmeanspp_seed(samples, params.k, params.seed),
                        params.max_iter, params.tol);
}

/// Replaces each sample with its rounded, clamped centroid.
inline Plane reconstruct_clustered(const ClusterModel& model, int width, int height) {
  if (width < 1 || height < 1 ||
      model.assignments.size() != static_cast<std::size_t>(width) * height) {
    throw Error(Errc::ShapeMismatch, "assignments length " +
                                         std::to_string(model.assignments.size()) +
                                         " != " + std::to_string(width) + "x" +
                                         std::to_string(height));
  }
  std::vector<std::uint8_t> lut(model.centroids.size());
  for (std::size_t i = 0; i < lut.size(); ++i) {
    lut[i] = static_cast<std::uint8_t>(
        std::clamp(std::floor(model.centroids[i] + 0.5), 0.0, 255.0));
  }
  std::vector<std::uint8_t> out(model.assignments.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = lut[model.assignments[i]];
  return Plane(width, height, std::move(out));
}

}  // namespace allprep
