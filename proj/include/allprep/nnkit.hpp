#pragma once

// Dense double-precision kit: scaled dot-product and multi-head
// self-attention, focal loss with its analytic gradient, a central
// finite-difference oracle, and the forward pass of the 4-class
// classifier head (flatten -> dense/ReLU -> dropout -> dense/ReLU ->
// dropout -> dense/softmax).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "allprep/error.hpp"

namespace allprep::nn {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw Error(Errc::ShapeMismatch, "Matrix buffer length " + std::to_string(data_.size()) +
                                           " != " + std::to_string(rows_) + "x" +
                                           std::to_string(cols_));
    }
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw Error(Errc::ShapeMismatch, "ragged matrix literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw Error(Errc::ShapeMismatch, "matmul " + std::to_string(a.rows()) + "x" +
                                         std::to_string(a.cols()) + " by " +
                                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

/// Adds a row vector to every row.
inline Matrix add_row_bias(Matrix m, std::span<const double> bias) {
  if (bias.empty()) return m;
  if (bias.size() != m.cols()) throw Error(Errc::ShapeMismatch, "bias width mismatch");
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) += bias[j];
  }
  return m;
}

/// Columns [first, first + count).
inline Matrix column_block(const Matrix& m, std::size_t first, std::size_t count) {
  Matrix out(m.rows(), count);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < count; ++j) out(i, j) = m(i, first + j);
  }
  return out;
}

/// Row-wise softmax with max subtraction.
inline Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto in = m.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    auto o = out.row(i);
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (auto& v : o) v /= sum;
  }
  return out;
}

// ---- attention ----------------------------------------------------------------

struct AttentionOutput {
  Matrix output;
  Matrix weights;
};

/// weights = softmax(Q K^T / sqrt(d_k)), output = weights V.
inline AttentionOutput scaled_dot_product_attention(const Matrix& q, const Matrix& k,
                                                    const Matrix& v) {
  if (q.cols() != k.cols() || k.rows() != v.rows() || q.cols() == 0 || k.rows() == 0) {
    throw Error(Errc::ShapeMismatch, "attention: need Q.cols == K.cols >= 1 and K.rows == V.rows >= 1");
  }
  Matrix scores = matmul(q, transpose(k));
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  for (auto& s : scores.data()) s *= scale;
  AttentionOutput out;
  out.weights = softmax_rows(scores);
  out.output = matmul(out.weights, v);
  return out;
}

/// SplitMix64; also used by test oracles, so keep it bit-for-bit stable.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  double unit() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * unit(); }

 private:
  std::uint64_t state_;
};

inline Matrix random_matrix(std::size_t rows, std::size_t cols, SplitMix64& rng,
                            double lo = -0.1, double hi = 0.1) {
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

inline std::vector<double> random_vector(std::size_t n, SplitMix64& rng, double lo = -0.1,
                                         double hi = 0.1) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

struct AttentionConfig {
  std::size_t d_model = 0;
  std::size_t heads = 1;
  Matrix w_q, w_k, w_v, w_o;  // d_model x d_model each
  std::vector<double> b_q, b_k, b_v, b_o;  // d_model each; empty means no bias

  std::size_t d_k() const noexcept { return heads ? d_model / heads : 0; }

  void validate() const {
    if (heads == 0 || d_model == 0 || d_model % heads != 0) {
      throw Error(Errc::IndivisibleHeads, "d_model=" + std::to_string(d_model) +
                                              " is not divisible into " + std::to_string(heads) +
                                              " heads");
    }
    for (const Matrix* w : {&w_q, &w_k, &w_v, &w_o}) {
      if (w->rows() != d_model || w->cols() != d_model) {
        throw Error(Errc::ShapeMismatch, "projection weights must be d_model x d_model");
      }
    }
    for (const auto* b : {&b_q, &b_k, &b_v, &b_o}) {
      if (!b->empty() && b->size() != d_model) {
        throw Error(Errc::ShapeMismatch, "projection bias must have d_model entries");
      }
    }
  }

  static void check_heads(std::size_t d_model, std::size_t heads) {
    AttentionConfig probe;
    probe.d_model = d_model;
    probe.heads = heads;
    if (heads == 0 || d_model == 0 || d_model % heads != 0) probe.validate();
  }

  /// Identity projections, no bias.
  static AttentionConfig identity(std::size_t d_model, std::size_t heads) {
    check_heads(d_model, heads);
    const Matrix eye = Matrix::identity(d_model);
    return {d_model, heads, eye, eye, eye, eye, {}, {}, {}, {}};
  }

  /// Weights then biases drawn uniform(-0.1, 0.1) in the order
  /// W_Q, W_K, W_V, W_O (row-major), b_Q, b_K, b_V, b_O.
  static AttentionConfig random(std::size_t d_model, std::size_t heads, std::uint64_t seed) {
    check_heads(d_model, heads);
    SplitMix64 rng(seed);
    AttentionConfig c;
    c.d_model = d_model;
    c.heads = heads;
    c.w_q = random_matrix(d_model, d_model, rng);
    c.w_k = random_matrix(d_model, d_model, rng);
    c.w_v = random_matrix(d_model, d_model, rng);
    c.w_o = random_matrix(d_model, d_model, rng);
    c.b_q = random_vector(d_model, rng);
    c.b_k = random_vector(d_model, rng);
    c.b_v = random_vector(d_model, rng);
    c.b_o = random_vector(d_model, rng);
    return c;
  }
};

struct MultiHeadOutput {
  Matrix output;
  std::vector<Matrix> head_weights;
};

inline MultiHeadOutput multi_head_self_attention_detailed(const Matrix& x,
                                                          const AttentionConfig& cfg) {
  cfg.validate();
  if (x.cols() != cfg.d_model || x.rows() == 0) {
    throw Error(Errc::ShapeMismatch, "input width " + std::to_string(x.cols()) +
                                         " != d_model " + std::to_string(cfg.d_model));
  }
  const Matrix q = add_row_bias(matmul(x, cfg.w_q), cfg.b_q);
  const Matrix k = add_row_bias(matmul(x, cfg.w_k), cfg.b_k);
  const Matrix v = add_row_bias(matmul(x, cfg.w_v), cfg.b_v);
  const std::size_t dk = cfg.d_k();

  MultiHeadOutput out;
  Matrix concat(x.rows(), cfg.d_model);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    auto head = scaled_dot_product_attention(column_block(q, h * dk, dk),
                                             column_block(k, h * dk, dk),
                                             column_block(v, h * dk, dk));
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < dk; ++j) concat(i, h * dk + j) = head.output(i, j);
    }
    out.head_weights.push_back(std::move(head.weights));
  }
  out.output = add_row_bias(matmul(concat, cfg.w_o), cfg.b_o);
  return out;
}

/// Rows of X are tokens. Output has the shape of X.
inline Matrix multi_head_self_attention(const Matrix& x, const AttentionConfig& cfg) {
  return multi_head_self_attention_detailed(x, cfg).output;
}

// ---- losses ---------------------------------------------------------------------

inline constexpr double kProbEpsilon = 1e-12;

struct FocalLossConfig {
  std::vector<double> alpha{1.0};  // one entry broadcasts to every class
  double gamma = 2.0;

  double alpha_for(std::size_t cls) const {
    return alpha.size() == 1 ? alpha[0] : alpha.at(cls);
  }

  void validate(std::size_t classes) const {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
      throw Error(Errc::InvalidArgument, "focal gamma must be finite and >= 0");
    }
    if (alpha.empty() || (alpha.size() != 1 && alpha.size() != classes)) {
      throw Error(Errc::InvalidArgument, "focal alpha must have 1 or " + std::to_string(classes) +
                                             " entries");
    }
    for (double a : alpha) {
      if (!(a > 0.0)) throw Error(Errc::InvalidArgument, "focal alpha entries must be > 0");
    }
  }
};

namespace detail {

inline void check_targets(const Matrix& m, std::span<const std::size_t> targets) {
  if (targets.size() != m.rows() || m.rows() == 0) {
    throw Error(Errc::ShapeMismatch, std::to_string(targets.size()) + " targets for " +
                                         std::to_string(m.rows()) + " rows");
  }
  for (auto t : targets) {
    if (t >= m.cols()) {
      throw Error(Errc::InvalidArgument, "target class " + std::to_string(t) + " out of range");
    }
  }
}

inline void check_distribution(const Matrix& probs, double tol) {
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double s = 0.0;
    for (double p : probs.row(i)) {
      if (!(p >= 0.0) || !std::isfinite(p)) {
        throw Error(Errc::InvalidDistribution, "row " + std::to_string(i) + " has an invalid probability");
      }
      s += p;
    }
    if (std::abs(s - 1.0) > tol) {
      throw Error(Errc::InvalidDistribution, "row " + std::to_string(i) + " sums to " + std::to_string(s));
    }
  }
}

inline double focal_term(double p, double alpha, double gamma) {
  const double mod = gamma == 0.0 ? 1.0 : std::pow(1.0 - p, gamma);
  return -alpha * mod * std::log(std::max(p, kProbEpsilon));
}

}  // namespace detail

/// Mean over rows of -alpha_t (1 - p_t)^gamma log(max(p_t, 1e-12)).
inline double focal_loss(const Matrix& probs, std::span<const std::size_t> targets,
                         const FocalLossConfig& cfg) {
  detail::check_targets(probs, targets);
  detail::check_distribution(probs, 1e-9);
  cfg.validate(probs.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    total += detail::focal_term(probs(i, targets[i]), cfg.alpha_for(targets[i]), cfg.gamma);
  }
  return total / static_cast<double>(probs.rows());
}

/// Mean categorical cross-entropy with the same probability clamp.
inline double cross_entropy(const Matrix& probs, std::span<const std::size_t> targets) {
  detail::check_targets(probs, targets);
  detail::check_distribution(probs, 1e-9);
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    total -= std::log(std::max(probs(i, targets[i]), kProbEpsilon));
  }
  return total / static_cast<double>(probs.rows());
}

inline double focal_loss_from_logits(const Matrix& logits, std::span<const std::size_t> targets,
                                     const FocalLossConfig& cfg) {
  return focal_loss(softmax_rows(logits), targets, cfg);
}

/// d(mean focal loss)/d(logits), softmax applied internally. With
/// p = p_t and dL/dz_j = dL/dp * p (delta_tj - p_j):
///   dL/dz_j = alpha [gamma (1-p)^(gamma-1) p log p - (1-p)^gamma] (delta_tj - p_j) / N
/// and below the clamp only the modulation term survives.
inline Matrix focal_loss_grad(const Matrix& logits, std::span<const std::size_t> targets,
                              const FocalLossConfig& cfg) {
  detail::check_targets(logits, targets);
  cfg.validate(logits.cols());
  const Matrix p = softmax_rows(logits);
  const double n = static_cast<double>(logits.rows());
  Matrix g(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const std::size_t t = targets[i];
    const double pt = p(i, t);
    const double q = 1.0 - pt;
    if (q <= 0.0) continue;  // p_t == 1: loss minimum, zero row
    const double alpha = cfg.alpha_for(t);
    const double gamma = cfg.gamma;
    const double log_p = std::log(std::max(pt, kProbEpsilon));
    const double mod_term = gamma == 0.0 ? 0.0 : gamma * std::pow(q, gamma - 1.0) * pt * log_p;
    const double ce_term = pt >= kProbEpsilon ? (gamma == 0.0 ? 1.0 : std::pow(q, gamma)) : 0.0;
    const double coeff = alpha * (mod_term - ce_term) / n;
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      g(i, j) = coeff * ((j == t ? 1.0 : 0.0) - p(i, j));
    }
  }
  return g;
}

/// (softmax(logits) - one_hot(targets)) / N.
inline Matrix cross_entropy_grad(const Matrix& logits, std::span<const std::size_t> targets) {
  detail::check_targets(logits, targets);
  Matrix g = softmax_rows(logits);
  const double n = static_cast<double>(logits.rows());
  for (std::size_t i = 0; i < g.rows(); ++i) {
    g(i, targets[i]) -= 1.0;
    for (auto& v : g.row(i)) v /= n;
  }
  return g;
}

// ---- verification helpers ------------------------------------------------------------

/// Central differences, one entry at a time.
template <typename F>
Matrix finite_diff_grad(F&& f, const Matrix& at, double step = 1e-6) {
  if (!(step > 0.0)) throw Error(Errc::InvalidArgument, "finite difference step must be > 0");
  Matrix x = at;
  Matrix g(at.rows(), at.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + step;
    const double up = f(static_cast<const Matrix&>(x));
    x.data()[i] = orig - step;
    const double down = f(static_cast<const Matrix&>(x));
    x.data()[i] = orig;
    g.data()[i] = (up - down) / (2.0 * step);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||) in the Frobenius norm; 0 when both vanish.
inline double relative_error(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(Errc::ShapeMismatch, "relative_error shape mismatch");
  }
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    na += a.data()[i] * a.data()[i];
    nb += b.data()[i] * b.data()[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(Errc::ShapeMismatch, "max_abs_diff shape mismatch");
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// ---- classifier head --------------------------------------------------------------------

/// One scalar mean per feature map.
inline std::vector<double> global_average_pool(std::span<const Matrix> maps) {
  std::vector<double> out;
  out.reserve(maps.size());
  for (const auto& m : maps) {
    if (m.size() == 0) throw Error(Errc::ShapeMismatch, "empty feature map");
    out.push_back(std::accumulate(m.data().begin(), m.data().end(), 0.0) /
                  static_cast<double>(m.size()));
  }
  return out;
}

inline constexpr std::size_t kHeadClasses = 4;

struct HeadConfig {
  std::size_t input_width = 0;  // flattened feature width
  std::size_t hidden1 = 0;      // 0 removes the layer
  std::size_t hidden2 = 0;
  double dropout1 = 0.0;
  double dropout2 = 0.0;
  double l2_lambda = 0.0;
  std::size_t classes = kHeadClasses;

  void validate() const {
    if (input_width == 0) throw Error(Errc::InvalidArgument, "head input width must be >= 1");
    if (classes != kHeadClasses) {
      throw Error(Errc::InvalidArgument, "head output width must be " + std::to_string(kHeadClasses));
    }
    for (double d : {dropout1, dropout2}) {
      if (!(d >= 0.0 && d < 1.0)) throw Error(Errc::InvalidArgument, "dropout rate must be in [0,1)");
    }
    if (!(l2_lambda >= 0.0)) throw Error(Errc::InvalidArgument, "l2 lambda must be >= 0");
  }

  /// Widths of the dense stack, input first.
  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w{input_width};
    if (hidden1) w.push_back(hidden1);
    if (hidden2) w.push_back(hidden2);
    w.push_back(classes);
    return w;
  }
};

struct DenseLayer {
  Matrix weights;             // in x out
  std::vector<double> bias;   // out
};

struct HeadParams {
  HeadConfig config;
  std::vector<DenseLayer> layers;

  /// Per layer: weights row-major then bias, uniform(-0.1, 0.1).
  static HeadParams random(const HeadConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    SplitMix64 rng(seed);
    HeadParams p{cfg, {}};
    const auto w = cfg.widths();
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
      DenseLayer l;
      l.weights = random_matrix(w[i], w[i + 1], rng);
      l.bias = random_vector(w[i + 1], rng);
      p.layers.push_back(std::move(l));
    }
    return p;
  }

  static HeadParams zeros(const HeadConfig& cfg) {
    cfg.validate();
    HeadParams p{cfg, {}};
    const auto w = cfg.widths();
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
      p.layers.push_back({Matrix(w[i], w[i + 1]), std::vector<double>(w[i + 1], 0.0)});
    }
    return p;
  }

  std::vector<const Matrix*> weight_matrices() const {
    std::vector<const Matrix*> out;
    for (const auto& l : layers) out.push_back(&l.weights);
    return out;
  }
};

enum class HeadMode { Inference };

/// Dropout is the identity at inference; hidden layers use ReLU.
inline std::vector<double> head_forward(std::span<const double> features, const HeadParams& params,
                                        HeadMode mode = HeadMode::Inference) {
  (void)mode;
  params.config.validate();
  const auto widths = params.config.widths();
  if (params.layers.size() + 1 != widths.size()) {
    throw Error(Errc::ShapeMismatch, "head parameters do not match its config");
  }
  if (features.size() != params.config.input_width) {
    throw Error(Errc::ShapeMismatch, "feature width " + std::to_string(features.size()) +
                                         " != " + std::to_string(params.config.input_width));
  }
  Matrix act(1, features.size(), std::vector<double>(features.begin(), features.end()));
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    if (l.weights.rows() != widths[i] || l.weights.cols() != widths[i + 1] ||
        l.bias.size() != widths[i + 1]) {
      throw Error(Errc::ShapeMismatch, "dense layer " + std::to_string(i) + " has wrong shape");
    }
    act = add_row_bias(matmul(act, l.weights), l.bias);
    if (i + 1 < params.layers.size()) {
      for (auto& v : act.data()) v = std::max(v, 0.0);
    }
  }
  const Matrix probs = softmax_rows(act);
  return {probs.data().begin(), probs.data().end()};
}

/// lambda * sum of squared weights.
inline double l2_penalty(std::span<const Matrix* const> weights, double lambda) {
  double s = 0.0;
  for (const Matrix* w : weights) {
    for (double v : w->data()) s += v * v;
  }
  return lambda * s;
}

inline double l2_penalty(std::span<const Matrix> weights, double lambda) {
  double s = 0.0;
  for (const auto& w : weights) {
    for (double v : w.data()) s += v * v;
  }
  return lambda * s;
}

inline std::size_t dense_param_count(std::size_t in, std::size_t out, bool bias = true) {
  return in * out + (bias ? out : 0);
}

inline std::size_t param_count(const HeadConfig& cfg) {
  cfg.validate();
  const auto w = cfg.widths();
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) n += dense_param_count(w[i], w[i + 1]);
  return n;
}

/// Four d_model x d_model projections, each with a bias.
inline std::size_t param_count(const AttentionConfig& cfg) {
  AttentionConfig::check_heads(cfg.d_model, cfg.heads);
  return 4 * dense_param_count(cfg.d_model, cfg.d_model);
}

}  // namespace allprep::nn
