#pragma once

// Self-verification tables for the nn kit: analytic-vs-numeric gradient
// checks and a battery of closed-form identities.

#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "allprep/nnkit.hpp"

namespace allprep::nn {

struct CheckRow {
  std::string operation;
  double error = 0.0;  // max relative (gradcheck) or absolute (identities) error
  double tolerance = 0.0;
  bool pass = false;
};

struct CheckTable {
  std::string title;
  std::vector<CheckRow> rows;

  bool all_pass() const {
    for (const auto& r : rows) {
      if (!r.pass) return false;
    }
    return true;
  }

  void add(std::string op, double err, double tol) {
    rows.push_back({std::move(op), err, tol, std::isfinite(err) && err <= tol});
  }
};

struct NnCheckOptions {
  std::size_t heads = 2;
  std::size_t d_model = 8;
  std::size_t tokens = 5;
  double gamma = 2.0;
  double alpha = 0.25;
  std::uint64_t seed = 0;
  std::size_t classes = 4;
  std::size_t cases_per_setting = 63;  // 8 sweep settings -> 504 cases

  void validate() const {
    AttentionConfig::check_heads(d_model, heads);
    if (tokens == 0) throw Error(Errc::InvalidArgument, "tokens must be >= 1");
    if (classes < 2) throw Error(Errc::InvalidArgument, "classes must be >= 2");
    FocalLossConfig{{alpha}, gamma}.validate(classes);
  }
};

inline constexpr double kGradTolerance = 1e-5;
inline constexpr double kIdentityTolerance = 1e-12;

namespace detail {

struct GradCase {
  Matrix logits;
  std::vector<std::size_t> targets;
};

inline GradCase random_grad_case(SplitMix64& rng, std::size_t rows, std::size_t classes) {
  GradCase c{random_matrix(rows, classes, rng, -3.0, 3.0), {}};
  for (std::size_t i = 0; i < rows; ++i) c.targets.push_back(rng.next() % classes);
  return c;
}

inline double focal_case_error(const GradCase& c, const FocalLossConfig& cfg) {
  const Matrix analytic = focal_loss_grad(c.logits, c.targets, cfg);
  const Matrix numeric = finite_diff_grad(
      [&](const Matrix& z) { return focal_loss_from_logits(z, c.targets, cfg); }, c.logits);
  return relative_error(analytic, numeric);
}

inline std::string fmt_param(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace detail

/// Focal and cross-entropy gradients against central differences.
inline CheckTable run_gradcheck(const NnCheckOptions& o) {
  o.validate();
  CheckTable t{"gradcheck", {}};
  SplitMix64 rng(o.seed);

  {
    const FocalLossConfig cfg{{o.alpha}, o.gamma};
    double worst = 0.0;
    for (std::size_t n = 0; n < o.cases_per_setting; ++n) {
      worst = std::max(worst, detail::focal_case_error(
                                  detail::random_grad_case(rng, o.tokens, o.classes), cfg));
    }
    t.add("focal_loss_grad gamma=" + detail::fmt_param(o.gamma) +
              " alpha=" + detail::fmt_param(o.alpha),
          worst, kGradTolerance);
  }

  for (double gamma : {0.0, 1.0, 2.0, 5.0}) {
    for (double alpha : {0.25, 1.0}) {
      const FocalLossConfig cfg{{alpha}, gamma};
      double worst = 0.0;
      for (std::size_t n = 0; n < o.cases_per_setting; ++n) {
        const std::size_t rows = 1 + rng.next() % 4;
        worst = std::max(worst, detail::focal_case_error(
                                    detail::random_grad_case(rng, rows, o.classes), cfg));
      }
      t.add("focal_loss_grad sweep gamma=" + detail::fmt_param(gamma) +
                " alpha=" + detail::fmt_param(alpha),
            worst, kGradTolerance);
    }
  }

  {
    double worst = 0.0;
    for (std::size_t n = 0; n < o.cases_per_setting; ++n) {
      const auto c = detail::random_grad_case(rng, o.tokens, o.classes);
      const Matrix numeric = finite_diff_grad(
          [&](const Matrix& z) { return cross_entropy(softmax_rows(z), c.targets); }, c.logits);
      worst = std::max(worst, relative_error(cross_entropy_grad(c.logits, c.targets), numeric));
    }
    t.add("cross_entropy_grad", worst, kGradTolerance);
  }

  {
    double worst = 0.0;
    const FocalLossConfig ce_like{{1.0}, 0.0};
    for (std::size_t n = 0; n < o.cases_per_setting; ++n) {
      const auto c = detail::random_grad_case(rng, o.tokens, o.classes);
      worst = std::max(worst, max_abs_diff(focal_loss_grad(c.logits, c.targets, ce_like),
                                           cross_entropy_grad(c.logits, c.targets)));
    }
    t.add("CE-equivalence grad gamma=0 alpha=1", worst, kIdentityTolerance);
  }
  return t;
}

/// Closed-form identities of softmax, attention, losses and the head.
inline CheckTable run_selfcheck(const NnCheckOptions& o) {
  o.validate();
  CheckTable t{"selfcheck", {}};
  SplitMix64 rng(o.seed);
  const double tol = kIdentityTolerance;

  {
    const Matrix s = softmax_rows(Matrix{{0.0, 0.0}});
    t.add("softmax [0,0] = [0.5,0.5]", max_abs_diff(s, Matrix{{0.5, 0.5}}), tol);
    const Matrix one = softmax_rows(random_matrix(o.tokens, 1, rng, -5.0, 5.0));
    t.add("softmax single column = 1", max_abs_diff(one, Matrix(o.tokens, 1, 1.0)), tol);
  }

  const std::size_t dk = o.d_model / o.heads;
  {
    const Matrix q = random_matrix(o.tokens, dk, rng, -1.0, 1.0);
    const Matrix k = random_matrix(1, dk, rng, -1.0, 1.0);
    const Matrix v = random_matrix(1, dk, rng, -1.0, 1.0);
    const auto a = scaled_dot_product_attention(q, k, v);
    double err = max_abs_diff(a.weights, Matrix(o.tokens, 1, 1.0));
    for (std::size_t i = 0; i < o.tokens; ++i) {
      for (std::size_t j = 0; j < dk; ++j) err = std::max(err, std::abs(a.output(i, j) - v(0, j)));
    }
    t.add("attention single key returns V", err, tol);
  }
  {
    const Matrix k = random_matrix(o.tokens, dk, rng, -1.0, 1.0);
    const Matrix v = random_matrix(o.tokens, dk, rng, -1.0, 1.0);
    const auto a = scaled_dot_product_attention(Matrix(o.tokens, dk), k, v);
    double err = 0.0;
    for (std::size_t j = 0; j < dk; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < o.tokens; ++i) mean += v(i, j);
      mean /= static_cast<double>(o.tokens);
      for (std::size_t i = 0; i < o.tokens; ++i) err = std::max(err, std::abs(a.output(i, j) - mean));
    }
    t.add("attention zero Q gives column means", err, tol);
  }
  {
    const Matrix x = random_matrix(o.tokens, o.d_model, rng, -1.0, 1.0);
    const auto mh = multi_head_self_attention_detailed(x, AttentionConfig::random(o.d_model, o.heads, o.seed));
    double err = 0.0;
    for (const auto& w : mh.head_weights) {
      for (std::size_t i = 0; i < w.rows(); ++i) {
        const auto r = w.row(i);
        err = std::max(err, std::abs(std::accumulate(r.begin(), r.end(), 0.0) - 1.0));
      }
    }
    t.add("MHSA weight rows sum to 1", err, tol);
  }
  {
    const Matrix x = random_matrix(o.tokens, o.d_model, rng, -1.0, 1.0);
    const Matrix mh = multi_head_self_attention(x, AttentionConfig::identity(o.d_model, 1));
    t.add("MHSA h=1 identity = attention(X,X,X)",
          max_abs_diff(mh, scaled_dot_product_attention(x, x, x).output), tol);
  }
  {
    const auto cfg = AttentionConfig::random(o.d_model, o.heads, o.seed + 1);
    const Matrix x = random_matrix(1, o.d_model, rng, -1.0, 1.0);
    const Matrix expect =
        add_row_bias(matmul(add_row_bias(matmul(x, cfg.w_v), cfg.b_v), cfg.w_o), cfg.b_o);
    t.add("MHSA single token = (X W_V) W_O", max_abs_diff(multi_head_self_attention(x, cfg), expect),
          tol);
  }
  {
    const Matrix probs = softmax_rows(random_matrix(o.tokens, o.classes, rng, -3.0, 3.0));
    std::vector<std::size_t> targets;
    for (std::size_t i = 0; i < o.tokens; ++i) targets.push_back(rng.next() % o.classes);
    t.add("CE-equivalence loss gamma=0 alpha=1",
          std::abs(focal_loss(probs, targets, {{1.0}, 0.0}) - cross_entropy(probs, targets)), tol);
  }
  {
    Matrix probs(1, o.classes, 0.0);
    probs(0, 0) = 1.0;
    const std::vector<std::size_t> target{0};
    t.add("focal loss p_t=1 is 0", std::abs(focal_loss(probs, target, {{o.alpha}, o.gamma})), tol);
    Matrix logits(1, o.classes, -1000.0);
    logits(0, 0) = 0.0;
    t.add("focal grad p_t=1 is zero",
          max_abs_diff(focal_loss_grad(logits, target, {{o.alpha}, o.gamma}), Matrix(1, o.classes)),
          tol);
  }
  {
    const double fl = focal_loss(Matrix{{0.8, 0.2}}, std::vector<std::size_t>{0}, {{1.0}, 0.0});
    t.add("focal gamma=0 alpha=1 p_t=0.8 = -ln 0.8", std::abs(fl + std::log(0.8)), tol);
  }
  {
    const Matrix at{{1.0, 2.0}};
    const Matrix g = finite_diff_grad(
        [](const Matrix& z) {
          double s = 0.0;
          for (double v : z.data()) s += v * v;
          return s;
        },
        at);
    t.add("finite diff of sum of squares", max_abs_diff(g, Matrix{{2.0, 4.0}}), 1e-8);
    const Matrix zero = finite_diff_grad([](const Matrix&) { return 3.5; }, at);
    t.add("finite diff of a constant", max_abs_diff(zero, Matrix(1, 2)), tol);
  }
  {
    const std::vector<Matrix> maps{Matrix(3, 3, 1.75), Matrix{{0.0, 2.0}}};
    const auto gap = global_average_pool(maps);
    t.add("global average pool", std::max(std::abs(gap[0] - 1.75), std::abs(gap[1] - 1.0)), tol);
  }
  {
    HeadConfig hc;
    hc.input_width = o.d_model;
    hc.hidden1 = 16;
    hc.hidden2 = 8;
    const auto uniform = head_forward(random_vector(o.d_model, rng, -1.0, 1.0), HeadParams::zeros(hc));
    double err = 0.0;
    for (double p : uniform) err = std::max(err, std::abs(p - 0.25));
    t.add("head zero weights is uniform", err, tol);
    const auto probs = head_forward(random_vector(o.d_model, rng, -1.0, 1.0), HeadParams::random(hc, o.seed));
    t.add("head output sums to 1", std::abs(std::accumulate(probs.begin(), probs.end(), 0.0) - 1.0), tol);
  }
  {
    const std::vector<Matrix> zeros{Matrix(2, 2), Matrix(3, 1)};
    const std::vector<Matrix> three{Matrix{{3.0}}};
    t.add("l2 penalty", std::max(std::abs(l2_penalty(zeros, 0.7)), std::abs(l2_penalty(three, 0.5) - 4.5)),
          tol);
  }
  {
    HeadConfig bare;
    bare.input_width = 4;
    const double e1 = std::abs(static_cast<double>(dense_param_count(4, 4)) - 20.0);
    const double e2 = std::abs(static_cast<double>(param_count(bare)) - 20.0);
    t.add("param count dense 4->4 and bare head", std::max(e1, e2), 0.0);
  }
  return t;
}

inline std::string format_table(const CheckTable& t) {
  std::size_t width = 9;
  for (const auto& r : t.rows) width = std::max(width, r.operation.size());
  std::string out;
  char line[512];
  std::snprintf(line, sizeof line, "%-*s  %-12s  %-9s  %s\n", static_cast<int>(width), "operation",
                "max error", "tolerance", "result");
  out += line;
  for (const auto& r : t.rows) {
    std::snprintf(line, sizeof line, "%-*s  %-12.3e  %-9.0e  %s\n", static_cast<int>(width),
                  r.operation.c_str(), r.error, r.tolerance, r.pass ? "PASS" : "FAIL");
    out += line;
  }
  return out;
}

}  // namespace allprep::nn
