#pragma once

// Confusion matrix, accuracy / precision / recall / F1 (per class, macro,
// weighted, micro), one-vs-rest ROC AUC and the JSON report.
//
// Zero denominators yield 0 and raise the matching `*_undefined` flag.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "allprep/dataprep.hpp"
#include "allprep/error.hpp"
#include "allprep/nnkit.hpp"

namespace allprep {

class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t k) : k_(k), counts_(k * k, 0) {}
  ConfusionMatrix(std::size_t k, std::vector<std::int64_t> counts)
      : k_(k), counts_(std::move(counts)) {
    if (counts_.size() != k_ * k_) throw Error(Errc::ShapeMismatch, "confusion counts must be k*k");
    for (auto c : counts_) {
      if (c < 0) throw Error(Errc::InvalidArgument, "confusion counts must be >= 0");
    }
  }

  std::size_t k() const noexcept { return k_; }

  /// rows = actual, cols = predicted
  std::int64_t at(std::size_t actual, std::size_t predicted) const {
    return counts_.at(actual * k_ + predicted);
  }

  void add(std::size_t actual, std::size_t predicted, std::int64_t n = 1) {
    if (actual >= k_ || predicted >= k_) throw Error(Errc::UnknownLabel, "class index out of range");
    counts_[actual * k_ + predicted] += n;
  }

  std::int64_t total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }

  std::int64_t trace() const {
    std::int64_t t = 0;
    for (std::size_t i = 0; i < k_; ++i) t += at(i, i);
    return t;
  }

  /// Shard merge.
  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    if (o.k_ != k_) throw Error(Errc::ShapeMismatch, "confusion matrices differ in k");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    return *this;
  }

  std::span<const std::int64_t> counts() const noexcept { return counts_; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t k_ = 0;
  std::vector<std::int64_t> counts_;
};

inline ConfusionMatrix confusion_from_predictions(
    std::span<const std::pair<ClassLabel, ClassLabel>> records) {
  ConfusionMatrix cm(kNumClasses);
  for (const auto& [truth, pred] : records) cm.add(label_index(truth), label_index(pred));
  return cm;
}

/// Label strings must name one of the four classes.
inline ConfusionMatrix confusion_from_names(
    std::span<const std::pair<std::string, std::string>> records) {
  ConfusionMatrix cm(kNumClasses);
  for (const auto& [truth, pred] : records) {
    cm.add(label_index(parse_label(truth)), label_index(parse_label(pred)));
  }
  return cm;
}

struct Rate {
  double value = 0.0;
  bool undefined = false;
  friend bool operator==(const Rate&, const Rate&) = default;
};

namespace detail {

inline Rate safe_ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) return {0.0, true};
  return {static_cast<double>(num) / static_cast<double>(den), false};
}

}  // namespace detail

/// trace / total.
inline Rate accuracy(const ConfusionMatrix& cm) { return detail::safe_ratio(cm.trace(), cm.total()); }

struct ClassMetrics {
  std::int64_t support = 0;  // actual count
  std::int64_t tp = 0, fp = 0, fn = 0;
  Rate precision, recall, f1;
  friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

struct Averages {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  friend bool operator==(const Averages&, const Averages&) = default;
};

struct PrfReport {
  std::vector<ClassMetrics> per_class;
  Averages macro, weighted, micro;
  friend bool operator==(const PrfReport&, const PrfReport&) = default;
};

/// One-vs-rest counts per class; F1 = 2TP / (2TP + FP + FN), which equals
/// the harmonic mean of precision and recall whenever it is defined.
inline PrfReport precision_recall_f1(const ConfusionMatrix& cm) {
  PrfReport r;
  const std::size_t k = cm.k();
  std::int64_t sum_tp = 0, sum_fp = 0, sum_fn = 0;
  for (std::size_t c = 0; c < k; ++c) {
    ClassMetrics m;
    for (std::size_t j = 0; j < k; ++j) {
      m.support += cm.at(c, j);
      if (j != c) {
        m.fn += cm.at(c, j);
        m.fp += cm.at(j, c);
      }
    }
    m.tp = cm.at(c, c);
    m.precision = detail::safe_ratio(m.tp, m.tp + m.fp);
    m.recall = detail::safe_ratio(m.tp, m.tp + m.fn);
    m.f1 = detail::safe_ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn);
    if (m.tp == 0 && (m.precision.undefined || m.recall.undefined)) m.f1.undefined = true;
    sum_tp += m.tp;
    sum_fp += m.fp;
    sum_fn += m.fn;
    r.per_class.push_back(m);
  }
  const std::int64_t total = cm.total();
  if (k > 0) {
    for (const auto& m : r.per_class) {
      r.macro.precision += m.precision.value;
      r.macro.recall += m.recall.value;
      r.macro.f1 += m.f1.value;
      if (total > 0) {
        const double w = static_cast<double>(m.support) / static_cast<double>(total);
        r.weighted.precision += w * m.precision.value;
        r.weighted.recall += w * m.recall.value;
        r.weighted.f1 += w * m.f1.value;
      }
    }
    r.macro.precision /= static_cast<double>(k);
    r.macro.recall /= static_cast<double>(k);
    r.macro.f1 /= static_cast<double>(k);
  }
  r.micro.precision = detail::safe_ratio(sum_tp, sum_tp + sum_fp).value;
  r.micro.recall = detail::safe_ratio(sum_tp, sum_tp + sum_fn).value;
  r.micro.f1 = detail::safe_ratio(2 * sum_tp, 2 * sum_tp + sum_fp + sum_fn).value;
  return r;
}

struct AucReport {
  std::vector<std::optional<double>> per_class;  // nullopt: only one class present
  std::optional<double> macro;                    // mean over defined classes
  friend bool operator==(const AucReport&, const AucReport&) = default;
};

/// Rank-sum (Mann-Whitney U) AUC of one score column against a binary
/// labelling; tied scores share their average rank. nullopt when either
/// side is empty.
inline std::optional<double> auc_binary(std::span<const double> scores,
                                        std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw Error(Errc::ShapeMismatch, "auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::int64_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) {
      if (positive[order[t]]) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j + 1;
  }
  const std::int64_t n_neg = static_cast<std::int64_t>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double u = rank_sum - static_cast<double>(n_pos) * static_cast<double>(n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// One-vs-rest AUC per class and its macro mean. Score rows must sum to 1
/// within 1e-6.
inline AucReport auc_ovr(const nn::Matrix& scores, std::span<const std::size_t> truths) {
  if (scores.rows() != truths.size()) throw Error(Errc::ShapeMismatch, "auc: rows != truths");
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    double s = 0.0;
    for (double v : scores.row(i)) {
      if (!std::isfinite(v)) throw Error(Errc::InvalidDistribution, "auc: non-finite score");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-6) {
      throw Error(Errc::InvalidDistribution, "score row " + std::to_string(i) + " sums to " + std::to_string(s));
    }
  }
  for (auto t : truths) {
    if (t >= scores.cols()) throw Error(Errc::UnknownLabel, "auc: truth index out of range");
  }
  AucReport r;
  std::vector<double> column(scores.rows());
  std::vector<std::uint8_t> pos(scores.rows());
  double sum = 0.0;
  int defined = 0;
  for (std::size_t c = 0; c < scores.cols(); ++c) {
    for (std::size_t i = 0; i < scores.rows(); ++i) {
      column[i] = scores(i, c);
      pos[i] = truths[i] == c ? 1 : 0;
    }
    auto a = auc_binary(column, pos);
    if (a) {
      sum += *a;
      ++defined;
    }
    r.per_class.push_back(a);
  }
  if (defined > 0) r.macro = sum / defined;
  return r;
}

struct MetricsReport {
  std::vector<std::string> labels;
  ConfusionMatrix confusion;
  Rate accuracy;
  PrfReport prf;
  std::optional<AucReport> auc;
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline std::vector<std::string> default_label_names() {
  std::vector<std::string> names;
  for (auto l : kAllLabels) names.emplace_back(label_name(l));
  return names;
}

inline MetricsReport build_report(const ConfusionMatrix& cm, std::optional<AucReport> auc = {}) {
  MetricsReport r;
  if (cm.k() == kNumClasses) {
    r.labels = default_label_names();
  } else {
    for (std::size_t i = 0; i < cm.k(); ++i) r.labels.push_back(std::to_string(i));
  }
  r.confusion = cm;
  r.accuracy = accuracy(cm);
  r.prf = precision_recall_f1(cm);
  r.auc = std::move(auc);
  return r;
}

// ---- JSON -------------------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json averages_json(const Averages& a) {
  nlohmann::ordered_json j;
  j["precision"] = a.precision;
  j["recall"] = a.recall;
  j["f1"] = a.f1;
  return j;
}

inline Averages averages_from(const nlohmann::json& j) {
  return {j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>()};
}

inline nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline std::optional<double> optional_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace detail

/// Keys are emitted in a fixed order; the AUC block only when present.
inline nlohmann::ordered_json report_to_json(const MetricsReport& r) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["labels"] = r.labels;
  j["total"] = r.confusion.total();
  j["accuracy"] = r.accuracy.value;
  j["accuracy_undefined"] = r.accuracy.undefined;
  auto per = ordered_json::array();
  ordered_json flags = ordered_json::array();
  for (std::size_t c = 0; c < r.prf.per_class.size(); ++c) {
    const auto& m = r.prf.per_class[c];
    ordered_json e;
    e["label"] = r.labels.at(c);
    e["support"] = m.support;
    e["tp"] = m.tp;
    e["fp"] = m.fp;
    e["fn"] = m.fn;
    e["precision"] = m.precision.value;
    e["recall"] = m.recall.value;
    e["f1"] = m.f1.value;
    auto f = ordered_json::array();
    if (m.precision.undefined) f.push_back("precision_undefined");
    if (m.recall.undefined) f.push_back("recall_undefined");
    if (m.f1.undefined) f.push_back("f1_undefined");
    for (const auto& s : f) flags.push_back(r.labels.at(c) + "." + s.get<std::string>());
    e["flags"] = f;
    per.push_back(e);
  }
  if (r.accuracy.undefined) flags.push_back("accuracy_undefined");
  j["per_class"] = per;
  j["macro"] = detail::averages_json(r.prf.macro);
  j["weighted"] = detail::averages_json(r.prf.weighted);
  j["micro"] = detail::averages_json(r.prf.micro);
  if (r.auc) {
    ordered_json a;
    ordered_json pc;
    for (std::size_t c = 0; c < r.auc->per_class.size(); ++c) {
      pc[r.labels.at(c)] = detail::optional_json(r.auc->per_class[c]);
    }
    a["per_class"] = pc;
    a["macro"] = detail::optional_json(r.auc->macro);
    j["auc"] = a;
  }
  auto rows = ordered_json::array();
  for (std::size_t i = 0; i < r.confusion.k(); ++i) {
    auto row = ordered_json::array();
    for (std::size_t k = 0; k < r.confusion.k(); ++k) row.push_back(r.confusion.at(i, k));
    rows.push_back(row);
  }
  j["confusion_matrix"] = rows;
  j["flags"] = flags;
  return j;
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  try {
    MetricsReport r;
    r.labels = j.at("labels").get<std::vector<std::string>>();
    const std::size_t k = r.labels.size();
    std::vector<std::int64_t> counts;
    for (const auto& row : j.at("confusion_matrix")) {
      for (const auto& v : row) counts.push_back(v.get<std::int64_t>());
    }
    r.confusion = ConfusionMatrix(k, std::move(counts));
    r.accuracy = {j.at("accuracy").get<double>(), j.at("accuracy_undefined").get<bool>()};
    for (const auto& e : j.at("per_class")) {
      ClassMetrics m;
      m.support = e.at("support").get<std::int64_t>();
      m.tp = e.at("tp").get<std::int64_t>();
      m.fp = e.at("fp").get<std::int64_t>();
      m.fn = e.at("fn").get<std::int64_t>();
      const auto f = e.at("flags").get<std::vector<std::string>>();
      auto has = [&](const char* s) { return std::find(f.begin(), f.end(), s) != f.end(); };
      m.precision = {e.at("precision").get<double>(), has("precision_undefined")};
      m.recall = {e.at("recall").get<double>(), has("recall_undefined")};
      m.f1 = {e.at("f1").get<double>(), has("f1_undefined")};
      r.prf.per_class.push_back(m);
    }
    r.prf.macro = detail::averages_from(j.at("macro"));
    r.prf.weighted = detail::averages_from(j.at("weighted"));
    r.prf.micro = detail::averages_from(j.at("micro"));
    if (j.contains("auc")) {
      AucReport a;
      const auto& pc = j.at("auc").at("per_class");
      for (const auto& name : r.labels) a.per_class.push_back(detail::optional_from(pc.at(name)));
      a.macro = detail::optional_from(j.at("auc").at("macro"));
      r.auc = std::move(a);
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("metrics report: ") + e.what());
  }
}

// ---- CSV inputs ---------------------------------------------------------------------

namespace detail {

/// Comma-separated fields; double quotes may wrap a field and "" escapes a quote.
inline std::vector<std::string> split_csv_line(const std::string& line, bool& ok) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  ok = true;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) ok = false;
  out.push_back(std::move(cur));
  return out;
}

template <typename RowFn>
void read_csv(std::istream& in, const std::string& name, const std::vector<std::string>& header,
              RowFn&& on_row) {
  std::string line;
  std::size_t lineno = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    bool ok = true;
    auto fields = split_csv_line(line, ok);
    auto fail = [&](const std::string& why) {
      throw Error(Errc::ParseError, name + ":" + std::to_string(lineno) + ": " + why);
    };
    if (!ok) fail("unterminated quote");
    if (!saw_header) {
      if (fields != header) {
        std::string expected;
        for (const auto& h : header) expected += (expected.empty() ? "" : ",") + h;
        fail("expected header '" + expected + "'");
      }
      saw_header = true;
      continue;
    }
    if (fields.size() != header.size()) {
      fail("expected " + std::to_string(header.size()) + " fields, got " +
           std::to_string(fields.size()));
    }
    try {
      on_row(fields);
    } catch (const Error& e) {
      fail(e.what());
    }
  }
  if (!saw_header) throw Error(Errc::ParseError, name + ": missing header");
}

inline double parse_double_field(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw Error(Errc::ParseError, "not a number: '" + s + "'");
  return v;
}

inline std::ifstream open_for_read(const fs::path& p) {
  std::error_code ec;
  if (!fs::is_regular_file(p, ec)) throw Error(Errc::FileNotFound, p.string());
  std::ifstream in(p);
  if (!in) throw Error(Errc::IoError, "cannot open " + p.string());
  return in;
}

}  // namespace detail

struct PredictionRow {
  std::string path;
  ClassLabel truth;
  ClassLabel predicted;
};

inline const std::vector<std::string>& predictions_header() {
  static const std::vector<std::string> h = {"path", "true_label", "pred_label"};
  return h;
}

inline const std::vector<std::string>& scores_header() {
  static const std::vector<std::string> h = {"path", "true_label", "score_Benign",
                                             "score_EarlyPreB", "score_PreB", "score_ProB"};
  return h;
}

inline std::vector<PredictionRow> read_predictions_csv(std::istream& in,
                                                       const std::string& name = "predictions") {
  std::vector<PredictionRow> rows;
  detail::read_csv(in, name, predictions_header(), [&](const std::vector<std::string>& f) {
    rows.push_back({f[0], parse_label(f[1]), parse_label(f[2])});
  });
  return rows;
}

inline std::vector<PredictionRow> read_predictions_csv(const fs::path& p) {
  auto in = detail::open_for_read(p);
  return read_predictions_csv(in, p.string());
}

struct ScoreTable {
  std::vector<std::string> paths;
  std::vector<std::size_t> truths;
  nn::Matrix scores;  // rows x 4
};

inline ScoreTable read_scores_csv(std::istream& in, const std::string& name = "scores") {
  ScoreTable t;
  std::vector<double> flat;
  detail::read_csv(in, name, scores_header(), [&](const std::vector<std::string>& f) {
    const auto truth = label_index(parse_label(f[1]));
    double row[kNumClasses];
    for (std::size_t c = 0; c < kNumClasses; ++c) row[c] = detail::parse_double_field(f[2 + c]);
    t.paths.push_back(f[0]);
    t.truths.push_back(truth);
    flat.insert(flat.end(), row, row + kNumClasses);
  });
  t.scores = nn::Matrix(t.paths.size(), kNumClasses, std::move(flat));
  return t;
}

inline ScoreTable read_scores_csv(const fs::path& p) {
  auto in = detail::open_for_read(p);
  return read_scores_csv(in, p.string());
}

inline ConfusionMatrix confusion_from_rows(std::span<const PredictionRow> rows) {
  ConfusionMatrix cm(kNumClasses);
  for (const auto& r : rows) cm.add(label_index(r.truth), label_index(r.predicted));
  return cm;
}

}  // namespace allprep
