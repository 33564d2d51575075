// allprep: smear preprocessing, dataset tooling, nn self-checks and evaluation.
//
// Exit codes: 0 success, 1 checks failed or warnings under --strict,
// 2 an operation failed, other nonzero values for usage errors.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "allprep/allprep.hpp"

namespace fs = std::filesystem;
using namespace allprep;

namespace {

constexpr int kExitChecksFailed = 1;
constexpr int kExitError = 2;

int default_jobs() {
  const char* env = std::getenv("ALLPREP_JOBS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1 || v > 1024) {
    throw Error(Errc::InvalidArgument, std::string("ALLPREP_JOBS must be an integer in [1,1024], got '") + env + "'");
  }
  return static_cast<int>(v);
}

std::string read_text(const fs::path& p) {
  const auto bytes = allprep::detail::read_file_bytes(p);
  return {bytes.begin(), bytes.end()};
}

void write_text(const fs::path& p, const std::string& text) {
  allprep::detail::write_file_bytes(
      p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void print_counts(const SplitCounts& c, const std::string& title) {
  std::printf("%s\n", title.c_str());
  std::printf("%-10s %7s %7s %7s %7s\n", "class", "train", "val", "test", "total");
  std::size_t tt = 0, tv = 0, ts = 0;
  for (auto l : kAllLabels) {
    const auto tr = c.of(l, Split::Train), va = c.of(l, Split::Val), te = c.of(l, Split::Test);
    std::printf("%-10s %7zu %7zu %7zu %7zu\n", std::string(label_name(l)).c_str(), tr, va, te,
                tr + va + te + c.of(l, Split::Unassigned));
    tt += tr;
    tv += va;
    ts += te;
  }
  std::printf("%-10s %7zu %7zu %7zu %7zu\n", "total", tt, tv, ts, tt + tv + ts + c.total(Split::Unassigned));
}

// ---- preprocess ----------------------------------------------------------------

struct PreprocessArgs {
  std::string input, output, config;
  int k = 7;
  std::uint64_t seed = 0;
  std::string threshold = "otsu";
  std::string foreground = "threshold";
  int se_size = 3;
  std::string se_shape = "square";
  std::string morph_order = "fill,open,close";
  int width = kModelInputSize.width, height = kModelInputSize.height;
  int jobs = 1;
  bool debug_stages = false, dump_centroids = false, strict = false;
};

int run_preprocess(const PreprocessArgs& a, const CLI::App& sub) {
  PipelineConfig cfg;
  if (!a.config.empty()) cfg = config_from_json(nlohmann::json::parse(read_text(a.config)), cfg);
  auto given = [&](const char* name) { return sub.get_option(name)->count() > 0; };
  if (given("--k")) cfg.k = a.k;
  if (given("--seed")) cfg.seed = a.seed;
  if (given("--threshold")) cfg.foreground.spec = parse_threshold(a.threshold);
  if (given("--foreground")) cfg.foreground.kind = parse_foreground(a.foreground);
  if (given("--se-size")) cfg.se.size = a.se_size;
  if (given("--se-shape")) cfg.se.shape = parse_se_shape(a.se_shape);
  if (given("--morph-order")) cfg.morph_order = parse_morph_order(a.morph_order);
  if (given("--width")) cfg.target.width = a.width;
  if (given("--height")) cfg.target.height = a.height;
  cfg.validate();

  const auto items = collect_inputs(a.input);
  fs::create_directories(a.output);
  const auto reports = preprocess_batch(items, a.output, cfg,
                                        {a.jobs, a.debug_stages, a.dump_centroids});
  std::size_t failed = 0, warned = 0;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    std::fprintf(stderr, "[%zu/%zu] %s", i + 1, reports.size(), r.input.generic_string().c_str());
    if (!r.ok) {
      ++failed;
      std::fprintf(stderr, ": error: %s\n", r.error.c_str());
      continue;
    }
    std::fprintf(stderr, " -> %s", r.output.generic_string().c_str());
    if (r.threshold) std::fprintf(stderr, " threshold=%d", *r.threshold);
    std::fprintf(stderr, " foreground=%zu\n", r.foreground_pixels);
    for (const auto& w : r.warnings) std::fprintf(stderr, "  warning: %s\n", w.c_str());
    if (!r.warnings.empty()) ++warned;
  }
  std::fprintf(stderr, "processed %zu image(s): %zu failed, %zu with warnings\n", reports.size(),
               failed, warned);
  if (failed) return kExitError;
  if (a.strict && warned) return kExitChecksFailed;
  return 0;
}

// ---- dataset -------------------------------------------------------------------

struct SplitArgs {
  std::string root, manifest, out, preprocessed;
  std::size_t test_per_class = 100;
  double val_frac = 0.1;
  std::uint64_t seed = 0;
  std::size_t target_per_class = 1800;
};

int run_split(const SplitArgs& a) {
  if (a.root.empty() == a.manifest.empty()) {
    throw Error(Errc::InvalidArgument, "dataset split needs exactly one of --root or --manifest");
  }
  DatasetManifest m = a.root.empty() ? read_manifest(a.manifest) : build_manifest(a.root);
  m = stratified_split(std::move(m), a.test_per_class, a.val_frac, a.seed);
  if (!a.preprocessed.empty()) {
    const auto added = merge_preprocessed(m, a.preprocessed);
    assign_train_val(m, a.val_frac, a.seed);
    std::fprintf(stderr, "merged %zu preprocessed image(s)\n", added);
  }
  write_manifest(m, a.out);
  print_counts(m.counts(), "split");

  // Augmentation arithmetic only; no images are written.
  AugmentOptions proj;
  proj.target_per_class = a.target_per_class;
  proj.seed = a.seed;
  proj.val_frac = a.val_frac;
  proj.write_images = false;
  try {
    const auto p = augment_to_target(m, proj);
    print_counts(p.manifest.counts(),
                 "after augmentation to " + std::to_string(a.target_per_class) + " per class");
  } catch (const Error& e) {
    if (e.code() != Errc::TargetBelowCurrent) throw;
    std::fprintf(stderr, "note: %s\n", e.what());
  }
  std::fprintf(stderr, "wrote %s (%zu records)\n", a.out.c_str(), m.records.size());
  return 0;
}

struct AugmentArgs {
  std::string manifest, out_dir, output;
  std::size_t target_per_class = 1800;
  std::uint64_t seed = 0;
  double val_frac = 0.1;
  int jobs = 1;
};

int run_augment(const AugmentArgs& a) {
  const DatasetManifest m = read_manifest(a.manifest);
  AugmentOptions opt;
  opt.target_per_class = a.target_per_class;
  opt.seed = a.seed;
  opt.out_dir = a.out_dir;
  opt.val_frac = a.val_frac;
  opt.jobs = a.jobs;
  const auto res = augment_to_target(m, opt);
  const fs::path out = a.output.empty() ? fs::path(a.out_dir) / "manifest.jsonl" : fs::path(a.output);
  if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
  write_manifest(res.manifest, out);
  print_counts(res.manifest.counts(), "augmented");
  std::fprintf(stderr, "wrote %zu image(s); manifest %s\n", res.written, out.generic_string().c_str());
  return 0;
}

// ---- nn --------------------------------------------------------------------------

int run_nn(bool gradcheck, const nn::NnCheckOptions& o) {
  const auto table = gradcheck ? nn::run_gradcheck(o) : nn::run_selfcheck(o);
  std::printf("%s", nn::format_table(table).c_str());
  const bool ok = table.all_pass();
  std::printf("%s: %s\n", table.title.c_str(), ok ? "all checks passed" : "FAILED");
  return ok ? 0 : kExitChecksFailed;
}

// ---- eval ------------------------------------------------------------------------

struct EvalArgs {
  std::string predictions, scores, report;
};

int run_eval(const EvalArgs& a) {
  const auto rows = read_predictions_csv(fs::path(a.predictions));
  const auto cm = confusion_from_rows(rows);
  std::optional<AucReport> auc;
  if (!a.scores.empty()) {
    const auto table = read_scores_csv(fs::path(a.scores));
    std::map<std::string, ClassLabel> truth_of;
    for (const auto& r : rows) truth_of[r.path] = r.truth;
    for (std::size_t i = 0; i < table.paths.size(); ++i) {
      auto it = truth_of.find(table.paths[i]);
      if (it != truth_of.end() && label_index(it->second) != table.truths[i]) {
        throw Error(Errc::ShapeMismatch, "scores and predictions disagree on the label of " + table.paths[i]);
      }
    }
    auc = auc_ovr(table.scores, table.truths);
  }
  const auto report = build_report(cm, auc);
  write_text(a.report, report_to_json(report).dump(2) + "\n");

  std::printf("samples: %lld\n", static_cast<long long>(cm.total()));
  std::printf("accuracy: %.4f%s\n", report.accuracy.value, report.accuracy.undefined ? " (undefined)" : "");
  std::printf("%-10s %9s %9s %9s %8s", "class", "precision", "recall", "f1", "support");
  if (auc) std::printf(" %8s", "auc");
  std::printf("\n");
  for (std::size_t c = 0; c < report.prf.per_class.size(); ++c) {
    const auto& m = report.prf.per_class[c];
    std::printf("%-10s %9.4f %9.4f %9.4f %8lld", report.labels[c].c_str(), m.precision.value,
                m.recall.value, m.f1.value, static_cast<long long>(m.support));
    if (auc) {
      if (auc->per_class[c]) {
        std::printf(" %8.4f", *auc->per_class[c]);
      } else {
        std::printf(" %8s", "n/a");
      }
    }
    std::printf("\n");
  }
  const auto avg = [](const char* name, const Averages& v) {
    std::printf("%-10s %9.4f %9.4f %9.4f\n", name, v.precision, v.recall, v.f1);
  };
  avg("macro", report.prf.macro);
  avg("weighted", report.prf.weighted);
  avg("micro", report.prf.micro);
  if (auc) {
    if (auc->macro) {
      std::printf("macro auc: %.4f\n", *auc->macro);
    } else {
      std::printf("macro auc: n/a\n");
    }
  }
  std::fprintf(stderr, "wrote %s\n", a.report.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bone-marrow smear preprocessing and evaluation toolkit"};
  app.require_subcommand(1);

  int jobs = 1;
  try {
    jobs = default_jobs();
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }

  PreprocessArgs pa;
  pa.jobs = jobs;
  auto* pre = app.add_subcommand("preprocess", "Segment and mask smear images");
  pre->add_option("input", pa.input, "Image file or directory")->required();
  pre->add_option("output", pa.output, "Output directory")->required();
  pre->add_option("--config", pa.config, "JSON pipeline config; flags override it");
  pre->add_option("--k", pa.k, "Number of a* clusters");
  pre->add_option("--seed", pa.seed, "K-means seed");
  pre->add_option("--threshold", pa.threshold, "otsu or an integer 0-255");
  pre->add_option("--foreground", pa.foreground, "max-a or threshold");
  pre->add_option("--se-size", pa.se_size, "Structuring element size (odd)");
  pre->add_option("--se-shape", pa.se_shape, "square or disk");
  pre->add_option("--morph-order", pa.morph_order, "Comma list of fill,open,close");
  pre->add_option("--width", pa.width, "Output width");
  pre->add_option("--height", pa.height, "Output height");
  pre->add_option("--jobs", pa.jobs, "Worker threads (default $ALLPREP_JOBS or 1)")
      ->check(CLI::Range(1, 1024));
  pre->add_flag("--debug-stages", pa.debug_stages, "Write intermediate stage images");
  pre->add_flag("--dump-centroids", pa.dump_centroids, "Write cluster centroids as JSON");
  pre->add_flag("--strict", pa.strict, "Treat warnings as failures");

  auto* dataset = app.add_subcommand("dataset", "Dataset manifest tooling");
  dataset->require_subcommand(1);

  SplitArgs sa;
  auto* split = dataset->add_subcommand("split", "Stratified train/val/test split");
  split->add_option("--root", sa.root, "Class-per-directory image tree");
  split->add_option("--manifest", sa.manifest, "Existing manifest.jsonl");
  split->add_option("--out", sa.out, "Manifest to write")->required();
  split->add_option("--test-per-class", sa.test_per_class, "Held-out originals per class");
  split->add_option("--val-frac", sa.val_frac, "Validation fraction of the train+val pool");
  split->add_option("--seed", sa.seed, "Split seed");
  split->add_option("--preprocessed", sa.preprocessed, "Tree of preprocessed copies to merge");
  split->add_option("--target-per-class", sa.target_per_class,
                    "Per-class size used for the post-augmentation counts");

  AugmentArgs aa;
  aa.jobs = jobs;
  auto* aug = dataset->add_subcommand("augment", "Augment train+val pools to a per-class target");
  aug->add_option("--manifest", aa.manifest, "Split manifest")->required();
  aug->add_option("--out-dir", aa.out_dir, "Directory for augmented images")->required();
  aug->add_option("--output", aa.output, "Manifest to write (default <out-dir>/manifest.jsonl)");
  aug->add_option("--target-per-class", aa.target_per_class, "Train+val records per class");
  aug->add_option("--seed", aa.seed, "Augmentation seed");
  aug->add_option("--val-frac", aa.val_frac, "Validation fraction after augmentation");
  aug->add_option("--jobs", aa.jobs, "Worker threads")->check(CLI::Range(1, 1024));

  nn::NnCheckOptions no;
  auto* nncmd = app.add_subcommand("nn", "Attention and focal-loss self-verification");
  nncmd->require_subcommand(1);
  auto add_nn_flags = [&](CLI::App* c) {
    c->add_option("--heads", no.heads, "Attention heads");
    c->add_option("--d-model", no.d_model, "Model width");
    c->add_option("--tokens", no.tokens, "Tokens / batch rows");
    c->add_option("--gamma", no.gamma, "Focal gamma");
    c->add_option("--alpha", no.alpha, "Focal alpha");
    c->add_option("--seed", no.seed, "RNG seed");
  };
  auto* gc = nncmd->add_subcommand("gradcheck", "Analytic vs finite-difference gradients");
  auto* sc = nncmd->add_subcommand("selfcheck", "Closed-form identities");
  add_nn_flags(gc);
  add_nn_flags(sc);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Metrics report from prediction CSVs");
  ev->add_option("--predictions", ea.predictions, "path,true_label,pred_label CSV")->required();
  ev->add_option("--scores", ea.scores, "Per-class score CSV");
  ev->add_option("--report", ea.report, "JSON report to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (pre->parsed()) return run_preprocess(pa, *pre);
    if (split->parsed()) return run_split(sa);
    if (aug->parsed()) return run_augment(aa);
    if (gc->parsed()) return run_nn(true, no);
    if (sc->parsed()) return run_nn(false, no);
    if (ev->parsed()) return run_eval(ea);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: ParseError: %s\n", e.what());
    return kExitError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
