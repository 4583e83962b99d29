// traffic: synthetic-corpus generation, CNN training, transfer learning,
// count-baseline classification, evaluation, and PCA analysis in one CLI.
//
// Every subcommand resolves file config + overrides into a flat key=value
// record, writes it next to its outputs, and produces byte-identical
// artifacts when re-run from that record.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "traffic/baseline.hpp"
#include "traffic/config.hpp"
#include "traffic/dataset.hpp"
#include "traffic/error.hpp"
#include "traffic/metrics.hpp"
#include "traffic/model.hpp"
#include "traffic/optimizer.hpp"
#include "traffic/pca.hpp"
#include "traffic/pipeline.hpp"
#include "traffic/synth.hpp"
#include "traffic/weights_io.hpp"

namespace fs = std::filesystem;
using namespace traffic;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string data_dir;
  std::optional<uint64_t> seed;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_data = true) {
  cmd->add_option("--config", args.config_path, "key=value config file");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "run seed (overrides config)");
  cmd->add_option("--set", args.sets, "override a config key, e.g. --set epochs=3")
      ->take_all();
  if (with_data) cmd->add_option("--data", args.data_dir, "dataset root directory");
}

RunConfig collect_config(const CommonArgs& args) {
  RunConfig cfg = args.config_path.empty() ? RunConfig{} : RunConfig::from_file(args.config_path);
  for (const auto& kv : args.sets) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed) cfg.set("seed", std::to_string(*args.seed));
  if (!args.out_dir.empty()) cfg.set("out", args.out_dir);
  if (!args.data_dir.empty()) cfg.set("data", args.data_dir);
  return cfg;
}

// ConfigReader wrapper that records the effective value of every key it
// touches, so the emitted config reproduces the run including defaults.
struct Resolver {
  const RunConfig& cfg;
  ConfigReader reader;
  RunConfig resolved;

  Resolver(const RunConfig& c, std::set<std::string> allowed) : cfg(c), reader(c, std::move(allowed)) {}

  std::string echo(const std::string& key, const std::string& fallback) {
    resolved.set(key, cfg.has(key) ? cfg.values.at(key) : fallback);
    return resolved.values.at(key);
  }
  std::string str(const std::string& key, const std::string& fallback) {
    auto v = reader.str(key, fallback);
    echo(key, fallback);
    return v;
  }
  std::string required_str(const std::string& key) {
    auto v = reader.required_str(key);
    resolved.set(key, v);
    return v;
  }
  int64_t integer(const std::string& key, int64_t fb, int64_t lo, int64_t hi) {
    auto v = reader.integer(key, fb, lo, hi);
    echo(key, std::to_string(fb));
    return v;
  }
  double number(const std::string& key, double fb, double lo, double hi) {
    auto v = reader.number(key, fb, lo, hi);
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", fb);
    echo(key, buf);
    return v;
  }
  bool flag(const std::string& key, bool fb) {
    auto v = reader.flag(key, fb);
    echo(key, fb ? "true" : "false");
    return v;
  }
  uint64_t seed(const std::string& key, uint64_t fb) {
    auto v = reader.seed(key, fb);
    echo(key, std::to_string(fb));
    return v;
  }
  void finish() { reader.finish(); }
};

fs::path resolve_out(Resolver& r, const char* subcommand) {
  std::string out = r.str("out", "");
  if (out.empty()) {
    if (const char* root = std::getenv("TRAFFIC_OUT_ROOT"))
      out = (fs::path(root) / subcommand).string();
  }
  if (out.empty())
    r.reader.fail("missing output directory (key 'out', flag --out, or TRAFFIC_OUT_ROOT)");
  else
    r.resolved.set("out", out);
  return out;
}

std::array<int64_t, 2> parse_range(Resolver& r, const std::string& key, const std::string& fb) {
  std::string v = r.str(key, fb);
  long long lo = 0, hi = 0;
  if (std::sscanf(v.c_str(), "%lld:%lld", &lo, &hi) != 2 || lo < 1 || hi < lo) {
    r.reader.fail("key '" + key + "' wants 'lo:hi' with 1 <= lo <= hi, got '" + v + "'");
    return {1, 1};
  }
  return {lo, hi};
}

PreprocessMode parse_preprocess(Resolver& r) {
  std::string v = r.str("pre_process", "scale_pm1");
  if (v == "scale_pm1") return PreprocessMode::scale_pm1();
  float a = 0, b = 0, c = 0;
  if (std::sscanf(v.c_str(), "mean_subtract:%f,%f,%f", &a, &b, &c) == 3)
    return PreprocessMode::mean_subtract({a, b, c});
  r.reader.fail("pre_process must be scale_pm1 or mean_subtract:r,g,b, got '" + v + "'");
  return PreprocessMode::scale_pm1();
}

Activation parse_activation_key(Resolver& r) {
  std::string v = r.str("activation", "relu");
  if (v == "relu") return Activation::Relu;
  if (v == "tanh") return Activation::Tanh;
  r.reader.fail("activation must be relu or tanh, got '" + v + "'");
  return Activation::Relu;
}

CatalogId parse_arch_key(Resolver& r) {
  std::string v = r.str("arch", "VGG_S");
  try {
    return parse_catalog(v);
  } catch (const ConfigError& e) {
    r.reader.fail(e.what());
    return CatalogId::VGGSmall;
  }
}

SplitPlan parse_split_keys(Resolver& r, uint64_t seed, const char* default_split) {
  std::string split = r.str("split", default_split);
  std::string mode = r.str("split_mode", "by_video");
  try {
    return SplitPlan::parse(split, mode, seed);
  } catch (const ConfigError& e) {
    r.reader.fail(e.what());
    return SplitPlan{};
  }
}

std::string shape_x(const Shape& dims) {
  std::string s;
  for (size_t i = 0; i < dims.size(); ++i) s += (i ? "x" : "") + std::to_string(dims[i]);
  return s;
}

std::string with_commas(int64_t v) {
  std::string raw = std::to_string(v);
  std::string out;
  int c = 0;
  for (size_t i = raw.size(); i-- > 0;) {
    out.insert(out.begin(), raw[i]);
    if (++c % 3 == 0 && i > 0) out.insert(out.begin(), ',');
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void write_import_report(const ImportReport& report, const fs::path& path) {
  std::string text;
  auto line = [&](const char* tag, const std::vector<std::string>& names) {
    text += tag;
    text += ":";
    for (const auto& n : names) text += " " + n;
    text += "\n";
  };
  line("matched", report.matched);
  line("unmatched_model", report.unmatched_model);
  line("unmatched_file", report.unmatched_file);
  write_text(path, text);
}

std::vector<DiagnosticsRow> diagnostics_rows(const ConfusionMatrix& cm,
                                             std::optional<int64_t> batches = std::nullopt) {
  std::vector<DiagnosticsRow> rows;
  for (auto [a, b] : diagnostic_pairs()) {
    try {
      auto d = pairwise_diagnostics(cm, a, b);
      rows.push_back({pair_name(a, b), batches, d.sensitivity, d.specificity, d.accuracy});
    } catch (const DataError& e) {
      std::cerr << "warning: skipping pair " << pair_name(a, b) << ": " << e.what() << "\n";
    }
  }
  return rows;
}

void emit_diagnostics_pair(const ConfusionMatrix& cm, const fs::path& dir,
                           const std::string& stem, std::optional<int64_t> batches = std::nullopt) {
  auto rows = diagnostics_rows(cm, batches);
  emit_diagnostics(rows, ReportFormat::Markdown, dir / (stem + ".md"));
  emit_diagnostics(rows, ReportFormat::Csv, dir / (stem + ".csv"));
}

void write_predictions_csv(const DatasetIndex& index, const std::vector<int>& predicted,
                           const std::vector<std::array<double, 3>>& probs, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "sample,video_id,frame_index,true,pred,p_low,p_medium,p_heavy\n";
  char buf[160];
  for (size_t i = 0; i < index.samples.size(); ++i) {
    const auto& s = index.samples[i];
    if (predicted[i] < 0) continue;
    std::snprintf(buf, sizeof buf, "%zu,%s,%lld,%s,%s,%.9g,%.9g,%.9g\n", i, s.video_id.c_str(),
                  static_cast<long long>(s.frame_index), label_name(s.label),
                  label_name(static_cast<CongestionLabel>(predicted[i])), probs[i][0], probs[i][1],
                  probs[i][2]);
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path.string());
}

// keys shared by train / transfer / eval
void add_train_keys(std::set<std::string>& keys) {
  for (const char* k : {"out", "seed", "data", "arch", "num_dense_nodes", "activation",
                        "batch_size", "epochs", "steps_per_epoch", "learning_rate", "pre_process",
                        "split", "split_mode", "shuffle"})
    keys.insert(k);
}

struct TrainSetup {
  fs::path out;
  uint64_t seed = 0;
  CatalogId arch = CatalogId::VGGSmall;
  BuildParams build;
  PreprocessMode pre;
  SplitPlan plan;
  TrainConfig cfg;
  std::string data;
  std::string hyper;  // rendered for the summary table
};

TrainSetup read_train_setup(Resolver& r, const char* subcommand, const char* default_split) {
  TrainSetup s;
  s.out = resolve_out(r, subcommand);
  s.seed = r.seed("seed", 0);
  s.data = r.required_str("data");
  s.arch = parse_arch_key(r);
  s.build.num_dense_nodes = r.integer("num_dense_nodes", 409, 1, 1 << 20);
  s.build.cnn_activation = parse_activation_key(r);
  s.pre = parse_preprocess(r);
  s.cfg.batch_size = r.integer("batch_size", 32, 1, 1 << 20);
  s.cfg.epochs = r.integer("epochs", 10, 1, 1 << 20);
  int64_t steps = r.integer("steps_per_epoch", 0, 0, 1 << 30);
  if (steps > 0) s.cfg.steps_per_epoch = steps;
  s.cfg.adam.alpha = r.number("learning_rate", 0.00005, 0.0, 1.0);
  s.cfg.shuffle = r.flag("shuffle", true);
  s.cfg.seed = s.seed;
  s.plan = parse_split_keys(r, s.seed, default_split);
  char hyper[256];
  std::snprintf(hyper, sizeof hyper, "batch_size=%lld, epochs=%lld, steps=%s, lr=%g, pre=%s",
                static_cast<long long>(s.cfg.batch_size), static_cast<long long>(s.cfg.epochs),
                s.cfg.steps_per_epoch ? std::to_string(*s.cfg.steps_per_epoch).c_str() : "auto",
                s.cfg.adam.alpha, s.pre.tag().c_str());
  s.hyper = hyper;
  return s;
}

// ---- subcommands -----------------------------------------------------------

int cmd_synth(const CommonArgs& args) {
  RunConfig cfg = collect_config(args);
  std::set<std::string> keys{"out", "seed", "videos_per_class", "videos_low", "videos_medium",
                             "videos_heavy", "frames_per_video", "height", "width", "lanes",
                             "weather_mix", "fog_density", "rain_streaks", "rain_intensity",
                             "corrupt_blocks", "jump_probability", "label_mode", "count_low",
                             "count_medium", "count_heavy", "min_len", "max_len", "speed_min",
                             "speed_max", "non_overlap"};
  Resolver r(cfg, keys);
  fs::path out = resolve_out(r, "synth");
  uint64_t seed = r.seed("seed", 0);
  CorpusConfig c;
  c.videos_per_class = r.integer("videos_per_class", 60, 1, 1 << 20);
  c.videos_override = {r.integer("videos_low", 0, 0, 1 << 20),
                       r.integer("videos_medium", 0, 0, 1 << 20),
                       r.integer("videos_heavy", 0, 0, 1 << 20)};
  c.frames_per_video = r.integer("frames_per_video", 12, 1, 1 << 20);
  c.weather_mix = r.number("weather_mix", 0.2, 0.0, 1.0);
  c.fog_density = r.number("fog_density", 0.7, 0.0, 1.0);
  c.rain_streaks = r.integer("rain_streaks", 40, 0, 1 << 20);
  c.rain_intensity = static_cast<float>(r.number("rain_intensity", 235, 0, 255));
  c.corrupt_blocks = r.integer("corrupt_blocks", 3, 0, 1 << 20);
  c.jump_probability = r.number("jump_probability", 0.2, 0.0, 1.0);
  std::string label_mode = r.str("label_mode", "class");
  if (label_mode == "count_tercile") c.label_mode = CorpusConfig::LabelMode::CountTercile;
  else if (label_mode != "class")
    r.reader.fail("label_mode must be class or count_tercile, got '" + label_mode + "'");
  c.scene.height = r.integer("height", 64, 8, 4096);
  c.scene.width = r.integer("width", 64, 8, 4096);
  c.scene.lanes = r.integer("lanes", 8, 1, 256);
  c.scene.count_range[0] = parse_range(r, "count_low", "1:8");
  c.scene.count_range[1] = parse_range(r, "count_medium", "9:20");
  c.scene.count_range[2] = parse_range(r, "count_heavy", "18:35");
  c.scene.min_len = r.integer("min_len", 7, 2, 1024);
  c.scene.max_len = r.integer("max_len", 7, 2, 1024);
  c.scene.speed_min = r.number("speed_min", 0.5, 0.0, 64.0);
  c.scene.speed_max = r.number("speed_max", 2.2, 0.0, 64.0);
  c.scene.non_overlap = r.flag("non_overlap", false);
  r.finish();

  fs::create_directories(out);
  generate_corpus(c, seed, out);
  r.resolved.write(out / "config.txt");
  std::cout << "synth: wrote corpus under " << out.string() << "\n";
  return 0;
}

int cmd_train_or_transfer(const CommonArgs& args, bool transfer) {
  RunConfig cfg = collect_config(args);
  std::set<std::string> keys;
  add_train_keys(keys);
  if (transfer) {
    keys.insert("init_weights");
    keys.insert("train_last_k");
    keys.insert("trainable");
  }
  Resolver r(cfg, keys);
  TrainSetup s = read_train_setup(r, transfer ? "transfer" : "train", "holdout:0.7,0.15,0.15");
  std::string init_weights, trainable_list;
  int64_t train_last_k = -1;
  if (transfer) {
    init_weights = r.required_str("init_weights");
    train_last_k = r.integer("train_last_k", 5, 0, 1 << 10);
    trainable_list = r.str("trainable", "");
  }
  if (s.plan.kind != SplitPlan::Kind::Holdout)
    r.reader.fail("train/transfer need a holdout split; run 'eval' for cross-validation");
  r.finish();

  fs::create_directories(s.out);
  DatasetIndex index = load_directory_dataset(s.data);
  Model model = build_model(s.arch, s.build, Rng(s.seed));
  if (transfer) {
    ImportReport report = import_by_name(model, init_weights);
    write_import_report(report, s.out / "import_report.txt");
    if (!trainable_list.empty()) {
      std::set<std::string> names;
      size_t at = 0;
      while (at < trainable_list.size()) {
        size_t comma = trainable_list.find(',', at);
        if (comma == std::string::npos) comma = trainable_list.size();
        names.insert(trainable_list.substr(at, comma - at));
        at = comma + 1;
      }
      set_trainable(model, names);
    } else {
      set_trainable_last_k(model, train_last_k);
    }
  }

  HoldoutSplits splits = make_holdout(index, s.plan);
  if (splits.train.empty()) throw DataError("training split is empty; adjust the split plan");
  TrainData train = materialize(index, splits.train, s.pre, model.input_shape[0], model.input_shape[1]);
  std::optional<TrainData> val;
  if (!splits.val.empty())
    val = materialize(index, splits.val, s.pre, model.input_shape[0], model.input_shape[1]);

  History history = fit(model, train, val ? &*val : nullptr, s.cfg);
  save_weights(model, s.out / "weights.nnwt");
  write_history_csv(history, s.out / "history.csv");

  SummaryRow row;
  row.model = catalog_name(s.arch);
  row.hyper_parameters = s.hyper + (transfer ? ", trained_layers=last " + std::to_string(train_last_k) : "");
  row.train_acc = history.back().accuracy;
  row.val_acc = history.back().has_val ? history.back().val_accuracy : 0.0;
  double test_acc = 0.0;
  if (!splits.test.empty()) {
    TrainData test = materialize(index, splits.test, s.pre, model.input_shape[0], model.input_shape[1]);
    EvalResult ev = evaluate(model, test);
    test_acc = ev.accuracy;
  }
  row.test_acc = test_acc;
  emit_summary({row}, ReportFormat::Markdown, s.out / "summary.md");
  emit_summary({row}, ReportFormat::Csv, s.out / "summary.csv");
  r.resolved.write(s.out / "config.txt");
  std::printf("%s: train %s val %s test %s -> %s\n", transfer ? "transfer" : "train",
              format_pct(row.train_acc).c_str(), format_pct(row.val_acc).c_str(),
              format_pct(row.test_acc).c_str(), s.out.string().c_str());
  return 0;
}

int cmd_baseline(const CommonArgs& args) {
  RunConfig cfg = collect_config(args);
  Resolver r(cfg, {"out", "seed", "data", "intensity_threshold", "min_area", "split", "split_mode"});
  fs::path out = resolve_out(r, "baseline");
  uint64_t seed = r.seed("seed", 0);
  std::string data = r.required_str("data");
  float threshold = static_cast<float>(r.number("intensity_threshold", 128.0, 0.0, 255.0));
  int64_t min_area = r.integer("min_area", 9, 1, 1 << 20);
  SplitPlan plan = parse_split_keys(r, seed, "kfold:10");
  if (plan.mode != SplitPlan::Mode::ByVideo)
    r.reader.fail("the count baseline classifies whole videos; split_mode must be by_video");
  r.finish();

  fs::create_directories(out);
  DatasetIndex index = load_directory_dataset(data);
  auto counts = index_video_counts(index, threshold, min_area);
  write_counts_csv(counts, out / "counts.csv");

  ConfusionMatrix cm;
  std::string predictions = "video_id,true,pred\n";
  if (plan.kind == SplitPlan::Kind::KFold) {
    auto folds = make_kfold(index, plan);
    std::vector<std::vector<std::string>> video_folds;
    for (const auto& f : folds) video_folds.push_back(videos_of(index, f));
    auto res = baseline_cross_validate(counts, video_folds);
    cm = res.pooled;
    std::map<std::string, CongestionLabel> truth;
    for (const auto& v : counts) truth[v.video_id] = v.label;
    for (const auto& [vid, pred] : res.predicted)
      predictions += vid + "," + label_name(truth.at(vid)) + "," + label_name(pred) + "\n";
  } else {
    HoldoutSplits splits = make_holdout(index, plan);
    auto subset = [&](const std::vector<int64_t>& ids) {
      auto vids = videos_of(index, ids);
      std::vector<VideoCount> rows;
      for (const auto& v : counts)
        if (std::find(vids.begin(), vids.end(), v.video_id) != vids.end()) rows.push_back(v);
      return rows;
    };
    auto train_rows = subset(splits.train);
    auto test_rows = subset(splits.test);
    if (test_rows.empty()) throw DataError("baseline holdout: empty test subset");
    ThresholdClassifier clf = fit_thresholds(train_rows);
    char thresholds[96];
    std::snprintf(thresholds, sizeof thresholds, "t1=%.9g\nt2=%.9g\n", clf.t1, clf.t2);
    write_text(out / "thresholds.txt", thresholds);
    cm = baseline_confusion(clf, test_rows);
    for (const auto& v : test_rows)
      predictions += v.video_id + "," + std::string(label_name(v.label)) + "," +
                     label_name(clf.classify(v.mean_count)) + "\n";
  }
  write_text(out / "predictions.csv", predictions);
  write_confusion_csv(cm, out / "confusion.csv");
  emit_diagnostics_pair(cm, out, "diagnostics");
  r.resolved.write(out / "config.txt");
  std::printf("baseline: accuracy %s over %lld videos -> %s\n", format_pct(cm.accuracy()).c_str(),
              static_cast<long long>(cm.total()), out.string().c_str());
  return 0;
}

int cmd_eval(const CommonArgs& args) {
  RunConfig cfg = collect_config(args);
  std::set<std::string> keys;
  add_train_keys(keys);
  keys.insert("weights");
  keys.insert("init_weights");
  keys.insert("train_last_k");
  Resolver r(cfg, keys);
  TrainSetup s = read_train_setup(r, "eval", "kfold:10");
  std::string weights = r.str("weights", "");
  std::string init_weights = r.str("init_weights", "");
  int64_t train_last_k = r.integer("train_last_k", -1, -1, 1 << 10);
  if (s.plan.kind == SplitPlan::Kind::Holdout && weights.empty())
    r.reader.fail("holdout eval needs 'weights' (a trained model)");
  r.finish();

  fs::create_directories(s.out);
  DatasetIndex index = load_directory_dataset(s.data);

  if (s.plan.kind == SplitPlan::Kind::KFold) {
    TransferCvSpec spec;
    spec.arch = s.arch;
    spec.build = s.build;
    if (!init_weights.empty()) spec.init_weights = fs::path(init_weights);
    spec.train_last_k = train_last_k;
    spec.pre = s.pre;
    spec.plan = s.plan;
    spec.train_cfg = s.cfg;
    TransferCvOutcome outcome = run_transfer_cv(index, spec);
    if (!outcome.import_report.matched.empty() || !outcome.import_report.unmatched_file.empty())
      write_import_report(outcome.import_report, s.out / "import_report.txt");

    std::string cv_csv = "fold,accuracy\n";
    char buf[64];
    for (size_t f = 0; f < outcome.cv.fold_accuracy.size(); ++f) {
      std::snprintf(buf, sizeof buf, "%zu,%.9g\n", f, outcome.cv.fold_accuracy[f]);
      cv_csv += buf;
    }
    std::snprintf(buf, sizeof buf, "mean,%.9g\nstd,%.9g\n", outcome.cv.mean_accuracy,
                  outcome.cv.std_accuracy);
    cv_csv += buf;
    write_text(s.out / "cv_results.csv", cv_csv);

    ConfusionMatrix video_cm = video_confusion(index, outcome.cv.probabilities);
    write_confusion_csv(outcome.cv.pooled, s.out / "confusion_frame.csv");
    write_confusion_csv(video_cm, s.out / "confusion_video.csv");
    emit_diagnostics_pair(outcome.cv.pooled, s.out, "diagnostics_frame", s.cfg.batch_size);
    emit_diagnostics_pair(video_cm, s.out, "diagnostics_video", s.cfg.batch_size);
    write_predictions_csv(index, outcome.cv.predicted, outcome.cv.probabilities,
                          s.out / "predictions.csv");
    save_weights(outcome.final_model, s.out / "weights_final.nnwt");
    write_history_csv(outcome.final_history, s.out / "history_final.csv");

    SummaryRow row;
    row.model = catalog_name(s.arch);
    row.hyper_parameters = s.hyper + (train_last_k >= 0
                                          ? ", trained_layers=last " + std::to_string(train_last_k)
                                          : "");
    row.train_acc = outcome.final_history.back().accuracy;
    row.val_acc = video_cm.accuracy();
    row.test_acc = outcome.cv.mean_accuracy;
    emit_summary({row}, ReportFormat::Markdown, s.out / "summary.md");
    emit_summary({row}, ReportFormat::Csv, s.out / "summary.csv");
    r.resolved.write(s.out / "config.txt");
    std::printf("eval: cv mean %s (video-level %s) -> %s\n",
                format_pct(outcome.cv.mean_accuracy).c_str(),
                format_pct(video_cm.accuracy()).c_str(), s.out.string().c_str());
    return 0;
  }

  // holdout: evaluate an existing model on the test subset
  Model model = build_model(s.arch, s.build, Rng(s.seed));
  load_weights(model, weights);
  HoldoutSplits splits = make_holdout(index, s.plan);
  if (splits.test.empty()) throw DataError("eval holdout: empty test subset");
  TrainData test = materialize(index, splits.test, s.pre, model.input_shape[0], model.input_shape[1]);
  EvalResult ev = evaluate(model, test);

  std::vector<int> predicted(index.samples.size(), -1);
  std::vector<std::array<double, 3>> probs(index.samples.size(), {0, 0, 0});
  std::vector<CongestionLabel> truth, pred;
  for (size_t rI = 0; rI < splits.test.size(); ++rI) {
    int64_t sid = splits.test[rI];
    predicted[static_cast<size_t>(sid)] = ev.predicted[rI];
    for (int j = 0; j < 3; ++j)
      probs[static_cast<size_t>(sid)][static_cast<size_t>(j)] =
          ev.probabilities.at2(static_cast<int64_t>(rI), j);
    truth.push_back(index.samples[static_cast<size_t>(sid)].label);
    pred.push_back(static_cast<CongestionLabel>(ev.predicted[rI]));
  }
  ConfusionMatrix cm = confusion(truth, pred);
  DatasetIndex test_view;  // video aggregation restricted to test samples
  test_view.samples = index.samples;
  for (int64_t sid : splits.test)
    test_view.videos[index.samples[static_cast<size_t>(sid)].video_id].push_back(sid);
  ConfusionMatrix video_cm = video_confusion(test_view, probs);

  write_confusion_csv(cm, s.out / "confusion_frame.csv");
  write_confusion_csv(video_cm, s.out / "confusion_video.csv");
  emit_diagnostics_pair(cm, s.out, "diagnostics_frame", s.cfg.batch_size);
  emit_diagnostics_pair(video_cm, s.out, "diagnostics_video", s.cfg.batch_size);
  write_predictions_csv(index, predicted, probs, s.out / "predictions.csv");

  SummaryRow row;
  row.model = catalog_name(s.arch);
  row.hyper_parameters = s.hyper;
  auto subset_acc = [&](const std::vector<int64_t>& ids) {
    if (ids.empty()) return 0.0;
    TrainData d = materialize(index, ids, s.pre, model.input_shape[0], model.input_shape[1]);
    return evaluate(model, d).accuracy;
  };
  row.train_acc = subset_acc(splits.train);
  row.val_acc = subset_acc(splits.val);
  row.test_acc = ev.accuracy;
  emit_summary({row}, ReportFormat::Markdown, s.out / "summary.md");
  emit_summary({row}, ReportFormat::Csv, s.out / "summary.csv");
  r.resolved.write(s.out / "config.txt");
  std::printf("eval: test %s (video-level %s) -> %s\n", format_pct(ev.accuracy).c_str(),
              format_pct(video_cm.accuracy()).c_str(), s.out.string().c_str());
  return 0;
}

int cmd_pca(const CommonArgs& args) {
  RunConfig cfg = collect_config(args);
  Resolver r(cfg, {"out", "seed", "data", "arch", "num_dense_nodes", "activation", "weights",
                   "layer", "pre_process", "cache"});
  fs::path out = resolve_out(r, "pca");
  uint64_t seed = r.seed("seed", 0);
  std::string data = r.required_str("data");
  std::string weights = r.required_str("weights");
  CatalogId arch = parse_arch_key(r);
  BuildParams bp;
  bp.num_dense_nodes = r.integer("num_dense_nodes", 409, 1, 1 << 20);
  bp.cnn_activation = parse_activation_key(r);
  std::string layer = r.str("layer", "flatten");
  PreprocessMode pre = parse_preprocess(r);
  std::string cache = r.str("cache", "");
  r.finish();

  fs::create_directories(out);
  DatasetIndex index = load_directory_dataset(data);
  Model model = build_model(arch, bp, Rng(seed));
  load_weights(model, weights);

  std::vector<int64_t> ids(index.samples.size());
  std::iota(ids.begin(), ids.end(), 0);
  fs::path cache_path = cache.empty() ? out / "transfer_values.nnwt" : fs::path(cache);
  TransferValues tv = extract_transfer_values(model, layer, index, ids, pre, cache_path);
  PCAResult res = pca_fit(tv);
  scatter_export_csv(res.projected, tv.labels, out / "scatter.csv");
  scatter_export_svg(res.projected, tv.labels, out / "scatter.svg");

  auto sep = [&](std::set<CongestionLabel> a, std::set<CongestionLabel> b) {
    return separation_metric(res.projected, tv.labels, a, b);
  };
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "explained_variance_1=%.9g\nexplained_variance_2=%.9g\n"
                "sep_low_vs_medium=%.9g\nsep_low_vs_heavy=%.9g\nsep_medium_vs_heavy=%.9g\n"
                "sep_low_vs_rest=%.9g\n",
                res.explained_variance[0], res.explained_variance[1],
                sep({CongestionLabel::Low}, {CongestionLabel::Medium}),
                sep({CongestionLabel::Low}, {CongestionLabel::Heavy}),
                sep({CongestionLabel::Medium}, {CongestionLabel::Heavy}),
                sep({CongestionLabel::Low}, {CongestionLabel::Medium, CongestionLabel::Heavy}));
  write_text(out / "separation.txt", buf);
  r.resolved.write(out / "config.txt");
  std::printf("pca: %lld samples x %lld features -> %s\n",
              static_cast<long long>(tv.matrix.dims[0]),
              static_cast<long long>(tv.matrix.dims[1]), out.string().c_str());
  return 0;
}

int cmd_inspect(const CommonArgs& args) {
  RunConfig cfg = collect_config(args);
  Resolver r(cfg, {"weights", "arch", "num_dense_nodes", "activation", "out", "seed"});
  std::string weights = r.required_str("weights");
  std::string arch_str = r.str("arch", "");
  BuildParams bp;
  bp.num_dense_nodes = r.integer("num_dense_nodes", 409, 1, 1 << 20);
  bp.cnn_activation = parse_activation_key(r);
  r.finish();

  auto records = read_weight_container(weights);
  auto matches = [&](CatalogId id) {
    auto rows = catalog_summary(id, bp);
    size_t parameterized = 0;
    for (const auto& row : rows) {
      if (row.params == 0) continue;
      ++parameterized;
      bool found = false;
      for (const auto& rec : records)
        if (rec.name == row.name && rec.tensors.size() == 2 &&
            rec.tensors[0].numel() + rec.tensors[1].numel() == row.params)
          found = true;
      if (!found) return false;
    }
    return parameterized == records.size();
  };

  CatalogId arch = CatalogId::VGGSmall;
  if (!arch_str.empty()) {
    arch = parse_catalog(arch_str);
    if (!matches(arch))
      throw ConfigError("weight file does not match architecture '" + arch_str + "'");
  } else {
    std::vector<CatalogId> hits;
    for (CatalogId id : {CatalogId::CNN5, CatalogId::CNN6, CatalogId::CNN7, CatalogId::VGG19,
                         CatalogId::VGG19Trunc, CatalogId::VGGSmall})
      if (matches(id)) hits.push_back(id);
    if (hits.size() != 1)
      throw ConfigError("cannot infer the architecture from the weight file; pass arch=...");
    arch = hits[0];
  }

  auto rows = catalog_summary(arch, bp);
  int64_t total = 0;
  std::printf("architecture: %s\n", catalog_name(arch));
  std::printf("| layer | kind | output shape | params |\n| --- | --- | --- | --- |\n");
  for (const auto& row : rows) {
    std::printf("| %s | %s | %s | %s |\n", row.name.c_str(), row.kind.c_str(),
                shape_x(row.output_shape).c_str(), with_commas(row.params).c_str());
    total += row.params;
  }
  std::printf("total params: %s\n", with_commas(total).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"traffic congestion video classification toolkit"};
  app.require_subcommand(1);

  CommonArgs synth_args, train_args, transfer_args, baseline_args, eval_args, pca_args,
      inspect_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic highway corpus");
  add_common(synth, synth_args, false);
  auto* train = app.add_subcommand("train", "train a fresh CNN on a dataset directory");
  add_common(train, train_args);
  auto* transfer = app.add_subcommand("transfer", "import weights, freeze layers, fine-tune");
  add_common(transfer, transfer_args);
  auto* baseline = app.add_subcommand("baseline", "object-count threshold baseline");
  add_common(baseline, baseline_args);
  auto* eval = app.add_subcommand("eval", "evaluate: holdout or k-fold cross-validation");
  add_common(eval, eval_args);
  auto* pca = app.add_subcommand("pca", "extract transfer values and project to 2 components");
  add_common(pca, pca_args);
  auto* inspect = app.add_subcommand("inspect", "per-layer shape/parameter table of a weight file");
  add_common(inspect, inspect_args, false);
  std::string inspect_weights;
  inspect->add_option("weights", inspect_weights, "weight file (positional)");

  CLI11_PARSE(app, argc, argv);
  if (!inspect_weights.empty()) inspect_args.sets.push_back("weights=" + inspect_weights);

  try {
    if (synth->parsed()) return cmd_synth(synth_args);
    if (train->parsed()) return cmd_train_or_transfer(train_args, false);
    if (transfer->parsed()) return cmd_train_or_transfer(transfer_args, true);
    if (baseline->parsed()) return cmd_baseline(baseline_args);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (pca->parsed()) return cmd_pca(pca_args);
    if (inspect->parsed()) return cmd_inspect(inspect_args);
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    for (auto& c : msg)
      if (c == '\n') c = ' ';
    std::cerr << "error: " << msg << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& c : msg)
      if (c == '\n') c = ' ';
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  return 0;
}
