#include "tbscreen/cli.hpp"

#include <fmt/core.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <memory>
#include <numeric>

#include "tbscreen/baselines.hpp"
#include "tbscreen/capsnet.hpp"
#include "tbscreen/checkpoint.hpp"
#include "tbscreen/dataset.hpp"
#include "tbscreen/error.hpp"
#include "tbscreen/gradcheck_suite.hpp"
#include "tbscreen/image_io.hpp"
#include "tbscreen/parallel.hpp"
#include "tbscreen/pipeline.hpp"
#include "tbscreen/rng.hpp"
#include "tbscreen/synth.hpp"

namespace tbscreen {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFamilies[] = {"lenet", "alexnet_mini", "vgg_mini", "capsnet"};
constexpr std::string_view kCommands[] = {"synth",     "train-patch", "train-logistic", "predict-image",
                                          "eval-full", "compare",     "grad-check"};
constexpr const char* kResolvedConfig = "resolved_config.ini";

std::string num(double v) { return fmt::format("{}", v); }

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : "absent"; }

void log(const std::string& line) { fmt::print(stderr, "{}\n", line); }

/// Creates the run directory and echoes the resolved configuration into it.
void begin_run(const fs::path& dir, const CLI::App& sub) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw IoError("cannot create run directory '" + dir.string() + "'" +
                  (ec ? ": " + ec.message() : ""));
  write_file_atomic(dir / kResolvedConfig, sub.config_to_str(true, false));
}

std::unique_ptr<PatchModel> load_patch_model(const fs::path& path) {
  return patch_model_from(load_checkpoint(path));
}

std::size_t downsample_for(const PatchModel& model, std::size_t patch_side) {
  const std::size_t side = model.input_side();
  if (patch_side % side != 0)
    throw GeometryError(fmt::format("patch side {} is not a multiple of the model input side {}",
                                    patch_side, side));
  return patch_side / side;
}

std::size_t input_side_for(std::size_t patch_side, std::size_t downsample) {
  if (downsample == 0 || patch_side % downsample != 0)
    throw GeometryError(
        fmt::format("patch side {} is not divisible by downsample factor {}", patch_side, downsample));
  return patch_side / downsample;
}

struct PatchData {
  std::vector<PatchSample> train;
  std::vector<PatchSample> test;
};

PatchData load_patch_data(const fs::path& data, std::size_t patch_side, std::size_t downsample) {
  const fs::path train_path = data / "patches_train.tsv";
  const fs::path test_path = data / "patches_test.tsv";
  if (!fs::exists(train_path))
    throw ValidationError("no training manifest at '" + train_path.string() + "'");
  PatchData out;
  const auto train = read_patch_manifest(train_path);
  out.train = load_patch_samples(train, patch_side, downsample);
  if (fs::exists(test_path)) {
    const auto test = read_patch_manifest(test_path);
    out.test = load_patch_samples(test, patch_side, downsample);
  }
  return out;
}

std::pair<std::unique_ptr<PatchModel>, TrainingCurve> train_family(
    const std::string& family, std::size_t input_side, const CapsNetConfig& caps,
    const PatchData& data, const TrainHyper& hyper, const EpochCallback& on_epoch) {
  if (family == "capsnet") {
    CapsNetConfig cfg = caps;
    cfg.input_side = input_side;
    cfg.validate();
    auto [model, curve] = train_patch_classifier(data.train, data.test, cfg, hyper, on_epoch);
    return {std::make_unique<CapsNetModel>(std::move(model)), std::move(curve)};
  }
  BaselineConfig cfg = BaselineConfig::defaults(parse_family(family));
  cfg.input_side = input_side;
  cfg.validate();
  auto [model, curve] = train_baseline(data.train, data.test, cfg, hyper, on_epoch);
  return {std::make_unique<BaselineModel>(std::move(model)), std::move(curve)};
}

std::string histogram_header(std::size_t bins) {
  std::string h;
  for (std::size_t b = 0; b < bins; ++b) h += fmt::format(",bin_{}", b);
  return h + ",total";
}

std::string histogram_fields(const HistogramFeature& f) {
  std::string s;
  for (auto c : f.bins) s += fmt::format(",{}", c);
  return s + fmt::format(",{}", f.total_patches);
}

// ---------------------------------------------------------------------------

struct SynthOptions {
  fs::path out;
  std::size_t images = 20;
  std::size_t positives = 10;
  std::uint64_t seed = 7;
  std::string difficulty = "default";
  SyntheticSceneConfig scene;
  std::size_t patch_side = 256;
  std::size_t overlap = 20;
  std::size_t patch_cap = 500;
  double train_fraction = 0.9;
  int bit_depth = 8;
  bool keep_partial_negatives = false;
};

void add_synth_options(CLI::App* sub, SynthOptions& o) {
  sub->add_option("--out", o.out, "Output dataset directory")->required();
  sub->add_option("--images", o.images, "Number of full images")->check(CLI::PositiveNumber);
  sub->add_option("--positives", o.positives, "How many of them contain cords");
  sub->add_option("--seed", o.seed, "Base seed");
  sub->add_option("--difficulty", o.difficulty, "Scene preset; explicit keys override it")
      ->check(CLI::IsMember({"default", "easy"}));
  auto& s = o.scene;
  sub->add_option("--image-width", s.image_w);
  sub->add_option("--image-height", s.image_h);
  sub->add_option("--background", s.background);
  sub->add_option("--illumination", s.illumination_amplitude);
  sub->add_option("--cord-count-min", s.cord_count.min);
  sub->add_option("--cord-count-max", s.cord_count.max);
  sub->add_option("--cord-segments-min", s.cord_segments.min);
  sub->add_option("--cord-segments-max", s.cord_segments.max);
  sub->add_option("--cord-step-min", s.cord_step.min);
  sub->add_option("--cord-step-max", s.cord_step.max);
  sub->add_option("--cord-max-turn", s.cord_max_turn_deg, "Degrees");
  sub->add_option("--cord-thickness-min", s.cord_thickness.min);
  sub->add_option("--cord-thickness-max", s.cord_thickness.max);
  sub->add_option("--cord-delta", s.cord_delta);
  sub->add_option("--debris-count-min", s.debris_count.min);
  sub->add_option("--debris-count-max", s.debris_count.max);
  sub->add_option("--debris-radius-min", s.debris_radius.min);
  sub->add_option("--debris-radius-max", s.debris_radius.max);
  sub->add_option("--debris-delta", s.debris_delta);
  sub->add_option("--dark-debris-fraction", s.dark_debris_fraction);
  sub->add_option("--dark-debris-scale", s.dark_debris_scale);
  sub->add_option("--noise-sigma", s.noise_sigma);
  sub->add_option("--speckle-density", s.speckle_density);
  sub->add_option("--blur-radius", s.blur_radius);
  sub->add_option("--patch-side", o.patch_side);
  sub->add_option("--overlap", o.overlap);
  sub->add_option("--patch-cap", o.patch_cap, "Patches per class; 0 skips the patch dataset");
  sub->add_option("--train-fraction", o.train_fraction);
  sub->add_option("--bit-depth", o.bit_depth)->check(CLI::IsMember({8, 16}));
  sub->add_flag("--keep-partial-negatives", o.keep_partial_negatives,
                "Allow negatives that partially overlap a cord box");
}

// Copies preset fields the user did not set on the command line or in the
// config, and records them as the option defaults so the echo shows them.
SyntheticSceneConfig resolve_scene(const SynthOptions& o, CLI::App& sub) {
  SyntheticSceneConfig s = o.scene;
  if (o.difficulty != "easy") return s;
  const SyntheticSceneConfig e = easy_scene();
  auto take = [&](const char* flag, auto& field, const auto& value) {
    if (sub.count(flag) != 0) return;
    field = value;
    sub.get_option(flag)->default_str(fmt::format("{}", value));
  };
  take("--cord-thickness-min", s.cord_thickness.min, e.cord_thickness.min);
  take("--cord-thickness-max", s.cord_thickness.max, e.cord_thickness.max);
  take("--cord-delta", s.cord_delta, e.cord_delta);
  take("--debris-count-min", s.debris_count.min, e.debris_count.min);
  take("--debris-count-max", s.debris_count.max, e.debris_count.max);
  take("--dark-debris-fraction", s.dark_debris_fraction, e.dark_debris_fraction);
  take("--noise-sigma", s.noise_sigma, e.noise_sigma);
  return s;
}

int cmd_synth(const SynthOptions& opts, CLI::App& sub) {
  SynthOptions o = opts;
  o.scene = resolve_scene(opts, sub);
  if (o.positives > o.images)
    throw ConfigError(fmt::format("--positives {} exceeds --images {}", o.positives, o.images));
  o.scene.validate();
  if (o.positives > 0 && o.scene.cord_count.max < 1)
    throw ConfigError("positive images need --cord-count-max >= 1");
  plan_grid(o.scene.image_w, o.scene.image_h, o.patch_side, o.overlap);

  begin_run(o.out, sub);
  std::error_code ec;
  fs::create_directories(o.out / "images", ec);
  if (ec) throw IoError("cannot create '" + (o.out / "images").string() + "': " + ec.message());

  std::vector<std::size_t> order(o.images);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng(derive_seed(o.seed, 0)).shuffle(order);
  std::vector<bool> positive(o.images, false);
  for (std::size_t k = 0; k < o.positives; ++k) positive[order[k]] = true;

  std::vector<SceneTruth> scenes;
  std::vector<ImageManifestEntry> image_entries;
  std::vector<BoxManifestEntry> box_entries;
  for (std::size_t i = 0; i < o.images; ++i) {
    SyntheticSceneConfig cfg = o.scene;
    cfg.seed = derive_seed(o.seed, 1000 + i);
    if (positive[i])
      cfg.cord_count.min = std::max<std::int64_t>(1, cfg.cord_count.min);
    else
      cfg.cord_count = {0, 0};
    const auto img = generate_synthetic_image(cfg);
    const std::string id = fmt::format("images/img_{:03}.png", i);
    save_image(o.out / id, img.image, o.bit_depth);
    image_entries.push_back({o.out / id, img.label});
    for (const auto& b : img.boxes) box_entries.push_back({o.out / id, b});
    scenes.push_back({id, cfg.image_w, cfg.image_h, img.boxes});
    log(fmt::format("synth: {} {} ({} cords)", id, label_name(img.label), img.boxes.size()));
  }

  std::vector<PatchManifestEntry> train_entries, test_entries;
  if (o.patch_cap > 0) {
    PatchDatasetOptions po;
    po.patch_side = o.patch_side;
    po.overlap = o.overlap;
    po.per_class_cap = o.patch_cap;
    po.train_fraction = o.train_fraction;
    po.seed = o.seed;
    po.exclude_partial_negatives = !o.keep_partial_negatives;
    const auto ds = make_patch_dataset(scenes, po);
    for (const auto& p : ds.train.patches) train_entries.push_back({o.out / p.image_id, p.anchor, p.label});
    for (const auto& p : ds.test.patches) test_entries.push_back({o.out / p.image_id, p.anchor, p.label});
  }

  write_image_manifest(o.out / "images.tsv", image_entries);
  write_box_manifest(o.out / "boxes.tsv", box_entries);
  if (o.patch_cap > 0) {
    write_patch_manifest(o.out / "patches_train.tsv", train_entries);
    write_patch_manifest(o.out / "patches_test.tsv", test_entries);
  }
  log(fmt::format("synth: {} images ({} positive), {} train / {} test patches", o.images,
                  o.positives, train_entries.size(), test_entries.size()));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainOptions {
  fs::path data;
  fs::path out;
  TrainHyper hyper;
  std::size_t patch_side = 256;
  std::size_t downsample = 4;
  CapsNetConfig caps;
};

void add_train_options(CLI::App* sub, TrainOptions& o) {
  sub->add_option("--data", o.data, "Dataset directory with patches_train.tsv/patches_test.tsv")
      ->required();
  sub->add_option("--out", o.out, "Run directory")->required();
  sub->add_option("--epochs", o.hyper.epochs);
  sub->add_option("--lr", o.hyper.learning_rate);
  sub->add_option("--momentum", o.hyper.momentum);
  sub->add_option("--batch-size", o.hyper.batch_size)->check(CLI::PositiveNumber);
  sub->add_option("--augment", o.hyper.augment, "Random flips/transposes of training patches");
  sub->add_option("--seed", o.hyper.seed);
  sub->add_option("--patch-side", o.patch_side);
  sub->add_option("--downsample", o.downsample)->check(CLI::PositiveNumber);
  sub->add_option("--conv1-channels", o.caps.conv1_channels);
  sub->add_option("--primary-caps-channels", o.caps.primary_caps_channels);
  sub->add_option("--primary-caps-dim", o.caps.primary_caps_dim);
  sub->add_option("--class-caps-dim", o.caps.class_caps_dim);
  sub->add_option("--routing-iters", o.caps.routing_iters);
}

int cmd_train_patch(const TrainOptions& o, const std::string& family, const CLI::App& sub) {
  if (std::find(std::begin(kFamilies), std::end(kFamilies), family) == std::end(kFamilies))
    throw ConfigError("unknown family '" + family + "'");
  const std::size_t side = input_side_for(o.patch_side, o.downsample);
  begin_run(o.out, sub);
  const auto data = load_patch_data(o.data, o.patch_side, o.downsample);
  log(fmt::format("train-patch: {} on {} train / {} test patches", family, data.train.size(),
                  data.test.size()));
  auto [model, curve] = train_family(family, side, o.caps, data, o.hyper, [](const EpochStats& s) {
    log(fmt::format("epoch {:3}  loss {:.5f}  train {:.4f}  test {}", s.epoch, s.loss,
                    s.train_accuracy, s.test_accuracy ? fmt::format("{:.4f}", *s.test_accuracy) : "-"));
  });

  std::string csv = "epoch,loss,train_acc,test_acc\n";
  for (const auto& s : curve.epochs)
    csv += fmt::format("{},{},{},{}\n", s.epoch, num(s.loss), num(s.train_accuracy),
                       opt_num(s.test_accuracy));
  const double final_loss = curve.epochs.empty() ? 0.0 : curve.epochs.back().loss;
  save_checkpoint(to_checkpoint(*model, {o.hyper.seed, o.hyper.epochs, final_loss}), o.out / "model.ckpt");
  write_file_atomic(o.out / "metrics.csv", csv);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct LogisticOptions {
  fs::path manifest;
  fs::path patch_model;
  fs::path out;
  std::size_t bins = 2;
  std::size_t patch_side = 256;
  std::size_t overlap = 20;
  LogisticHyper hyper{0.5, 5000, 0.0};
};

int cmd_train_logistic(const LogisticOptions& o, const CLI::App& sub) {
  if (o.bins < 2) throw ParameterError("--bins must be at least 2");
  const auto model = load_patch_model(o.patch_model);
  const std::size_t factor = downsample_for(*model, o.patch_side);
  const auto entries = read_image_manifest(o.manifest);
  if (entries.empty()) throw ValidationError("image manifest '" + o.manifest.string() + "' is empty");
  begin_run(o.out, sub);

  LogisticBundle bundle;
  bundle.bins = o.bins;
  bundle.patch_side = o.patch_side;
  bundle.overlap = o.overlap;
  bundle.downsample = factor;
  std::vector<HistogramFeature> features;
  std::vector<Label> labels;
  std::string csv = "image,label" + histogram_header(o.bins) + "\n";
  for (const auto& e : entries) {
    const Tensor image = load_image(e.image);
    if (features.empty()) {
      bundle.image_w = image.dim(2);
      bundle.image_h = image.dim(1);
    }
    const auto f = image_feature(*model, bundle, image);
    features.push_back(f);
    labels.push_back(e.label);
    csv += fmt::format("{},{}{}\n", e.image.filename().string(), label_name(e.label), histogram_fields(f));
    log(fmt::format("train-logistic: {} {}{}", e.image.filename().string(), label_name(e.label),
                    histogram_fields(f)));
  }
  const auto trained = train_logistic(features, labels, o.hyper);
  bundle.model = trained.model;

  std::string loss = "iteration,loss\n";
  for (std::size_t i = 0; i < trained.loss_curve.size(); ++i)
    loss += fmt::format("{},{}\n", i, num(trained.loss_curve[i]));
  save_checkpoint(to_checkpoint(bundle, {0, o.hyper.epochs, trained.loss_curve.back()}),
                  o.out / "logistic.ckpt");
  write_file_atomic(o.out / "features.csv", csv);
  write_file_atomic(o.out / "loss.csv", loss);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct PredictOptions {
  fs::path image;
  fs::path manifest;
  fs::path patch_model;
  fs::path logistic;
  fs::path out;
};

int cmd_predict_image(const PredictOptions& o, const CLI::App& sub) {
  const auto model = load_patch_model(o.patch_model);
  const auto head = logistic_from(load_checkpoint(o.logistic));
  const Tensor image = load_image(o.image);
  begin_run(o.out, sub);
  const auto r = predict_image(*model, head, image);

  std::string scores = "anchor_x,anchor_y,score\n";
  for (std::size_t i = 0; i < r.grid.size(); ++i)
    scores += fmt::format("{},{},{}\n", r.grid.anchors[i].x, r.grid.anchors[i].y, num(r.patch_scores[i]));
  const std::string report = "image,probability,label" + histogram_header(head.bins) + "\n" +
                             fmt::format("{},{},{}{}\n", o.image.filename().string(), num(r.probability),
                                         label_name(r.label), histogram_fields(r.histogram));
  write_file_atomic(o.out / "patch_scores.csv", scores);
  write_file_atomic(o.out / "report.csv", report);
  log(fmt::format("predict-image: {} probability {:.4f} -> {}", o.image.filename().string(),
                  r.probability, label_name(r.label)));
  return kExitOk;
}

int cmd_eval_full(const PredictOptions& o, const CLI::App& sub) {
  const auto model = load_patch_model(o.patch_model);
  const auto head = logistic_from(load_checkpoint(o.logistic));
  const auto entries = read_image_manifest(o.manifest);
  if (entries.empty()) throw ValidationError("image manifest '" + o.manifest.string() + "' is empty");
  begin_run(o.out, sub);

  std::vector<ImagePrediction> predictions;
  std::string per_image = "image,truth,probability,predicted" + histogram_header(head.bins) + "\n";
  for (const auto& e : entries) {
    const auto r = predict_image(*model, head, load_image(e.image));
    predictions.push_back({r.probability, e.label});
    per_image += fmt::format("{},{},{},{}{}\n", e.image.filename().string(), label_name(e.label),
                             num(r.probability), label_name(r.label), histogram_fields(r.histogram));
    log(fmt::format("eval-full: {} truth {} probability {:.4f}", e.image.filename().string(),
                    label_name(e.label), r.probability));
  }
  const auto m = evaluate_full_images(predictions);
  const std::string metrics = fmt::format(
      "metric,value\nsensitivity,{}\nspecificity,{}\naccuracy,{}\ntrue_positive,{}\n"
      "false_negative,{}\ntrue_negative,{}\nfalse_positive,{}\n",
      opt_num(m.sensitivity), opt_num(m.specificity), num(m.accuracy), m.true_positive,
      m.false_negative, m.true_negative, m.false_positive);
  write_file_atomic(o.out / "per_image.csv", per_image);
  write_file_atomic(o.out / "metrics.csv", metrics);
  log(fmt::format("eval-full: sensitivity {} specificity {} accuracy {}", opt_num(m.sensitivity),
                  opt_num(m.specificity), num(m.accuracy)));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CompareOptions {
  TrainOptions train;
  std::size_t repeats = 3;
};

int cmd_compare(const CompareOptions& o, const CLI::App& sub) {
  const std::size_t side = input_side_for(o.train.patch_side, o.train.downsample);
  begin_run(o.train.out, sub);
  const auto data = load_patch_data(o.train.data, o.train.patch_side, o.train.downsample);
  if (data.test.empty()) throw ValidationError("compare needs a non-empty test split");
  const std::size_t k = o.repeats;

  std::string runs = "family,repeat,seed,test_accuracy\n";
  std::string curves = "family,repeat,epoch,loss,train_acc,test_acc\n";
  std::string csv = k > 1 ? "family,mean_accuracy_pct,sd_accuracy_pct,repeats\n"
                          : "family,mean_accuracy_pct,repeats\n";
  std::string txt = fmt::format("{:<14}{:>16}\n", "family", "test accuracy %");
  for (const std::string family : kFamilies) {
    std::vector<double> acc;
    for (std::size_t r = 0; r < k; ++r) {
      TrainHyper hyper = o.train.hyper;
      hyper.seed = derive_seed(o.train.hyper.seed, r);
      try {
        auto [model, curve] = train_family(family, side, o.train.caps, data, hyper, {});
        acc.push_back(accuracy(*model, data.test));
        for (const auto& e : curve.epochs)
          curves += fmt::format("{},{},{},{},{},{}\n", family, r, e.epoch, num(e.loss),
                                num(e.train_accuracy), num(*e.test_accuracy));
      } catch (const Error& e) {
        throw Error(family + ": " + e.what(), e.error_class());
      }
      runs += fmt::format("{},{},{},{}\n", family, r, hyper.seed, num(acc.back()));
      log(fmt::format("compare: {} repeat {} test accuracy {:.4f}", family, r, acc.back()));
    }
    const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(k);
    if (k > 1) {
      double ss = 0.0;
      for (double a : acc) ss += (a - mean) * (a - mean);
      const double sd = std::sqrt(ss / static_cast<double>(k - 1));
      csv += fmt::format("{},{:.2f},{:.2f},{}\n", family, 100.0 * mean, 100.0 * sd, k);
      txt += fmt::format("{:<14}{:>16}\n", family, fmt::format("{:.1f} ± {:.1f}", 100.0 * mean, 100.0 * sd));
    } else {
      csv += fmt::format("{},{:.2f},{}\n", family, 100.0 * mean, k);
      txt += fmt::format("{:<14}{:>16}\n", family, fmt::format("{:.1f}", 100.0 * mean));
    }
  }
  write_file_atomic(o.train.out / "runs.csv", runs);
  write_file_atomic(o.train.out / "curves.csv", curves);
  write_file_atomic(o.train.out / "table.csv", csv);
  write_file_atomic(o.train.out / "table.txt", txt);
  fmt::print("{}", txt);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct GradCheckOptions {
  std::uint64_t seed = 7;
  std::size_t points = 10;
  fs::path out;
};

int cmd_grad_check(const GradCheckOptions& o, const CLI::App& sub) {
  if (!o.out.empty()) begin_run(o.out, sub);
  const auto start = std::chrono::steady_clock::now();
  const auto cases = run_gradcheck_suite(o.seed, o.points);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  bool ok = true;
  std::string csv = "case,max_rel_error,tolerance,passed\n";
  for (const auto& c : cases) {
    ok = ok && c.passed();
    fmt::print("{:<34} {:.3e}  (< {:.0e})  {}\n", c.name, c.max_error, c.tolerance,
               c.passed() ? "ok" : "FAIL");
    csv += fmt::format("{},{:.6e},{:.0e},{}\n", c.name, c.max_error, c.tolerance, c.passed() ? 1 : 0);
  }
  fmt::print("{} cases, {}, {:.2f} s\n", cases.size(), ok ? "all passed" : "FAILURES", seconds);
  if (!o.out.empty()) write_file_atomic(o.out / "gradcheck.csv", csv);
  return ok ? kExitOk : kExitNumeric;
}

int exit_code(ErrorClass c) {
  switch (c) {
    case ErrorClass::config: return kExitConfig;
    case ErrorClass::data: return kExitData;
    case ErrorClass::io: return kExitIo;
    case ErrorClass::numeric: return kExitNumeric;
    case ErrorClass::internal: break;
  }
  return kExitInternal;
}

// Reads plain key=value files: keys outside any section belong to the
// subcommand that received --config.
class SubcommandConfig : public CLI::ConfigINI {
 public:
  explicit SubcommandConfig(std::string name) : name_(std::move(name)) {}
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    auto items = CLI::ConfigINI::from_config(input);
    for (auto& item : items)
      if (item.parents.empty()) item.parents = {name_};
    return items;
  }

 private:
  std::string name_;
};

CLI::App* subcommand(CLI::App& app, const char* name, const char* description, std::size_t& threads) {
  auto* sub = app.add_subcommand(name, description);
  sub->option_defaults()->always_capture_default();
  sub->add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");
  return sub;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Cord screening on lens-free micrographs with capsule networks", "tbscreen"};
  app.require_subcommand(1);
  app.fallthrough();
  for (int i = 1; i < argc; ++i) {
    const std::string_view token = argv[i];
    if (std::find(std::begin(kCommands), std::end(kCommands), token) != std::end(kCommands)) {
      app.config_formatter(std::make_shared<SubcommandConfig>(std::string(token)));
      break;
    }
  }
  app.set_config("--config", "", "Key-value config file (key=value lines); flags override its keys");
  std::size_t threads = 0;

  SynthOptions synth;
  auto* synth_cmd = subcommand(app, "synth", "Generate a synthetic dataset", threads);
  add_synth_options(synth_cmd, synth);

  TrainOptions train;
  std::string family = "capsnet";
  auto* train_cmd = subcommand(app, "train-patch", "Train a patch classifier", threads);
  train_cmd->add_option("--family", family, "capsnet | lenet | alexnet_mini | vgg_mini");
  add_train_options(train_cmd, train);

  LogisticOptions logistic;
  auto* logistic_cmd =
      subcommand(app, "train-logistic", "Train the whole-image logistic head", threads);
  logistic_cmd->add_option("--manifest", logistic.manifest, "Labeled image manifest")->required();
  logistic_cmd->add_option("--patch-model", logistic.patch_model, "Patch classifier checkpoint")
      ->required();
  logistic_cmd->add_option("--out", logistic.out, "Run directory")->required();
  logistic_cmd->add_option("--bins", logistic.bins);
  logistic_cmd->add_option("--patch-side", logistic.patch_side);
  logistic_cmd->add_option("--overlap", logistic.overlap);
  logistic_cmd->add_option("--lr", logistic.hyper.learning_rate);
  logistic_cmd->add_option("--epochs", logistic.hyper.epochs);
  logistic_cmd->add_option("--l2", logistic.hyper.l2);

  PredictOptions predict;
  auto* predict_cmd = subcommand(app, "predict-image", "Screen one full image", threads);
  predict_cmd->add_option("--image", predict.image)->required();
  predict_cmd->add_option("--patch-model", predict.patch_model)->required();
  predict_cmd->add_option("--logistic", predict.logistic)->required();
  predict_cmd->add_option("--out", predict.out, "Run directory")->required();

  PredictOptions eval;
  auto* eval_cmd = subcommand(app, "eval-full", "Evaluate the pipeline on labeled images", threads);
  eval_cmd->add_option("--manifest", eval.manifest, "Labeled image manifest")->required();
  eval_cmd->add_option("--patch-model", eval.patch_model)->required();
  eval_cmd->add_option("--logistic", eval.logistic)->required();
  eval_cmd->add_option("--out", eval.out, "Run directory")->required();

  CompareOptions compare;
  auto* compare_cmd = subcommand(app, "compare", "Train all four families and tabulate", threads);
  add_train_options(compare_cmd, compare.train);
  compare_cmd->add_option("--repeats", compare.repeats)->check(CLI::PositiveNumber);

  GradCheckOptions grad;
  auto* grad_cmd = subcommand(app, "grad-check", "Run the gradient check suite", threads);
  grad_cmd->add_option("--seed", grad.seed);
  grad_cmd->add_option("--points", grad.points)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--out", grad.out, "Optional run directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  worker_count_setting() = threads;
  try {
    if (*synth_cmd) return cmd_synth(synth, *synth_cmd);
    if (*train_cmd) return cmd_train_patch(train, family, *train_cmd);
    if (*logistic_cmd) return cmd_train_logistic(logistic, *logistic_cmd);
    if (*predict_cmd) return cmd_predict_image(predict, *predict_cmd);
    if (*eval_cmd) return cmd_eval_full(eval, *eval_cmd);
    if (*compare_cmd) return cmd_compare(compare, *compare_cmd);
    if (*grad_cmd) return cmd_grad_check(grad, *grad_cmd);
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return exit_code(e.error_class());
  } catch (const fs::filesystem_error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    fmt::print(stderr, "internal error: {}\n", e.what());
    return kExitInternal;
  }
  return kExitInternal;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"tbscreen"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace tbscreen
