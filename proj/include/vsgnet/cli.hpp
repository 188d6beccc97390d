#pragma once

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vsgnet/eval.hpp"
#include "vsgnet/fixture.hpp"
#include "vsgnet/gradcheck.hpp"
#include "vsgnet/parallel.hpp"
#include "vsgnet/train.hpp"

namespace vsg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

namespace detail {

// Config precedence: built-in defaults < config file < command-line flags.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<int> batch_size;
  std::optional<std::string> ablation;
};

inline EngineConfig resolve_config(const ConfigFlags& f, Json* raw_file_json = nullptr) {
  EngineConfig cfg;
  if (!f.config_path.empty()) {
    cfg = load_config(f.config_path);
    if (raw_file_json) *raw_file_json = read_json_file(f.config_path);
  }
  if (f.seed) cfg.train.seed = *f.seed;
  if (f.epochs) cfg.train.epochs = *f.epochs;
  if (f.lr) cfg.train.lr = *f.lr;
  if (f.batch_size) cfg.train.batch_size = *f.batch_size;
  if (f.ablation) cfg.head.ablation = parse_ablation(*f.ablation);
  validate(cfg);
  return cfg;
}

// The manifest is authoritative for the action count; feature channels are
// adopted from the data unless the config file pinned them explicitly.
template <typename Real>
void reconcile_with_dataset(EngineConfig& cfg, const Dataset<Real>& ds,
                            const Json& raw_file_json) {
  cfg.model.num_actions = ds.num_actions;
  if (!ds.images.empty() && ds.images.front().feature.defined()) {
    const int c = ds.images.front().feature.dim(0);
    const bool pinned = raw_file_json.contains("model") &&
                        raw_file_json.at("model").contains("feature_channels");
    if (pinned && cfg.model.feature_channels != c)
      throw DataError("config feature_channels=" +
                      std::to_string(cfg.model.feature_channels) +
                      " but dataset feature maps have " + std::to_string(c) +
                      " channels");
    cfg.model.feature_channels = c;
  }
  for (const auto& rec : ds.images)
    if (rec.feature.defined() && rec.feature.dim(0) != cfg.model.feature_channels)
      throw DataError("image '" + rec.id + "': feature channels " +
                      std::to_string(rec.feature.dim(0)) + " differ from " +
                      std::to_string(cfg.model.feature_channels));
  validate(cfg);
}

inline void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + tmp);
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

struct FixtureOptions {
  std::string out_dir;
  FixtureSpec spec;
};

inline int run_fixture(const FixtureOptions& opt) {
  const auto paths = generate_fixture(opt.spec, opt.out_dir);
  std::cout << "fixture written: " << paths.manifest << "\n";
  if (!paths.train_manifest.empty())
    std::cout << "train split:      " << paths.train_manifest << "\n"
              << "eval split:       " << paths.eval_manifest << "\n";
  return kExitOk;
}

struct TrainOptions {
  std::string manifest;
  std::string out_dir;
  detail::ConfigFlags config;
  int threads = 0;  // reserved; training itself is sequential for determinism
};

struct TrainArtifacts {
  std::string checkpoint;
  std::string loss_curve;
  TrainResult result;
};

inline TrainArtifacts run_train(const TrainOptions& opt) {
  namespace fs = std::filesystem;
  if (opt.manifest.empty()) throw UsageError("train: --manifest is required");
  if (opt.out_dir.empty()) throw UsageError("train: --out is required");
  Json raw;
  EngineConfig cfg = detail::resolve_config(opt.config, &raw);
  auto ds = load_dataset<float>(opt.manifest);
  detail::reconcile_with_dataset(cfg, ds, raw);

  fs::create_directories(opt.out_dir);
  ModelParams<float> params = make_params<float>(cfg.model);
  init_params(params, cfg.train.seed);

  CheckpointMeta meta;
  meta.seed = cfg.train.seed;
  meta.config = cfg;
  meta.config_hash = config_hash(cfg);

  const int every = cfg.train.checkpoint_every;
  auto on_epoch = [&](int epoch, double loss) {
    if (every > 0 && (epoch + 1) % every == 0) {
      meta.epoch = epoch + 1;
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_epoch_%04d.ckpt", epoch + 1);
      save_checkpoint((fs::path(opt.out_dir) / name).string(), params, meta);
    }
    std::cout << "epoch " << epoch << " mean pair loss " << loss << "\n";
    return true;
  };

  TrainArtifacts art;
  art.result = train_loop(ds, params, cfg, on_epoch);

  meta.epoch = art.result.epochs_run;
  art.checkpoint = (fs::path(opt.out_dir) / "checkpoint.ckpt").string();
  {
    const std::string tmp = art.checkpoint + ".tmp";
    save_checkpoint(tmp, params, meta);
    fs::rename(tmp, art.checkpoint);
  }
  art.loss_curve = (fs::path(opt.out_dir) / "loss_curve.json").string();
  Json curve{{"epoch_loss", art.result.epoch_loss},
             {"epochs_run", art.result.epochs_run}};
  detail::write_text_atomic(art.loss_curve, curve.dump(2) + "\n");
  std::cout << "checkpoint: " << art.checkpoint << "\n";
  return art;
}

struct InferOptions {
  std::string manifest;
  std::string checkpoint;
  std::string out_path;
  std::optional<std::string> ablation;  // defaults to the checkpoint's
  int threads = 0;
};

inline std::string run_infer(const InferOptions& opt) {
  if (opt.manifest.empty() || opt.checkpoint.empty() || opt.out_path.empty())
    throw UsageError("infer: --manifest, --checkpoint and --out are required");
  auto [params, meta] = load_checkpoint<float>(opt.checkpoint);
  EngineConfig cfg = meta.config;
  if (opt.ablation) cfg.head.ablation = parse_ablation(*opt.ablation);
  auto ds = load_dataset<float>(opt.manifest);
  if (ds.num_actions != cfg.model.num_actions)
    throw DataError("infer: dataset has " + std::to_string(ds.num_actions) +
                    " actions, checkpoint was trained for " +
                    std::to_string(cfg.model.num_actions));

  std::vector<std::vector<ScoredTriplet>> per_image(ds.images.size());
  parallel_for(ds.images.size(), opt.threads, [&](std::size_t i) {
    per_image[i] = infer_image(ds.images[i], params, cfg.model, cfg.head, ds.compat);
  });
  std::vector<ScoredTriplet> all;
  for (auto& v : per_image)
    for (auto& p : v) all.push_back(std::move(p));
  const std::string tmp = opt.out_path + ".tmp";
  write_predictions(tmp, all);
  std::filesystem::rename(tmp, opt.out_path);
  std::cout << "predictions: " << opt.out_path << " (" << all.size() << " records)\n";
  return opt.out_path;
}

struct EvalOptions {
  std::string manifest;
  std::string predictions;
  std::string out_path;        // optional report JSON
  std::string train_manifest;  // optional, enables rare/non-rare partition
  int scenario = 1;
  int rare_threshold = 10;
};

inline APReport run_eval(const EvalOptions& opt) {
  if (opt.manifest.empty() || opt.predictions.empty())
    throw UsageError("eval: --manifest and --predictions are required");
  auto ds = load_dataset<float>(opt.manifest, /*load_features=*/false);
  auto preds = read_predictions(opt.predictions);
  APReport report =
      evaluate(std::move(preds), ds.annotations, parse_scenario(opt.scenario),
               ds.num_actions);
  if (!opt.train_manifest.empty()) {
    auto train_ds = load_dataset<float>(opt.train_manifest, /*load_features=*/false);
    std::vector<long> counts(static_cast<std::size_t>(ds.num_actions), 0);
    for (const auto& g : train_ds.annotations)
      ++counts[static_cast<std::size_t>(g.action_id)];
    partition_report(report, counts, opt.rare_threshold);
  }
  for (const int a : report.skipped_actions)
    std::cerr << "warning: action " << a << " has no ground truth; excluded from mean\n";
  print_report(std::cout, report);
  if (!opt.out_path.empty())
    detail::write_text_atomic(opt.out_path, report_to_json(report).dump(2) + "\n");
  return report;
}

struct AblateOptions {
  std::string train_manifest;
  std::string eval_manifest;
  std::string out_dir;
  detail::ConfigFlags config;
  int threads = 0;
};

struct AblateRow {
  std::string name;
  double map_s1 = 0.0;
  double map_s2 = 0.0;
};

// Trains and evaluates the four branch configurations on one dataset split.
inline std::vector<AblateRow> run_ablate(const AblateOptions& opt) {
  namespace fs = std::filesystem;
  if (opt.train_manifest.empty() || opt.eval_manifest.empty() || opt.out_dir.empty())
    throw UsageError("ablate: --manifest, --eval-manifest and --out are required");
  Json raw;
  EngineConfig base_cfg = detail::resolve_config(opt.config, &raw);
  auto train_ds = load_dataset<float>(opt.train_manifest);
  auto eval_ds = load_dataset<float>(opt.eval_manifest);
  detail::reconcile_with_dataset(base_cfg, train_ds, raw);

  fs::create_directories(opt.out_dir);
  std::vector<AblateRow> rows;
  for (const Ablation ab : {Ablation::kVisual, Ablation::kVisualGraph,
                            Ablation::kVisualSpatial, Ablation::kFull}) {
    EngineConfig cfg = base_cfg;
    cfg.head.ablation = ab;
    ModelParams<float> params = make_params<float>(cfg.model);
    init_params(params, cfg.train.seed);
    train_loop(train_ds, params, cfg);

    std::vector<std::vector<ScoredTriplet>> per_image(eval_ds.images.size());
    parallel_for(eval_ds.images.size(), opt.threads, [&](std::size_t i) {
      per_image[i] =
          infer_image(eval_ds.images[i], params, cfg.model, cfg.head, eval_ds.compat);
    });
    std::vector<ScoredTriplet> preds;
    for (auto& v : per_image)
      for (auto& p : v) preds.push_back(std::move(p));

    AblateRow row;
    row.name = to_string(ab);
    row.map_s1 =
        evaluate(preds, eval_ds.annotations, Scenario::kOne, eval_ds.num_actions).mean_ap;
    row.map_s2 =
        evaluate(preds, eval_ds.annotations, Scenario::kTwo, eval_ds.num_actions).mean_ap;
    rows.push_back(row);
    std::cout << "ablation " << row.name << ": mAP(S1) " << row.map_s1 << ", mAP(S2) "
              << row.map_s2 << "\n";
  }

  Json jrows = Json::array();
  std::string table = "branches                 mAP(Sc 1)  mAP(Sc 2)\n";
  for (const auto& r : rows) {
    jrows.push_back(Json{{"branches", r.name}, {"map_s1", r.map_s1}, {"map_s2", r.map_s2}});
    char line[96];
    std::snprintf(line, sizeof(line), "%-24s %9.4f  %9.4f\n", r.name.c_str(), r.map_s1,
                  r.map_s2);
    table += line;
  }
  detail::write_text_atomic((fs::path(opt.out_dir) / "ablation.json").string(),
                            jrows.dump(2) + "\n");
  detail::write_text_atomic((fs::path(opt.out_dir) / "ablation.txt").string(), table);
  std::cout << table;
  return rows;
}

struct GradcheckOptions {
  std::uint64_t seed = 1;
  std::string out_path;
  double tolerance = 1e-4;
};

inline int run_gradcheck_cmd(const GradcheckOptions& opt) {
  const GradCheckReport report = run_gradcheck(opt.seed);
  Json entries = Json::array();
  for (const auto& e : report.entries) {
    std::printf("%-28s max rel err %.3e\n", e.name.c_str(), e.max_rel_err);
    entries.push_back(Json{{"name", e.name}, {"max_rel_err", e.max_rel_err}});
  }
  std::printf("overall max rel err %.3e (tolerance %.1e)\n", report.max_rel_err,
              opt.tolerance);
  if (!opt.out_path.empty())
    detail::write_text_atomic(
        opt.out_path,
        Json{{"entries", entries}, {"max_rel_err", report.max_rel_err}}.dump(2) + "\n");
  if (report.max_rel_err >= opt.tolerance)
    throw NumericError("gradient check failed: max rel err " +
                       std::to_string(report.max_rel_err));
  return kExitOk;
}

inline int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Human-object interaction head: training, inference and evaluation "
               "on precomputed backbone feature maps"};
  app.require_subcommand(1);

  FixtureOptions fixture;
  auto* cmd_fixture = app.add_subcommand("fixture", "generate a synthetic dataset");
  cmd_fixture->add_option("--out", fixture.out_dir, "output directory")->required();
  cmd_fixture->add_option("--seed", fixture.spec.seed, "rng seed");
  cmd_fixture->add_option("--images", fixture.spec.num_images, "image count");
  cmd_fixture->add_option("--humans", fixture.spec.humans_per_image, "humans per image");
  cmd_fixture->add_option("--objects", fixture.spec.objects_per_image, "objects per image");
  cmd_fixture->add_option("--actions", fixture.spec.num_actions, "action classes");
  cmd_fixture->add_option("--channels", fixture.spec.feature_channels, "feature channels");
  cmd_fixture->add_option("--height", fixture.spec.feature_height, "feature rows");
  cmd_fixture->add_option("--width", fixture.spec.feature_width, "feature cols");
  cmd_fixture->add_option("--holdout", fixture.spec.holdout_images,
                          "also write train/eval split manifests");

  TrainOptions train;
  auto* cmd_train = app.add_subcommand("train", "train a model");
  cmd_train->add_option("--manifest", train.manifest, "dataset manifest")->required();
  cmd_train->add_option("--out", train.out_dir, "output directory")->required();
  cmd_train->add_option("--config", train.config.config_path, "config file (JSON)");
  cmd_train->add_option("--seed", train.config.seed, "rng seed");
  cmd_train->add_option("--epochs", train.config.epochs, "epoch count");
  cmd_train->add_option("--lr", train.config.lr, "learning rate");
  cmd_train->add_option("--batch-size", train.config.batch_size, "images per batch");
  cmd_train->add_option("--ablation", train.config.ablation,
                        "visual|visual+graph|visual+spatial|full");
  cmd_train->add_option("--threads", train.threads, "worker threads");

  InferOptions infer;
  auto* cmd_infer = app.add_subcommand("infer", "write a prediction dump");
  cmd_infer->add_option("--manifest", infer.manifest, "dataset manifest")->required();
  cmd_infer->add_option("--checkpoint", infer.checkpoint, "checkpoint file")->required();
  cmd_infer->add_option("--out", infer.out_path, "prediction dump path")->required();
  cmd_infer->add_option("--ablation", infer.ablation,
                        "override the checkpoint's branch configuration");
  cmd_infer->add_option("--threads", infer.threads, "worker threads");

  EvalOptions evalo;
  auto* cmd_eval = app.add_subcommand("eval", "score a prediction dump");
  cmd_eval->add_option("--manifest", evalo.manifest, "dataset manifest")->required();
  cmd_eval->add_option("--predictions", evalo.predictions, "prediction dump")->required();
  cmd_eval->add_option("--scenario", evalo.scenario, "1 or 2");
  cmd_eval->add_option("--out", evalo.out_path, "report JSON path");
  cmd_eval->add_option("--train-manifest", evalo.train_manifest,
                       "training split used for the rare/non-rare partition");
  cmd_eval->add_option("--rare-threshold", evalo.rare_threshold,
                       "training samples below which a class is rare");

  AblateOptions ablate;
  auto* cmd_ablate =
      app.add_subcommand("ablate", "train and evaluate all four branch configurations");
  cmd_ablate->add_option("--manifest", ablate.train_manifest, "training manifest")
      ->required();
  cmd_ablate->add_option("--eval-manifest", ablate.eval_manifest, "held-out manifest")
      ->required();
  cmd_ablate->add_option("--out", ablate.out_dir, "output directory")->required();
  cmd_ablate->add_option("--config", ablate.config.config_path, "config file (JSON)");
  cmd_ablate->add_option("--seed", ablate.config.seed, "rng seed");
  cmd_ablate->add_option("--epochs", ablate.config.epochs, "epoch count");
  cmd_ablate->add_option("--threads", ablate.threads, "worker threads");

  GradcheckOptions gradcheck;
  auto* cmd_gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference gradient audit at 64-bit precision");
  cmd_gradcheck->add_option("--seed", gradcheck.seed, "rng seed");
  cmd_gradcheck->add_option("--out", gradcheck.out_path, "report JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (cmd_fixture->parsed()) return run_fixture(fixture);
    if (cmd_train->parsed()) {
      run_train(train);
      return kExitOk;
    }
    if (cmd_infer->parsed()) {
      run_infer(infer);
      return kExitOk;
    }
    if (cmd_eval->parsed()) {
      run_eval(evalo);
      return kExitOk;
    }
    if (cmd_ablate->parsed()) {
      run_ablate(ablate);
      return kExitOk;
    }
    if (cmd_gradcheck->parsed()) return run_gradcheck_cmd(gradcheck);
    throw UsageError("no subcommand given");
  } catch (const UsageError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "error: numeric: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace vsg
