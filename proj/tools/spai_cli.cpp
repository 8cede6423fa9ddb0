// Command-line front end: toy-data, pretrain-toy, train, infer, eval, perturb.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spai/detector.hpp"
#include "spai/evaluation.hpp"
#include "spai/imaging.hpp"
#include "spai/perturb.hpp"
#include "spai/pretrain.hpp"
#include "spai/run_config.hpp"
#include "spai/toy_data.hpp"
#include "spai/training.hpp"

namespace fs = std::filesystem;
using namespace spai;

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Args {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  int verbose = 0;
  bool quiet = false;

  // toy-data
  toy::DatasetOptions dataset;

  // pretrain-toy
  std::string images_dir;
  std::optional<int> steps;

  // train
  std::string train_manifest;
  std::string val_manifest;
  std::string backbone;
  std::optional<int> epochs;

  // infer / eval
  std::string detector;
  std::string manifest;
  std::vector<std::string> paths;
  bool heatmap = false;
  bool dump_embeddings = false;
  std::vector<std::string> perturb_specs;
  bool all_perturbations = false;
  bool allow_arbitrary = false;
  std::size_t patch_batch = 64;
};

int verbosity = 1;

void say(int level, const std::string& message) {
  if (level <= verbosity) std::cerr << message << "\n";
}

RunConfig resolve(const Args& args, const std::string& subcommand) {
  RunConfig run = args.config_path.empty() ? RunConfig{} : load_run_config(args.config_path);
  run.subcommand = subcommand;
  if (args.seed) {
    run.seed = *args.seed;
    run.pretrain.seed = *args.seed;
    run.train.seed = *args.seed;
  }
  if (!args.out_dir.empty()) run.out_dir = args.out_dir;
  run.verbosity = args.quiet ? 0 : 1 + args.verbose;
  if (args.steps) run.pretrain.steps = *args.steps;
  if (args.epochs) run.train.epochs = *args.epochs;
  verbosity = run.verbosity;
  return run;
}

fs::path prepare_out(const RunConfig& run) {
  const fs::path out(run.out_dir);
  fs::create_directories(out);
  save_run_config(out / "config.json", run);
  return out;
}

std::vector<Perturbation> parse_perturbations(const Args& args) {
  std::vector<Perturbation> out;
  try {
    for (const auto& spec : args.perturb_specs) out.push_back(parse_perturbation(spec, args.allow_arbitrary));
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
  if (args.all_perturbations) {
    for (const auto& p : all_perturbations()) out.push_back(p);
  }
  return out;
}

std::string stem_of(const fs::path& p, std::size_t index) {
  return std::to_string(index) + "_" + p.stem().string();
}

int cmd_toy_data(const Args& args) {
  const RunConfig run = resolve(args, "toy-data");
  const fs::path out = prepare_out(run);
  toy::DatasetOptions options = args.dataset;
  options.seed = run.seed;
  const toy::DatasetLayout layout = toy::write_dataset(out, options);
  say(1, "wrote " + std::to_string(options.pairs) + " real/generated pairs and " +
             std::to_string(options.pretext_images) + " pretext images under " + layout.root.string());
  return 0;
}

int cmd_pretrain_toy(const Args& args) {
  const RunConfig run = resolve(args, "pretrain-toy");
  const fs::path out = prepare_out(run);
  const std::vector<ImageF> corpus =
      load_pretext_corpus(args.images_dir, run.backbone.input_side, run.pretrain.min_images);
  say(1, "pretext corpus: " + std::to_string(corpus.size()) + " images");

  VisionTransformer<float> model(run.backbone, run.seed);
  std::ofstream log(out / "pretrain_log.jsonl");
  const auto losses = pretrain(model, corpus, run.pretrain, [&](int step, double loss) {
    log << nlohmann::json{{"step", step}, {"loss", loss}}.dump() << "\n";
    if (step % 20 == 0 || step + 1 == run.pretrain.steps) {
      say(2, "step " + std::to_string(step) + " loss " + std::to_string(loss));
    }
  });
  model.save(out / "backbone.spai", {{"pretrain", run.pretrain}});
  say(1, "first loss " + std::to_string(losses.front()) + ", last loss " + std::to_string(losses.back()));
  say(1, "backbone written to " + (out / "backbone.spai").string());
  return 0;
}

int cmd_train(const Args& args) {
  const RunConfig run = resolve(args, "train");
  const fs::path out = prepare_out(run);
  const DatasetManifest train = DatasetManifest::load(args.train_manifest);
  const DatasetManifest val = DatasetManifest::load(args.val_manifest);
  const fs::path backbone_path = fs::absolute(args.backbone);
  auto encoder = std::make_shared<VisionTransformer<float>>(load_pretrained<float>(backbone_path));
  Detector<float> detector(encoder, run.train.detector, run.seed);

  FitOptions options;
  options.log_path = out / "train_log.jsonl";
  if (const char* cache = std::getenv("SPAI_CACHE_DIR")) options.cache_dir = fs::path(cache);
  options.on_epoch = [](const EpochLog& e) { say(1, nlohmann::json(e).dump()); };
  const FitResult result = fit(detector, train, val, run.train, options);
  if (result.encoder_digest_after != result.encoder_digest_before) {
    throw Error("backbone weights changed during training");
  }
  save_detector(out / "detector.spai", detector, {backbone_path, nlohmann::json(run.train)});
  say(1, "best epoch " + std::to_string(result.best_epoch) + " (val loss " + std::to_string(result.best_val_loss) +
             "), detector written to " + (out / "detector.spai").string());
  return 0;
}

auto load_for_inference(const Args& args) {
  std::optional<fs::path> override;
  if (!args.backbone.empty()) override = fs::path(args.backbone);
  return load_detector<float>(args.detector, override);
}

int cmd_infer(const Args& args) {
  const RunConfig run = resolve(args, "infer");
  const fs::path out = prepare_out(run);
  auto [detector, record] = load_for_inference(args);
  std::vector<fs::path> inputs(args.paths.begin(), args.paths.end());
  if (!args.manifest.empty()) {
    for (const auto& r : DatasetManifest::load(args.manifest, false).records) inputs.push_back(r.path);
  }
  if (inputs.empty()) throw UsageError("infer: give image paths or --manifest");

  ScoreOptions options;
  options.patch_batch = args.patch_batch;
  options.keep_embeddings = args.dump_embeddings;
  std::ofstream results(out / "results.jsonl");
  std::size_t failures = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    try {
      const ImageF image = imaging::ensure_rgb(imaging::read_image(inputs[i]));
      DetectionResult r = detector->score(image, options);
      r.path = inputs[i].string();
      results << nlohmann::json(r).dump() << "\n";
      if (args.heatmap) {
        PatchGrid<float> grid;
        grid.coords = r.coords;
        grid.source_height = image.height();
        grid.source_width = image.width();
        Vector<float> weights(static_cast<Eigen::Index>(r.attention.size()));
        for (std::size_t k = 0; k < r.attention.size(); ++k) weights(static_cast<Eigen::Index>(k)) = static_cast<float>(r.attention[k]);
        imaging::write_png(out / "heatmaps" / (stem_of(inputs[i], i) + ".png"), attention_heatmap(grid, weights, image));
      }
      if (args.dump_embeddings) {
        fs::create_directories(out / "embeddings");
        std::ofstream csv(out / "embeddings" / (stem_of(inputs[i], i) + ".csv"));
        const Eigen::IOFormat format(Eigen::FullPrecision, Eigen::DontAlignCols, ",", "\n");
        csv << r.embeddings.format(format) << "\n";
      }
      say(2, r.path + " score " + std::to_string(r.score));
    } catch (const std::exception& e) {
      ++failures;
      results << nlohmann::json{{"path", inputs[i].string()}, {"error", e.what()}}.dump() << "\n";
      say(1, inputs[i].string() + ": " + e.what());
    }
  }
  say(1, "scored " + std::to_string(inputs.size() - failures) + "/" + std::to_string(inputs.size()) + " images");
  return failures == inputs.size() ? kRuntimeFailure : 0;
}

int cmd_eval(const Args& args) {
  const RunConfig run = resolve(args, "eval");
  std::vector<std::optional<Perturbation>> suites;
  for (const auto& p : parse_perturbations(args)) suites.emplace_back(p);
  if (suites.empty()) suites.emplace_back(std::nullopt);
  const fs::path out = prepare_out(run);
  const DatasetManifest manifest = DatasetManifest::load(args.manifest);
  auto [detector, record] = load_for_inference(args);
  ScoreOptions options;
  options.patch_batch = args.patch_batch;
  const ImageScorer scorer = [&, &det = detector](const ImageF& image) { return det->score(image, options).score; };

  bool errored = false;
  for (const auto& suite : suites) {
    const MetricsReport report = evaluate_detector(manifest, scorer, suite, run.seed, detector->model_version());
    std::string label = suite ? suite->label() : "clean";
    for (auto& c : label) c = c == ':' ? '_' : c;
    std::ofstream(out / ("report-" + label + ".json")) << to_json(report).dump(2) << "\n";
    const std::string table = render_table(report);
    std::ofstream(out / ("report-" + label + ".txt")) << table;
    std::cout << table << std::flush;
    for (const auto& w : report.warnings) say(2, "warning: " + w);
    errored = errored || report.any_cell_errored();
  }
  return errored ? kRuntimeFailure : 0;
}

int cmd_perturb(const Args& args) {
  const RunConfig run = resolve(args, "perturb");
  const std::vector<Perturbation> suites = parse_perturbations(args);
  if (suites.empty()) throw UsageError("perturb: give --perturb kind:severity or --all");
  if (args.paths.empty()) throw UsageError("perturb: no input images");
  const fs::path out = prepare_out(run);
  for (std::size_t i = 0; i < args.paths.size(); ++i) {
    const ImageF image = imaging::ensure_rgb(imaging::read_image(args.paths[i]));
    for (const auto& p : suites) {
      std::string label = p.label();
      for (auto& c : label) c = c == ':' ? '_' : c;
      const fs::path target = out / (fs::path(args.paths[i]).stem().string() + "_" + label + ".png");
      imaging::write_png(target, perturb(image, p, run.seed + i, args.allow_arbitrary));
      say(2, target.string());
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral detector of AI-generated images"};
  app.require_subcommand(1);
  app.fallthrough();
  Args args;
  app.add_option("--config", args.config_path, "JSON run description; flags override it")->check(CLI::ExistingFile);
  app.add_option("--seed", args.seed, "Seed for every random draw");
  app.add_option("--out", args.out_dir, "Output directory (all files land here)");
  app.add_flag("-v,--verbose", args.verbose, "More logging (repeatable)");
  app.add_flag("-q,--quiet", args.quiet, "Errors only");

  auto* toy = app.add_subcommand("toy-data", "Write the procedural real/flattened toy dataset");
  toy->add_option("--pairs", args.dataset.pairs, "Real images (each gets a generated twin)");
  toy->add_option("--side", args.dataset.side, "Image side in pixels");
  toy->add_option("--pretext-images", args.dataset.pretext_images, "Extra real images for backbone pretraining");
  toy->add_option("--flatten-radius", args.dataset.flatten_radius, "Spectral radius above which magnitudes are flattened");
  toy->add_option("--val-fraction", args.dataset.val_fraction);
  toy->add_option("--test-fraction", args.dataset.test_fraction);

  auto* pre = app.add_subcommand("pretrain-toy", "Masked spectral pretraining of a toy backbone");
  pre->add_option("--images", args.images_dir, "Folder of real images")->required();
  pre->add_option("--steps", args.steps, "Override pretrain.steps");

  auto* train = app.add_subcommand("train", "Train a detector on a frozen backbone");
  train->add_option("--train", args.train_manifest, "Training manifest (CSV or JSONL)")->required();
  train->add_option("--val", args.val_manifest, "Validation manifest")->required();
  train->add_option("--backbone", args.backbone, "Backbone checkpoint")->required();
  train->add_option("--epochs", args.epochs, "Override train.epochs");

  auto* infer = app.add_subcommand("infer", "Score images");
  infer->add_option("--detector", args.detector, "Detector checkpoint")->required();
  infer->add_option("--backbone", args.backbone, "Backbone checkpoint (default: the recorded one)");
  infer->add_option("--manifest", args.manifest, "Manifest of images to score");
  infer->add_option("paths", args.paths, "Images to score");
  infer->add_flag("--heatmap", args.heatmap, "Write attention overlays");
  infer->add_flag("--dump-embeddings", args.dump_embeddings, "Write per-patch spectral vectors as CSV");
  infer->add_option("--patch-batch", args.patch_batch, "Patches encoded at once");

  auto* eval = app.add_subcommand("eval", "Metrics per generator/real source pair");
  eval->add_option("--manifest", args.manifest, "Test manifest")->required();
  eval->add_option("--detector", args.detector, "Detector checkpoint")->required();
  eval->add_option("--backbone", args.backbone, "Backbone checkpoint (default: the recorded one)");
  eval->add_option("--perturb", args.perturb_specs, "kind:severity, repeatable");
  eval->add_flag("--all-perturbations", args.all_perturbations, "Run every standard suite");
  eval->add_flag("--allow-arbitrary", args.allow_arbitrary, "Accept severities outside the standard grids");
  eval->add_option("--patch-batch", args.patch_batch, "Patches encoded at once");

  auto* pert = app.add_subcommand("perturb", "Write perturbed copies of images");
  pert->add_option("paths", args.paths, "Input images")->required();
  pert->add_option("--perturb", args.perturb_specs, "kind:severity, repeatable");
  pert->add_flag("--all", args.all_perturbations, "Every standard suite");
  pert->add_flag("--allow-arbitrary", args.allow_arbitrary, "Accept severities outside the standard grids");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (toy->parsed()) return cmd_toy_data(args);
    if (pre->parsed()) return cmd_pretrain_toy(args);
    if (train->parsed()) return cmd_train(args);
    if (infer->parsed()) return cmd_infer(args);
    if (eval->parsed()) return cmd_eval(args);
    if (pert->parsed()) return cmd_perturb(args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kUsageError;
}
