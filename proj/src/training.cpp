#include "spai/training.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "spai/augment.hpp"
#include "spai/imaging.hpp"
#include "spai/metrics.hpp"
#include "spai/optim.hpp"

namespace spai {

double bce_loss(double y_hat, int y) {
  if (!(y_hat > 0.0 && y_hat < 1.0)) throw InvalidInput("bce_loss: prediction must lie in (0, 1)");
  if (y != 0 && y != 1) throw InvalidInput("bce_loss: label must be 0 or 1");
  return y == 1 ? -std::log(y_hat) : -std::log1p(-y_hat);
}

double bce_loss(const std::vector<double>& y_hat, const std::vector<int>& y) {
  if (y_hat.size() != y.size() || y.empty()) throw InvalidInput("bce_loss: batch sizes differ or are empty");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) total += bce_loss(y_hat[i], y[i]);
  return total / static_cast<double>(y.size());
}

double lr_schedule(long step, const TrainConfig& config, long steps_per_epoch) {
  if (step < 0) throw InvalidInput("lr_schedule: negative step");
  if (steps_per_epoch < 1) throw InvalidInput("lr_schedule: steps_per_epoch must be positive");
  const long warmup = static_cast<long>(config.warmup_epochs) * steps_per_epoch;
  const long last = static_cast<long>(config.epochs) * steps_per_epoch - 1;
  if (step < warmup) {
    return config.floor_lr + (config.base_lr - config.floor_lr) * static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (last <= warmup) return step >= last ? config.floor_lr : config.base_lr;
  const double t = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(last - warmup));
  return config.floor_lr + 0.5 * (config.base_lr - config.floor_lr) * (1.0 + std::cos(M_PI * t));
}

namespace {

ImageF load_rgb(const std::filesystem::path& path) { return imaging::ensure_rgb(imaging::read_image(path)); }

std::uint64_t hash_views(const std::vector<std::vector<ImageF>>& views, const std::vector<int>& labels) {
  std::uint64_t h = fnv1a64(labels.data(), labels.size() * sizeof(int));
  for (const auto& set : views) {
    for (const auto& v : set) {
      for (const auto& c : v.channels) h = fnv1a64(c.data(), sizeof(float) * static_cast<std::size_t>(c.size()), h);
    }
  }
  return h;
}

void check_manifest(const DatasetManifest& m, const char* which) {
  if (m.records.empty()) throw InvalidDataset(std::string(which) + " manifest is empty");
  if (!m.has_both_labels()) throw InvalidDataset(std::string(which) + " manifest must contain both labels");
}

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool get(std::ifstream& in, T& v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

}  // namespace

ValidationSet build_validation_set(const DatasetManifest& manifest, const AugmentationPolicy& policy, int views,
                                   int side, std::uint64_t seed) {
  ValidationSet set;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (const auto& r : manifest.records) {
    set.views.push_back(augment_views(load_rgb(r.path), policy, views, side, rng));
    set.labels.push_back(r.label);
  }
  set.digest = hex_digest(hash_views(set.views, set.labels));
  return set;
}

ValidationSet cached_validation_set(const DatasetManifest& manifest, const AugmentationPolicy& policy, int views,
                                    int side, std::uint64_t seed, const std::filesystem::path& cache_dir) {
  nlohmann::json key = {{"policy", policy}, {"views", views}, {"side", side}, {"seed", seed}};
  for (const auto& r : manifest.records) key["records"].push_back({r.path.string(), r.label});
  const std::string text = key.dump();
  const auto file = cache_dir / ("val-" + hex_digest(fnv1a64(text.data(), text.size())) + ".bin");

  if (std::ifstream in{file, std::ios::binary}) {
    ValidationSet set;
    std::uint64_t count = 0, stored = 0;
    bool ok = get(in, stored) && get(in, count) && count == manifest.size();
    for (std::uint64_t i = 0; ok && i < count; ++i) {
      int label = 0;
      ok = get(in, label);
      std::vector<ImageF> vs;
      for (int k = 0; ok && k < views; ++k) {
        ImageF img(side, side, 3);
        for (auto& c : img.channels) {
          ok = ok && static_cast<bool>(in.read(reinterpret_cast<char*>(c.data()),
                                               static_cast<std::streamsize>(sizeof(float) * c.size())));
        }
        vs.push_back(std::move(img));
      }
      set.views.push_back(std::move(vs));
      set.labels.push_back(label);
    }
    if (ok && hash_views(set.views, set.labels) == stored) {
      set.digest = hex_digest(stored);
      return set;
    }
  }

  ValidationSet set = build_validation_set(manifest, policy, views, side, seed);
  std::filesystem::create_directories(cache_dir);
  const auto tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    put(out, hash_views(set.views, set.labels));
    put(out, static_cast<std::uint64_t>(set.views.size()));
    for (std::size_t i = 0; i < set.views.size(); ++i) {
      put(out, set.labels[i]);
      for (const auto& v : set.views[i]) {
        for (const auto& c : v.channels) {
          out.write(reinterpret_cast<const char*>(c.data()), static_cast<std::streamsize>(sizeof(float) * c.size()));
        }
      }
    }
  }
  std::filesystem::rename(tmp, file);
  return set;
}

void to_json(nlohmann::json& j, const EpochLog& e) {
  j = {{"epoch", e.epoch},
       {"train_loss", e.train_loss},
       {"val_loss", e.val_loss},
       {"val_auc", e.val_auc ? nlohmann::json(*e.val_auc) : nlohmann::json(nullptr)},
       {"lr", e.lr},
       {"val_digest", e.val_digest}};
}

ValidationScores score_validation(const Detector<float>& detector, const ValidationSet& set) {
  ValidationScores out;
  double total = 0.0;
  for (std::size_t i = 0; i < set.views.size(); ++i) {
    std::vector<PatchFeatures<float>> features;
    for (const auto& v : set.views[i]) features.push_back(detector.patch_features(v));
    Tape<float> tape(false);
    const auto fwd = Detector<float>::forward(detector, tape, features);
    Matrix<float> target = Matrix<float>::Constant(1, 1, static_cast<float>(set.labels[i]));
    total += static_cast<double>(ops::bce_with_logits(fwd.logit, target).value()(0, 0));
    out.scores.push_back(static_cast<double>(ops::sigmoid_value(fwd.logit.value()(0, 0))));
  }
  out.loss = total / static_cast<double>(std::max<std::size_t>(1, set.views.size()));
  return out;
}

FitResult fit(Detector<float>& detector, const DatasetManifest& train, const DatasetManifest& val,
              const TrainConfig& config, const FitOptions& options) {
  config.validate();
  check_manifest(train, "training");
  check_manifest(val, "validation");

  FitResult result;
  result.encoder_digest_before = detector.encoder().digest();
  const int side = detector.patch_side();

  const ValidationSet val_set =
      options.cache_dir ? cached_validation_set(val, config.policy, config.views, side, config.seed, *options.cache_dir)
                        : build_validation_set(val, config.policy, config.views, side, config.seed);
  result.validation_builds = 1;

  ParameterList<float> params = detector.parameters();
  AdamW<float> optimizer(params, config.weight_decay);
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  const long steps_per_epoch = static_cast<long>((train.size() + batch - 1) / batch);
  std::mt19937_64 rng(config.seed);

  std::ofstream log_file;
  if (options.log_path) {
    if (options.log_path->has_parent_path()) std::filesystem::create_directories(options.log_path->parent_path());
    log_file.open(*options.log_path);
    if (!log_file) throw Error("cannot write training log '" + options.log_path->string() + "'");
  }

  std::map<std::string, Eigen::MatrixXd> best;
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0, lr = 0.0;
    for (std::size_t first = 0; first < order.size(); first += batch, ++step) {
      const std::size_t last = std::min(order.size(), first + batch);
      const auto scale = 1.0f / static_cast<float>(last - first);
      optimizer.zero_grad();
      for (std::size_t b = first; b < last; ++b) {
        const ManifestRecord& record = train.records[order[b]];
        std::vector<PatchFeatures<float>> features;
        for (const auto& v : augment_views(load_rgb(record.path), config.policy, config.views, side, rng)) {
          features.push_back(detector.patch_features(v));
        }
        Tape<float> tape(true);
        const auto fwd = Detector<float>::forward(detector, tape, features);
        Matrix<float> target = Matrix<float>::Constant(1, 1, static_cast<float>(record.label));
        Var<float> loss = ops::bce_with_logits(fwd.logit, target);
        const double value = static_cast<double>(loss.value()(0, 0));
        if (!std::isfinite(value)) {
          throw Error("fit: non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                      " on '" + record.path.string() + "' (logit " + std::to_string(fwd.logit.value()(0, 0)) + ")");
        }
        epoch_loss += value;
        tape.backward(ops::scale(loss, scale));
      }
      clip_grad_norm(params, config.grad_clip);
      lr = lr_schedule(step, config, steps_per_epoch);
      optimizer.step(lr);
    }

    const ValidationScores scored = score_validation(detector, val_set);
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_loss / static_cast<double>(train.size());
    entry.val_loss = scored.loss;
    entry.val_auc = auc(scored.scores, val_set.labels);
    entry.lr = lr;
    entry.val_digest = val_set.digest;
    if (!std::isfinite(entry.val_loss)) throw Error("fit: non-finite validation loss at epoch " + std::to_string(epoch));
    if (result.log.empty() || entry.val_loss < result.best_val_loss) {
      result.best_epoch = epoch;
      result.best_val_loss = entry.val_loss;
      best = snapshot(params);
    }
    result.log.push_back(entry);
    if (log_file) log_file << nlohmann::json(entry).dump() << "\n" << std::flush;
    if (options.on_epoch) options.on_epoch(entry);
  }

  restore(params, best);
  result.encoder_digest_after = detector.encoder().digest();
  return result;
}

}  // namespace spai
