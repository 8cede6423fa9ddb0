#pragma once

// Detector training on top of a frozen encoder: augmented views, BCE,
// warmup + cosine schedule, AdamW, selection on a once-augmented validation set.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "spai/configs.hpp"
#include "spai/detector.hpp"
#include "spai/manifest.hpp"

namespace spai {

/// -[y ln p + (1 - y) ln(1 - p)]; p must lie strictly inside (0, 1).
double bce_loss(double y_hat, int y);
/// Mean over a batch.
double bce_loss(const std::vector<double>& y_hat, const std::vector<int>& y);

/// Linear warmup floor -> base over the warmup epochs, then per-step cosine
/// back to floor, reached exactly at the last step.
double lr_schedule(long step, const TrainConfig& config, long steps_per_epoch);

/// Validation views built once per run and reused by every epoch.
struct ValidationSet {
  std::vector<std::vector<ImageF>> views;
  std::vector<int> labels;
  std::string digest;
};

ValidationSet build_validation_set(const DatasetManifest& manifest, const AugmentationPolicy& policy, int views,
                                   int side, std::uint64_t seed);
/// Same as above but stored under `cache_dir` and reloaded when the key matches.
ValidationSet cached_validation_set(const DatasetManifest& manifest, const AugmentationPolicy& policy, int views,
                                    int side, std::uint64_t seed, const std::filesystem::path& cache_dir);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::optional<double> val_auc;
  double lr = 0.0;
  std::string val_digest;
};

void to_json(nlohmann::json& j, const EpochLog& e);

struct FitOptions {
  std::optional<std::filesystem::path> log_path;   // JSONL, one line per epoch
  std::optional<std::filesystem::path> cache_dir;  // augmented validation cache
  std::function<void(const EpochLog&)> on_epoch;
};

struct FitResult {
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::uint64_t encoder_digest_before = 0;
  std::uint64_t encoder_digest_after = 0;
  std::size_t validation_builds = 0;
};

/// Trains the detector's own parameters; the best epoch's weights are left in
/// `detector` on return. Throws InvalidDataset for empty or single-class
/// manifests and Error on a non-finite loss.
FitResult fit(Detector<float>& detector, const DatasetManifest& train, const DatasetManifest& val,
              const TrainConfig& config, const FitOptions& options = {});

/// Validation loss and scores of a detector on prepared views.
struct ValidationScores {
  double loss = 0.0;
  std::vector<double> scores;
};
ValidationScores score_validation(const Detector<float>& detector, const ValidationSet& set);

}  // namespace spai
