#pragma once

// Toy-scale masked spectral pretraining of the encoder and decode head.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "json.hpp"
#include "spai/backbone.hpp"

namespace spai {

struct PretrainConfig {
  int steps = 1000;
  int batch_size = 8;
  double lr = 3e-3;
  double min_lr = 1e-5;
  int warmup_steps = 10;
  double weight_decay = 0.05;
  double grad_clip = 1.0;
  double radius = 4.0;
  double p_low = 0.5;
  double alpha = 1.0;
  bool masked_band_only = false;  // restrict the loss to the band hidden from the encoder
  int min_images = 64;
  std::uint64_t seed = 0;

  friend bool operator==(const PretrainConfig&, const PretrainConfig&) = default;
};

void to_json(nlohmann::json& j, const PretrainConfig& c);
void from_json(const nlohmann::json& j, PretrainConfig& c);

/// Real images from `dir`, center-cropped to `side`. Throws InvalidDataset
/// when fewer than `min_images` are found.
std::vector<ImageF> load_pretext_corpus(const std::filesystem::path& dir, int side, int min_images);

/// Runs `config.steps` AdamW steps of the pretext objective over shuffled passes
/// of the corpus; returns the mean batch loss of every step.
std::vector<double> pretrain(VisionTransformer<float>& model, const std::vector<ImageF>& corpus,
                             const PretrainConfig& config,
                             const std::function<void(int, double)>& on_step = {});

/// Mean pretext loss over `images` with a fixed draw sequence; no parameter updates.
double pretext_loss(const VisionTransformer<float>& model, const std::vector<ImageF>& images,
                    const PretrainConfig& config, std::uint64_t seed);

}  // namespace spai
