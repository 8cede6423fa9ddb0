#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "json.hpp"

namespace spai {

struct BackboneConfig {
  int patch_pixels = 16;
  int depth = 12;
  int embed_dim = 768;
  int input_side = 224;
  int channels = 3;
  int heads = 12;
  int mlp_ratio = 4;
  bool positional_encoding = true;
  bool class_token = true;
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> stddev{0.229, 0.224, 0.225};

  int token_count() const {
    const int side = input_side / patch_pixels;
    return side * side;
  }
  int grid_side() const { return input_side / patch_pixels; }
  int token_features() const { return patch_pixels * patch_pixels * channels; }

  /// Throws InvalidInput on inconsistent shapes.
  void validate() const;

  static BackboneConfig production();
  static BackboneConfig toy();

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

enum class SoftmaxAxis { PerFeature, PerBlock };

/// Shapes of the trainable detection components on top of a backbone.
struct DetectorConfig {
  int projection_dim = 1024;        // D
  int projection_hidden = 1024;     // hidden width inside each P_n
  int attention_dim = 1536;         // D_h
  double radius = 16.0;
  SoftmaxAxis softmax_axis = SoftmaxAxis::PerFeature;
  double cosine_eps = 1e-8;

  static DetectorConfig production();
  static DetectorConfig toy();

  friend bool operator==(const DetectorConfig&, const DetectorConfig&) = default;
};

struct AugmentationPolicy {
  bool resize = true;
  double resize_min = 0.5;
  double resize_max = 2.0;
  bool crop = true;  // random crop; when false a center crop is taken
  bool rotate = true;
  double rotate_max_degrees = 15.0;
  bool blur = true;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
  bool noise = true;
  double noise_sigma_min = 1.0;  // 0..255 scale
  double noise_sigma_max = 5.0;
  bool jpeg = true;
  int jpeg_quality_min = 50;
  int jpeg_quality_max = 95;
  double probability = 0.5;

  static AugmentationPolicy disabled();

  friend bool operator==(const AugmentationPolicy&, const AugmentationPolicy&) = default;
};

struct TrainConfig {
  int epochs = 35;
  double base_lr = 5e-4;
  double floor_lr = 2.5e-7;
  int warmup_epochs = 5;
  int batch_size = 72;
  int views = 4;  // K_training
  std::uint64_t seed = 0;
  double weight_decay = 0.05;
  double grad_clip = 1.0;
  DetectorConfig detector;
  AugmentationPolicy policy;

  void validate() const;

  static TrainConfig toy();

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const BackboneConfig& c);
void from_json(const nlohmann::json& j, BackboneConfig& c);
void to_json(nlohmann::json& j, const DetectorConfig& c);
void from_json(const nlohmann::json& j, DetectorConfig& c);
void to_json(nlohmann::json& j, const AugmentationPolicy& c);
void from_json(const nlohmann::json& j, AugmentationPolicy& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

}  // namespace spai
