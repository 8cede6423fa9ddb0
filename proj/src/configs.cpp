#include "spai/configs.hpp"

#include "spai/types.hpp"

namespace spai {

void BackboneConfig::validate() const {
  if (patch_pixels < 1 || depth < 1 || embed_dim < 1 || input_side < 1 || channels < 1 || heads < 1 ||
      mlp_ratio < 1) {
    throw InvalidInput("backbone config: all sizes must be positive");
  }
  if (input_side % patch_pixels != 0) throw InvalidInput("backbone config: input_side not divisible by patch size");
  if (embed_dim % heads != 0) throw InvalidInput("backbone config: embed_dim not divisible by heads");
  if (channels > 3) throw InvalidInput("backbone config: at most 3 channels supported");
  for (double s : stddev) {
    if (!(s > 0.0)) throw InvalidInput("backbone config: normalization stddev must be positive");
  }
}

BackboneConfig BackboneConfig::production() { return BackboneConfig{}; }

BackboneConfig BackboneConfig::toy() {
  BackboneConfig c;
  c.patch_pixels = 4;
  c.depth = 4;
  c.embed_dim = 64;
  c.input_side = 32;
  c.heads = 4;
  return c;
}

DetectorConfig DetectorConfig::production() { return DetectorConfig{}; }

DetectorConfig DetectorConfig::toy() {
  DetectorConfig c;
  c.projection_dim = 32;
  c.projection_hidden = 32;
  c.attention_dim = 48;
  c.radius = 4.0;
  return c;
}

AugmentationPolicy AugmentationPolicy::disabled() {
  AugmentationPolicy p;
  p.resize = p.crop = p.rotate = p.blur = p.noise = p.jpeg = false;
  return p;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidInput("train config: epochs must be positive");
  if (warmup_epochs < 0 || warmup_epochs >= epochs) throw InvalidInput("train config: warmup_epochs must be < epochs");
  if (!(base_lr > 0.0) || !(floor_lr > 0.0)) throw InvalidInput("train config: learning rates must be positive");
  if (batch_size < 1 || views < 1) throw InvalidInput("train config: batch_size and views must be positive");
  if (weight_decay < 0.0 || grad_clip < 0.0) throw InvalidInput("train config: negative regularization");
}

TrainConfig TrainConfig::toy() {
  TrainConfig c;
  c.epochs = 10;
  c.warmup_epochs = 1;
  c.batch_size = 16;
  c.base_lr = 3e-3;
  c.detector = DetectorConfig::toy();
  // Resampling, blur, noise and JPEG all erase the toy artifact band.
  c.policy = AugmentationPolicy::disabled();
  c.policy.crop = true;
  return c;
}

// Readers start from the current value so that partial documents override defaults.

void to_json(nlohmann::json& j, const BackboneConfig& c) {
  j = {{"patch_pixels", c.patch_pixels}, {"depth", c.depth},
       {"embed_dim", c.embed_dim},       {"input_side", c.input_side},
       {"channels", c.channels},         {"heads", c.heads},
       {"mlp_ratio", c.mlp_ratio},       {"positional_encoding", c.positional_encoding},
       {"class_token", c.class_token},   {"mean", c.mean},
       {"stddev", c.stddev}};
}

void from_json(const nlohmann::json& j, BackboneConfig& c) {
  c.patch_pixels = j.value("patch_pixels", c.patch_pixels);
  c.depth = j.value("depth", c.depth);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.input_side = j.value("input_side", c.input_side);
  c.channels = j.value("channels", c.channels);
  c.heads = j.value("heads", c.heads);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.positional_encoding = j.value("positional_encoding", c.positional_encoding);
  c.class_token = j.value("class_token", c.class_token);
  c.mean = j.value("mean", c.mean);
  c.stddev = j.value("stddev", c.stddev);
}

NLOHMANN_JSON_SERIALIZE_ENUM(SoftmaxAxis, {{SoftmaxAxis::PerFeature, "per_feature"},
                                           {SoftmaxAxis::PerBlock, "per_block"}})

void to_json(nlohmann::json& j, const DetectorConfig& c) {
  j = {{"projection_dim", c.projection_dim}, {"projection_hidden", c.projection_hidden},
       {"attention_dim", c.attention_dim},   {"radius", c.radius},
       {"softmax_axis", c.softmax_axis},     {"cosine_eps", c.cosine_eps}};
}

void from_json(const nlohmann::json& j, DetectorConfig& c) {
  c.projection_dim = j.value("projection_dim", c.projection_dim);
  c.projection_hidden = j.value("projection_hidden", c.projection_hidden);
  c.attention_dim = j.value("attention_dim", c.attention_dim);
  c.radius = j.value("radius", c.radius);
  c.softmax_axis = j.value("softmax_axis", c.softmax_axis);
  c.cosine_eps = j.value("cosine_eps", c.cosine_eps);
}

void to_json(nlohmann::json& j, const AugmentationPolicy& c) {
  j = {{"resize", c.resize},
       {"resize_range", {c.resize_min, c.resize_max}},
       {"crop", c.crop},
       {"rotate", c.rotate},
       {"rotate_max_degrees", c.rotate_max_degrees},
       {"blur", c.blur},
       {"blur_sigma_range", {c.blur_sigma_min, c.blur_sigma_max}},
       {"noise", c.noise},
       {"noise_sigma_range", {c.noise_sigma_min, c.noise_sigma_max}},
       {"jpeg", c.jpeg},
       {"jpeg_quality_range", {c.jpeg_quality_min, c.jpeg_quality_max}},
       {"probability", c.probability}};
}

void from_json(const nlohmann::json& j, AugmentationPolicy& c) {
  auto range = [&j](const char* key, auto& lo, auto& hi) {
    if (j.contains(key)) {
      j.at(key).at(0).get_to(lo);
      j.at(key).at(1).get_to(hi);
    }
  };
  c.resize = j.value("resize", c.resize);
  range("resize_range", c.resize_min, c.resize_max);
  c.crop = j.value("crop", c.crop);
  c.rotate = j.value("rotate", c.rotate);
  c.rotate_max_degrees = j.value("rotate_max_degrees", c.rotate_max_degrees);
  c.blur = j.value("blur", c.blur);
  range("blur_sigma_range", c.blur_sigma_min, c.blur_sigma_max);
  c.noise = j.value("noise", c.noise);
  range("noise_sigma_range", c.noise_sigma_min, c.noise_sigma_max);
  c.jpeg = j.value("jpeg", c.jpeg);
  range("jpeg_quality_range", c.jpeg_quality_min, c.jpeg_quality_max);
  c.probability = j.value("probability", c.probability);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},       {"base_lr", c.base_lr},   {"floor_lr", c.floor_lr},
       {"warmup_epochs", c.warmup_epochs}, {"batch_size", c.batch_size}, {"views", c.views},
       {"seed", c.seed},           {"weight_decay", c.weight_decay}, {"grad_clip", c.grad_clip},
       {"detector", c.detector},   {"policy", c.policy}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.base_lr = j.value("base_lr", c.base_lr);
  c.floor_lr = j.value("floor_lr", c.floor_lr);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.views = j.value("views", c.views);
  c.seed = j.value("seed", c.seed);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  if (j.contains("detector")) from_json(j.at("detector"), c.detector);
  if (j.contains("policy")) from_json(j.at("policy"), c.policy);
}

}  // namespace spai
