#pragma once

// ViT-style encoder exposing every block output, the pixel decoding head used
// by the masked spectral pretext task, and backbone checkpoint I/O.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "spai/checkpoint.hpp"
#include "spai/configs.hpp"
#include "spai/nn.hpp"
#include "spai/spectral.hpp"

namespace spai {

/// Embedded spatial tokens z_0 (L x d), positional encoding included.
template <typename Scalar>
struct TokenSequence {
  Matrix<Scalar> tokens;
};

/// Outputs of every transformer block, spatial tokens only (N matrices of L x d).
template <typename Scalar>
struct BlockFeatures {
  std::vector<Matrix<Scalar>> per_block;

  int depth() const { return static_cast<int>(per_block.size()); }
};

/// Anything that maps a fixed-size patch to per-block token features.
template <typename Scalar>
class SpectralEncoder {
 public:
  virtual ~SpectralEncoder() = default;
  virtual const BackboneConfig& config() const = 0;
  virtual BlockFeatures<Scalar> encode(const Image<Scalar>& patch) const = 0;
  virtual std::uint64_t digest() const = 0;
};

/// Per-channel (x - mean) / std.
template <typename Scalar>
Image<Scalar> normalize_image(const Image<Scalar>& image, const BackboneConfig& config) {
  if (image.channel_count() != config.channels) throw InvalidInput("normalize_image: channel count mismatch");
  Image<Scalar> out = image;
  for (int c = 0; c < out.channel_count(); ++c) {
    const auto idx = static_cast<std::size_t>(c);
    out[c] = (out[c].array() - static_cast<Scalar>(config.mean[idx])) / static_cast<Scalar>(config.stddev[idx]);
  }
  return out;
}

/// Row t = token at grid position (t / grid, t % grid); columns ordered
/// channel-major then row-major within the p x p block.
template <typename Scalar>
Matrix<Scalar> extract_patches(const Image<Scalar>& image, int p) {
  const Eigen::Index gh = image.height() / p, gw = image.width() / p;
  const int channels = image.channel_count();
  Matrix<Scalar> out(gh * gw, static_cast<Eigen::Index>(p) * p * channels);
  for (Eigen::Index gy = 0; gy < gh; ++gy) {
    for (Eigen::Index gx = 0; gx < gw; ++gx) {
      const Eigen::Index t = gy * gw + gx;
      Eigen::Index f = 0;
      for (int c = 0; c < channels; ++c)
        for (int py = 0; py < p; ++py)
          for (int px = 0; px < p; ++px) out(t, f++) = image[c](gy * p + py, gx * p + px);
    }
  }
  return out;
}

/// Inverse of extract_patches for a square grid.
template <typename Scalar>
Image<Scalar> fold_patches(const Matrix<Scalar>& tokens, int side, int p, int channels) {
  const int grid = side / p;
  if (tokens.rows() != static_cast<Eigen::Index>(grid) * grid ||
      tokens.cols() != static_cast<Eigen::Index>(p) * p * channels) {
    throw InvalidInput("fold_patches: token matrix shape mismatch");
  }
  Image<Scalar> out(side, side, channels);
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      const Eigen::Index t = static_cast<Eigen::Index>(gy) * grid + gx;
      Eigen::Index f = 0;
      for (int c = 0; c < channels; ++c)
        for (int py = 0; py < p; ++py)
          for (int px = 0; px < p; ++px) out[c](gy * p + py, gx * p + px) = tokens(t, f++);
    }
  }
  return out;
}

/// Pre-norm transformer block with multi-head self-attention and a GELU MLP.
template <typename Scalar>
struct TransformerBlock {
  int heads = 1;
  LayerNorm<Scalar> norm1;
  Linear<Scalar> qkv;
  Linear<Scalar> proj;
  LayerNorm<Scalar> norm2;
  Linear<Scalar> fc1;
  Linear<Scalar> fc2;

  TransformerBlock() = default;
  template <typename Rng>
  TransformerBlock(const std::string& name, int dim, int head_count, int mlp_ratio, Rng& rng)
      : heads(head_count),
        norm1(name + ".norm1", dim),
        qkv(name + ".qkv", dim, 3 * dim, rng),
        proj(name + ".proj", dim, dim, rng),
        norm2(name + ".norm2", dim),
        fc1(name + ".fc1", dim, mlp_ratio * dim, rng),
        fc2(name + ".fc2", mlp_ratio * dim, dim, rng) {
    for (Linear<Scalar>* l : {&qkv, &proj, &fc1, &fc2}) {
      l->weight.value = init::trunc_normal<Scalar>(l->in_features(), l->out_features(), 0.02, rng);
      l->bias.value.setZero();
    }
    norm1.eps = norm2.eps = Scalar(1e-6);
  }

  template <typename Self>
  static Var<Scalar> apply(Self& self, Tape<Scalar>& tape, const Var<Scalar>& x) {
    const Eigen::Index dim = x.cols();
    const Eigen::Index head_dim = dim / self.heads;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(head_dim));
    Var<Scalar> qkv_out = self.qkv(tape, self.norm1(tape, x));
    std::vector<Var<Scalar>> head_outputs;
    head_outputs.reserve(static_cast<std::size_t>(self.heads));
    for (int h = 0; h < self.heads; ++h) {
      auto q = ops::slice_cols(qkv_out, h * head_dim, head_dim);
      auto k = ops::slice_cols(qkv_out, dim + h * head_dim, head_dim);
      auto v = ops::slice_cols(qkv_out, 2 * dim + h * head_dim, head_dim);
      auto attention = ops::softmax_rows(ops::scale(ops::matmul_nt(q, k), scale));
      head_outputs.push_back(ops::matmul(attention, v));
    }
    Var<Scalar> h = ops::add(x, self.proj(tape, ops::concat_cols(head_outputs)));
    return ops::add(h, self.fc2(tape, ops::gelu(self.fc1(tape, self.norm2(tape, h)))));
  }

  void collect(ParameterList<Scalar>& out) {
    norm1.collect(out);
    qkv.collect(out);
    proj.collect(out);
    norm2.collect(out);
    fc1.collect(out);
    fc2.collect(out);
  }
};

/// Pretext loss settings: frequency-distance exponent, and whether only the
/// band hidden from the encoder is scored.
struct PretextObjective {
  double alpha = 1.0;
  bool masked_band_only = false;
};

template <typename Scalar>
class VisionTransformer final : public SpectralEncoder<Scalar> {
 public:
  VisionTransformer() : VisionTransformer(BackboneConfig::toy(), 0) {}

  VisionTransformer(BackboneConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const int d = config_.embed_dim;
    patch_embed_ = Linear<Scalar>("encoder.patch_embed", config_.token_features(), d, rng);
    position_ = {"encoder.position", init::trunc_normal<Scalar>(config_.token_count(), d, 0.02, rng), {}, true};
    class_token_ = {"encoder.class_token", init::trunc_normal<Scalar>(1, d, 0.02, rng), {}, true};
    blocks_.reserve(static_cast<std::size_t>(config_.depth));
    for (int n = 0; n < config_.depth; ++n) {
      blocks_.emplace_back("encoder.block" + std::to_string(n), d, config_.heads, config_.mlp_ratio, rng);
    }
    head_ = Linear<Scalar>("decoder.head", d, config_.token_features(), rng);
    head_.weight.value = init::trunc_normal<Scalar>(d, config_.token_features(), 0.02, rng);
    head_.bias.value.setZero();
  }

  const BackboneConfig& config() const override { return config_; }

  /// Normalizes a raw input_side x input_side patch and embeds its tokens.
  TokenSequence<Scalar> tokenize(const Image<Scalar>& patch) const {
    Tape<Scalar> tape(false);
    return {embed(*this, tape, patch).value()};
  }

  BlockFeatures<Scalar> encode_blocks(const TokenSequence<Scalar>& tokens) const {
    if (tokens.tokens.rows() != config_.token_count() || tokens.tokens.cols() != config_.embed_dim) {
      throw InvalidInput("encode_blocks: token sequence shape mismatch");
    }
    if (!tokens.tokens.allFinite()) throw InvalidInput("encode_blocks: non-finite tokens");
    Tape<Scalar> tape(false);
    BlockFeatures<Scalar> out;
    for (const auto& v : run_blocks(*this, tape, tape.constant_ref(tokens.tokens))) out.per_block.push_back(v.value());
    return out;
  }

  BlockFeatures<Scalar> encode(const Image<Scalar>& patch) const override {
    Tape<Scalar> tape(false);
    BlockFeatures<Scalar> out;
    for (const auto& v : run_blocks(*this, tape, embed(*this, tape, patch))) out.per_block.push_back(v.value());
    return out;
  }

  /// Per-token linear projection to pixel blocks, folded back into an image
  /// (in normalized pixel units).
  Image<Scalar> decode_head(const Matrix<Scalar>& final_block) const {
    if (final_block.rows() != config_.token_count() || final_block.cols() != config_.embed_dim) {
      throw InvalidInput("decode_head: feature shape mismatch");
    }
    Tape<Scalar> tape(false);
    Var<Scalar> pixels = head_(tape, tape.constant_ref(final_block));
    return fold_patches<Scalar>(pixels.value(), config_.input_side, config_.patch_pixels, config_.channels);
  }

  /// One masked spectral reconstruction step on a single image: the encoder
  /// sees either the low or the high band, the head reconstructs the full
  /// (normalized) image, and the frequency distance to the original is
  /// back-propagated into encoder and head gradients. Returns the loss.
  template <typename Rng>
  Scalar pretext_step(const Image<Scalar>& image, double radius, double p_low, Rng& rng,
                      const PretextObjective& objective = {}) {
    Tape<Scalar> tape(true);
    return pretext(*this, tape, image, radius, p_low, rng, objective);
  }

  /// The same objective without recording or touching gradients.
  template <typename Rng>
  Scalar pretext_loss(const Image<Scalar>& image, double radius, double p_low, Rng& rng,
                      const PretextObjective& objective = {}) const {
    Tape<Scalar> tape(false);
    return pretext(*this, tape, image, radius, p_low, rng, objective);
  }

  ParameterList<Scalar> encoder_parameters() {
    ParameterList<Scalar> out;
    patch_embed_.collect(out);
    if (config_.positional_encoding) out.push_back(&position_);
    if (config_.class_token) out.push_back(&class_token_);
    for (auto& b : blocks_) b.collect(out);
    return out;
  }

  ParameterList<Scalar> head_parameters() {
    ParameterList<Scalar> out;
    head_.collect(out);
    return out;
  }

  ParameterList<Scalar> parameters() {
    ParameterList<Scalar> out = encoder_parameters();
    head_.collect(out);
    return out;
  }

  Linear<Scalar>& head() { return head_; }

  void freeze() {
    for (auto* p : parameters()) p->trainable = false;
    frozen_ = true;
  }
  bool frozen() const { return frozen_; }

  /// Order-sensitive hash of the encoder weights (head excluded), in float64.
  std::uint64_t digest() const override {
    auto* self = const_cast<VisionTransformer*>(this);
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto* p : self->encoder_parameters()) {
      const Matrix<double> v = p->value.template cast<double>();
      h = fnv1a64(p->name.data(), p->name.size(), h);
      h = fnv1a64(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()), h);
    }
    return h;
  }

  void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const {
    auto* self = const_cast<VisionTransformer*>(this);
    Archive archive{std::string(kBackboneFormat), {{"backbone", config_}, {"extra", extra}},
                    snapshot(self->parameters())};
    write_archive(path, archive);
  }

  /// Loads a backbone checkpoint. When `expected` is given the stored config must match it.
  static VisionTransformer load(const std::filesystem::path& path,
                                const std::optional<BackboneConfig>& expected = std::nullopt) {
    const Archive archive = read_archive(path, kBackboneFormat);
    BackboneConfig config;
    try {
      config = archive.config.at("backbone").get<BackboneConfig>();
      config.validate();
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointIncompatible(std::string("backbone config unreadable: ") + e.what());
    } catch (const InvalidInput& e) {
      throw CheckpointIncompatible(std::string("backbone config invalid: ") + e.what());
    }
    if (expected && !(*expected == config)) {
      throw CheckpointIncompatible("backbone config in '" + path.string() + "' does not match the expected config");
    }
    VisionTransformer model(config, 0);
    restore(model.parameters(), archive.tensors);
    return model;
  }

 private:
  void check_patch(const Image<Scalar>& patch) const {
    if (patch.channel_count() != config_.channels || patch.height() != config_.input_side ||
        patch.width() != config_.input_side) {
      throw InvalidInput("backbone expects " + std::to_string(config_.input_side) + "x" +
                         std::to_string(config_.input_side) + "x" + std::to_string(config_.channels) +
                         " input, got " + std::to_string(patch.height()) + "x" + std::to_string(patch.width()) + "x" +
                         std::to_string(patch.channel_count()));
    }
    if (!patch.all_finite()) throw InvalidInput("backbone input has non-finite pixels");
  }

  template <typename Self, typename Rng>
  static Scalar pretext(Self& self, Tape<Scalar>& tape, const Image<Scalar>& image, double radius, double p_low,
                        Rng& rng, const PretextObjective& objective) {
    self.check_patch(image);
    const FrequencyComponents<Scalar> components = split_frequency(image, radius);
    const Image<Scalar>& visible = sample_component(components, p_low, rng);
    const Image<Scalar> target = normalize_image(image, self.config_);

    FrequencyDistanceOptions distance;
    distance.alpha = objective.alpha;
    if (objective.masked_band_only) {
      distance.band_radius = radius;
      distance.inside_band = &visible != &components.low;  // the hidden band
    }

    auto blocks = run_blocks(self, tape, embed(self, tape, visible));
    Var<Scalar> pixels = self.head_(tape, blocks.back());
    const auto& c = self.config_;
    const Image<Scalar> reconstruction = fold_patches<Scalar>(pixels.value(), c.input_side, c.patch_pixels, c.channels);
    Image<Scalar> grad_image;
    const Scalar loss = frequency_distance(target, reconstruction, distance, tape.recording() ? &grad_image : nullptr);
    if (!std::isfinite(static_cast<double>(loss))) throw Error("pretext: non-finite loss");
    if (tape.recording()) {
      Matrix<Scalar> grad_tokens = extract_patches(grad_image, c.patch_pixels);
      Var<Scalar> out = tape.record(Matrix<Scalar>::Constant(1, 1, loss), {pixels},
                                    [pixels, grad_tokens](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                                      t.accumulate(pixels, grad_tokens * g(0, 0));
                                    });
      tape.backward(out);
    }
    return loss;
  }

  template <typename Self>
  static Var<Scalar> embed(Self& self, Tape<Scalar>& tape, const Image<Scalar>& patch) {
    self.check_patch(patch);
    Matrix<Scalar> pixels = extract_patches(normalize_image(patch, self.config_), self.config_.patch_pixels);
    Var<Scalar> tokens = self.patch_embed_(tape, tape.constant(std::move(pixels)));
    if (self.config_.positional_encoding) tokens = ops::add(tokens, tape.parameter(self.position_));
    return tokens;
  }

  template <typename Self>
  static std::vector<Var<Scalar>> run_blocks(Self& self, Tape<Scalar>& tape, const Var<Scalar>& tokens) {
    const Eigen::Index count = tokens.rows();
    Var<Scalar> x = tokens;
    if (self.config_.class_token) x = ops::concat_rows<Scalar>({tape.parameter(self.class_token_), tokens});
    std::vector<Var<Scalar>> outputs;
    outputs.reserve(self.blocks_.size());
    for (auto& block : self.blocks_) {
      x = TransformerBlock<Scalar>::apply(block, tape, x);
      outputs.push_back(self.config_.class_token ? ops::slice_rows(x, 1, count) : x);
    }
    return outputs;
  }

  BackboneConfig config_;
  Linear<Scalar> patch_embed_;
  Parameter<Scalar> position_;
  Parameter<Scalar> class_token_;
  std::vector<TransformerBlock<Scalar>> blocks_;
  Linear<Scalar> head_;
  bool frozen_ = false;
};

/// Loads a backbone and marks every weight frozen.
template <typename Scalar = float>
VisionTransformer<Scalar> load_pretrained(const std::filesystem::path& path,
                                          const std::optional<BackboneConfig>& expected = std::nullopt) {
  VisionTransformer<Scalar> model = VisionTransformer<Scalar>::load(path, expected);
  model.freeze();
  return model;
}

}  // namespace spai
