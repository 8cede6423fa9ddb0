#pragma once

// Full image-level detector: frozen spectral encoder, per-block projections,
// spectral reconstruction similarity, spectral context vector, spectral
// context attention over patches and the classification head.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "spai/backbone.hpp"
#include "spai/sca.hpp"
#include "spai/scv.hpp"
#include "spai/srs.hpp"

namespace spai {

/// Frozen-encoder outputs for one patch and its two frequency bands.
template <typename Scalar>
struct PatchFeatures {
  BlockFeatures<Scalar> original;
  BlockFeatures<Scalar> low;
  BlockFeatures<Scalar> high;
};

struct DetectionResult {
  std::string path;
  double score = 0.5;
  std::vector<double> attention;
  std::vector<PatchRect> coords;
  std::string model_version;
  double timing_ms = 0.0;
  Eigen::MatrixXd embeddings;  // K x (D + 6N), filled only on request
};

struct ScoreOptions {
  std::size_t patch_batch = 64;  // patches whose encoder features are alive at once
  bool keep_embeddings = false;
};

/// {path, score, patch_count, attention, coords:[[top, left, h, w]...], model_version}
inline void to_json(nlohmann::json& j, const DetectionResult& r) {
  nlohmann::json coords = nlohmann::json::array();
  for (const auto& c : r.coords) coords.push_back({c.top, c.left, c.height, c.width});
  j = {{"path", r.path},
       {"score", r.score},
       {"patch_count", r.coords.size()},
       {"attention", r.attention},
       {"coords", coords},
       {"model_version", r.model_version},
       {"timing_ms", r.timing_ms}};
}

inline std::string hex_digest(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

template <typename Scalar>
class Detector {
 public:
  struct Forward {
    Var<Scalar> logit;    // 1 x 1
    Var<Scalar> weights;  // 1 x K
    Var<Scalar> vectors;  // K x (D + 6N)
  };

  Detector(std::shared_ptr<const SpectralEncoder<Scalar>> encoder, DetectorConfig config, std::uint64_t seed)
      : encoder_(std::move(encoder)), config_(config) {
    if (!encoder_) throw InvalidInput("detector: encoder required");
    if (config_.projection_dim < 1 || config_.projection_hidden < 1 || config_.attention_dim < 2) {
      throw InvalidInput("detector: dimensions must be positive");
    }
    std::mt19937_64 rng(seed);
    const BackboneConfig& bc = encoder_->config();
    projections_ = make_projection_operators<Scalar>(bc.depth, bc.embed_dim, config_.projection_hidden,
                                                     config_.projection_dim, rng);
    map_ = SpectralMap<Scalar>(bc.depth, config_.projection_dim, config_.softmax_axis, rng);
    attention_ = AttentionParams<Scalar>(spectral_length(), config_.attention_dim, rng);
    head_ = ClassificationHead<Scalar>(spectral_length(), config_.attention_dim, rng);
  }

  const DetectorConfig& config() const { return config_; }
  const SpectralEncoder<Scalar>& encoder() const { return *encoder_; }
  std::shared_ptr<const SpectralEncoder<Scalar>> encoder_ptr() const { return encoder_; }
  int depth() const { return encoder_->config().depth; }
  int patch_side() const { return encoder_->config().input_side; }
  Eigen::Index spectral_length() const { return config_.projection_dim + 6 * depth(); }

  std::vector<ProjectionOperator<Scalar>>& projections() { return projections_; }
  SpectralMap<Scalar>& spectral_map() { return map_; }
  AttentionParams<Scalar>& attention() { return attention_; }
  ClassificationHead<Scalar>& head() { return head_; }

  PatchFeatures<Scalar> patch_features(const Image<Scalar>& patch) const {
    const FrequencyComponents<Scalar> bands = split_frequency(patch, config_.radius);
    return {encoder_->encode(patch), encoder_->encode(bands.low), encoder_->encode(bands.high)};
  }

  /// z_s = [z_c ; z_lambda] for one patch, 1 x (D + 6N). `features` must outlive the tape.
  template <typename Self>
  static Var<Scalar> spectral_vector(Self& self, Tape<Scalar>& tape, const PatchFeatures<Scalar>& features) {
    const int n_blocks = self.depth();
    if (features.original.depth() != n_blocks || features.low.depth() != n_blocks ||
        features.high.depth() != n_blocks) {
      throw InvalidInput("spectral_vector: feature depth differs from encoder depth");
    }
    auto bind = [&tape](const BlockFeatures<Scalar>& b) {
      std::vector<Var<Scalar>> out;
      for (const auto& m : b.per_block) out.push_back(tape.constant_ref(m));
      return out;
    };
    auto orig = project_features(tape, bind(features.original), self.projections_);
    auto low = project_features(tape, bind(features.low), self.projections_);
    auto high = project_features(tape, bind(features.high), self.projections_);
    const auto eps = static_cast<Scalar>(self.config_.cosine_eps);
    std::vector<Var<Scalar>> z_lambda;
    for (int n = 0; n < n_blocks; ++n) {
      const auto i = static_cast<std::size_t>(n);
      z_lambda.push_back(srs_block_summary(orig[i], low[i], high[i], eps));
    }
    Var<Scalar> z_c = spectral_context(tape, pool_block_stats(orig), self.map_);
    return ops::concat_cols<Scalar>({z_c, ops::concat_cols(z_lambda)});
  }

  /// Logit and attention over a set of patches of the same image.
  template <typename Self>
  static Forward forward(Self& self, Tape<Scalar>& tape, const std::vector<PatchFeatures<Scalar>>& patches) {
    if (patches.empty()) throw InvalidInput("detector: no patches");
    std::vector<Var<Scalar>> rows;
    rows.reserve(patches.size());
    for (const auto& p : patches) rows.push_back(spectral_vector(self, tape, p));
    return fuse(self, tape, ops::concat_rows(rows));
  }

  /// Attention and head on precomputed spectral vectors (K x (D + 6N)).
  template <typename Self>
  static Forward fuse(Self& self, Tape<Scalar>& tape, const Var<Scalar>& vectors) {
    auto attended = spectral_attention(tape, vectors, self.attention_);
    return {ClassificationHead<Scalar>::logit(self.head_, tape, attended.fused), attended.weights, vectors};
  }

  /// Scores an image of any size using its actual patch count.
  DetectionResult score(const Image<Scalar>& image, const ScoreOptions& options = {}) const {
    const auto start = std::chrono::steady_clock::now();
    const PatchGrid<Scalar> grid = patchify(image, patch_side());
    const std::size_t batch = std::max<std::size_t>(1, options.patch_batch);
    Matrix<Scalar> vectors(static_cast<Eigen::Index>(grid.size()), spectral_length());
    for (std::size_t first = 0; first < grid.size(); first += batch) {
      const std::size_t last = std::min(grid.size(), first + batch);
      std::vector<PatchFeatures<Scalar>> features;
      features.reserve(last - first);
      for (std::size_t k = first; k < last; ++k) features.push_back(patch_features(grid.patches[k]));
      for (std::size_t k = first; k < last; ++k) {
        Tape<Scalar> tape(false);
        vectors.row(static_cast<Eigen::Index>(k)) = spectral_vector(*this, tape, features[k - first]).value();
      }
    }
    Tape<Scalar> tape(false);
    Forward out = fuse(*this, tape, tape.constant_ref(vectors));

    DetectionResult result;
    result.score = static_cast<double>(ops::sigmoid_value(out.logit.value()(0, 0)));
    for (Eigen::Index k = 0; k < out.weights.cols(); ++k) {
      result.attention.push_back(static_cast<double>(out.weights.value()(0, k)));
    }
    result.coords = grid.coords;
    result.model_version = model_version_;
    if (options.keep_embeddings) result.embeddings = vectors.template cast<double>();
    result.timing_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return result;
  }

  /// Trainable parameters only; the encoder is never part of this list.
  ParameterList<Scalar> parameters() {
    ParameterList<Scalar> out;
    for (auto& p : projections_) p.collect(out);
    map_.collect(out);
    attention_.collect(out);
    head_.collect(out);
    return out;
  }

  const std::string& model_version() const { return model_version_; }
  void set_model_version(std::string v) { model_version_ = std::move(v); }

  std::uint64_t digest() {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto* p : parameters()) {
      const Matrix<double> v = p->value.template cast<double>();
      h = fnv1a64(p->name.data(), p->name.size(), h);
      h = fnv1a64(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()), h);
    }
    return h;
  }

 private:
  std::shared_ptr<const SpectralEncoder<Scalar>> encoder_;
  DetectorConfig config_;
  std::vector<ProjectionOperator<Scalar>> projections_;
  SpectralMap<Scalar> map_;
  AttentionParams<Scalar> attention_;
  ClassificationHead<Scalar> head_;
  std::string model_version_ = "spai.detector.v1:untrained";
};

/// Side information stored next to the detector weights.
struct DetectorRecord {
  std::filesystem::path backbone_path;
  nlohmann::json train;  // training config and augmentation policy
};

template <typename Scalar>
void save_detector(const std::filesystem::path& path, Detector<Scalar>& detector, const DetectorRecord& record) {
  detector.set_model_version(std::string(kDetectorFormat) + ":" + hex_digest(detector.digest()));
  nlohmann::json config = {{"detector", detector.config()},
                           {"backbone", detector.encoder().config()},
                           {"backbone_digest", hex_digest(detector.encoder().digest())},
                           {"backbone_path", record.backbone_path.string()},
                           {"model_version", detector.model_version()},
                           {"train", record.train}};
  write_archive(path, Archive{std::string(kDetectorFormat), config, snapshot(detector.parameters())});
}

/// Loads a detector and the frozen backbone it references. `backbone_override`
/// replaces the stored backbone path; either way its digest must match.
template <typename Scalar = float>
std::pair<std::unique_ptr<Detector<Scalar>>, DetectorRecord> load_detector(
    const std::filesystem::path& path, const std::optional<std::filesystem::path>& backbone_override = std::nullopt) {
  const Archive archive = read_archive(path, kDetectorFormat);
  DetectorRecord record;
  DetectorConfig config;
  BackboneConfig backbone_config;
  std::string digest;
  try {
    config = archive.config.at("detector").get<DetectorConfig>();
    backbone_config = archive.config.at("backbone").get<BackboneConfig>();
    digest = archive.config.at("backbone_digest").get<std::string>();
    record.backbone_path = archive.config.at("backbone_path").get<std::string>();
    record.train = archive.config.value("train", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointIncompatible(std::string("detector header unreadable: ") + e.what());
  }
  if (backbone_override) record.backbone_path = *backbone_override;
  if (!backbone_override && record.backbone_path.is_relative() && !std::filesystem::exists(record.backbone_path)) {
    const auto beside = path.parent_path() / record.backbone_path.filename();
    if (std::filesystem::exists(beside)) record.backbone_path = beside;
  }
  auto encoder =
      std::make_shared<VisionTransformer<Scalar>>(load_pretrained<Scalar>(record.backbone_path, backbone_config));
  if (hex_digest(encoder->digest()) != digest) {
    throw CheckpointIncompatible("backbone '" + record.backbone_path.string() +
                                 "' does not match the digest recorded in the detector checkpoint");
  }
  auto detector = std::make_unique<Detector<Scalar>>(encoder, config, 0);
  restore(detector->parameters(), archive.tensors);
  detector->set_model_version(archive.config.value("model_version", std::string(kDetectorFormat)));
  return {std::move(detector), record};
}

}  // namespace spai
