#pragma once

// Arbitrary-resolution patching, spectral context attention over the K
// per-patch spectral vectors, the 3-layer classification head and the
// attention overlay renderer.

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "spai/nn.hpp"

namespace spai {

struct PatchRect {
  Eigen::Index top = 0;
  Eigen::Index left = 0;
  Eigen::Index height = 0;
  Eigen::Index width = 0;

  friend bool operator==(const PatchRect&, const PatchRect&) = default;
};

template <typename Scalar>
struct PatchGrid {
  std::vector<Image<Scalar>> patches;
  std::vector<PatchRect> coords;
  Eigen::Index source_height = 0;
  Eigen::Index source_width = 0;

  std::size_t size() const { return patches.size(); }
};

namespace detail {

// Reflection without repeating the edge sample, extended periodically so that
// any pad width is valid.
inline Eigen::Index reflect_index(Eigen::Index i, Eigen::Index n) {
  if (n == 1) return 0;
  const Eigen::Index period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

template <typename Scalar>
Matrix<Scalar> reflect_pad(const Matrix<Scalar>& m, Eigen::Index rows, Eigen::Index cols) {
  Matrix<Scalar> out(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) out(r, c) = m(reflect_index(r, m.rows()), reflect_index(c, m.cols()));
  return out;
}

// Offsets of a ceil-count tiling; the last tile is shifted inward to end at `extent`.
inline std::vector<Eigen::Index> tile_offsets(Eigen::Index extent, Eigen::Index side) {
  if (extent <= side) return {0};
  const Eigen::Index count = (extent + side - 1) / side;
  std::vector<Eigen::Index> out;
  for (Eigen::Index i = 0; i < count; ++i) out.push_back(std::min(i * side, extent - side));
  return out;
}

}  // namespace detail

/// Splits an image into side x side patches on a ceil-count grid. Images
/// smaller than `side` along an axis are reflect-padded along it.
template <typename Scalar>
PatchGrid<Scalar> patchify(const Image<Scalar>& image, Eigen::Index side) {
  if (image.empty()) throw InvalidInput("patchify: empty image");
  if (side < 1) throw InvalidInput("patchify: patch side must be positive");
  PatchGrid<Scalar> grid;
  grid.source_height = image.height();
  grid.source_width = image.width();

  Image<Scalar> padded = image;
  if (image.height() < side || image.width() < side) {
    for (auto& c : padded.channels) {
      c = detail::reflect_pad(c, std::max(image.height(), side), std::max(image.width(), side));
    }
  }
  for (Eigen::Index top : detail::tile_offsets(padded.height(), side)) {
    for (Eigen::Index left : detail::tile_offsets(padded.width(), side)) {
      grid.patches.push_back(padded.crop(top, left, side, side));
      grid.coords.push_back({top, left, std::min(side, image.height() - top), std::min(side, image.width() - left)});
    }
  }
  return grid;
}

template <typename Scalar>
struct AttentionParams {
  Parameter<Scalar> query;   // q, 1 x D_h
  Parameter<Scalar> keys;    // W_K, F x D_h
  Parameter<Scalar> values;  // W_V, F x D_h
  Parameter<Scalar> output;  // W_O, D_h x F

  AttentionParams() = default;
  template <typename Rng>
  AttentionParams(Eigen::Index features, Eigen::Index attention_dim, Rng& rng) {
    const double kf = 1.0 / std::sqrt(static_cast<double>(features));
    const double kh = 1.0 / std::sqrt(static_cast<double>(attention_dim));
    query = {"sca.query", init::trunc_normal<Scalar>(1, attention_dim, 0.02, rng), {}, true};
    keys = {"sca.keys", init::uniform<Scalar>(features, attention_dim, kf, rng), {}, true};
    values = {"sca.values", init::uniform<Scalar>(features, attention_dim, kf, rng), {}, true};
    output = {"sca.output", init::uniform<Scalar>(attention_dim, features, kh, rng), {}, true};
  }

  Eigen::Index features() const { return keys.value.rows(); }
  Eigen::Index attention_dim() const { return keys.value.cols(); }

  void collect(ParameterList<Scalar>& out) {
    out.push_back(&query);
    out.push_back(&keys);
    out.push_back(&values);
    out.push_back(&output);
  }
};

template <typename Scalar>
struct AttentionOutput {
  Var<Scalar> fused;    // 1 x F
  Var<Scalar> weights;  // 1 x K
};

/// Single-query attention over K spectral vectors (rows of `vectors`).
/// Cost and memory are linear in K.
template <typename Scalar, typename Params>
AttentionOutput<Scalar> spectral_attention(Tape<Scalar>& tape, const Var<Scalar>& vectors, Params& params) {
  if (vectors.rows() < 1) throw InvalidInput("spectral_attention: need at least one patch");
  if (vectors.cols() != params.features()) throw InvalidInput("spectral_attention: vector length mismatch");
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(params.attention_dim()));
  Var<Scalar> keys = ops::matmul(vectors, tape.parameter(params.keys));
  Var<Scalar> weights = ops::softmax_rows(ops::scale(ops::matmul_nt(tape.parameter(params.query), keys), scale));
  Var<Scalar> values = ops::matmul(vectors, tape.parameter(params.values));
  Var<Scalar> fused = ops::matmul(ops::matmul(weights, values), tape.parameter(params.output));
  return {fused, weights};
}

/// Plain form: returns (fused vector, attention weights).
template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> spectral_attention(const Matrix<Scalar>& vectors,
                                                             const AttentionParams<Scalar>& params) {
  Tape<Scalar> tape(false);
  auto out = spectral_attention(tape, tape.constant_ref(vectors), params);
  return {out.fused.value().transpose(), out.weights.value().transpose()};
}

/// F -> D_h -> D_h/2 -> 1 with ReLU, ReLU; the sigmoid is applied by the caller
/// (or by `classify`) so that training can use the logit directly.
template <typename Scalar>
struct ClassificationHead {
  Linear<Scalar> fc1;
  Linear<Scalar> fc2;
  Linear<Scalar> fc3;

  ClassificationHead() = default;
  template <typename Rng>
  ClassificationHead(Eigen::Index features, Eigen::Index hidden, Rng& rng)
      : fc1("head.fc1", features, hidden, rng),
        fc2("head.fc2", hidden, std::max<Eigen::Index>(1, hidden / 2), rng),
        fc3("head.fc3", std::max<Eigen::Index>(1, hidden / 2), 1, rng) {}

  template <typename Self>
  static Var<Scalar> logit(Self& self, Tape<Scalar>& tape, const Var<Scalar>& fused) {
    if (fused.cols() != self.fc1.in_features()) throw InvalidInput("classification head: input length mismatch");
    return self.fc3(tape, ops::relu(self.fc2(tape, ops::relu(self.fc1(tape, fused)))));
  }

  void collect(ParameterList<Scalar>& out) {
    fc1.collect(out);
    fc2.collect(out);
    fc3.collect(out);
  }
};

/// Probability that `fused` comes from a generated image.
template <typename Scalar>
Scalar classify(const RowVector<Scalar>& fused, const ClassificationHead<Scalar>& head) {
  Tape<Scalar> tape(false);
  Matrix<Scalar> input = fused;
  const Scalar l = ClassificationHead<Scalar>::logit(head, tape, tape.constant_ref(input)).value()(0, 0);
  return ops::sigmoid_value(l);
}

/// Min-max normalization to [0, 1]; a constant vector maps to 0.5.
template <typename Scalar>
std::vector<double> normalize_weights(const Vector<Scalar>& weights) {
  std::vector<double> out(static_cast<std::size_t>(weights.size()));
  if (weights.size() == 0) return out;
  const double lo = static_cast<double>(weights.minCoeff());
  const double hi = static_cast<double>(weights.maxCoeff());
  for (Eigen::Index k = 0; k < weights.size(); ++k) {
    out[static_cast<std::size_t>(k)] = hi > lo ? (static_cast<double>(weights(k)) - lo) / (hi - lo) : 0.5;
  }
  return out;
}

/// Diverging blue-grey-red colormap, t in [0, 1].
inline std::array<double, 3> coolwarm(double t) {
  static constexpr std::array<std::array<double, 3>, 3> anchors{{
      {0.2298057, 0.298717966, 0.753683153},
      {0.865003, 0.865003, 0.865003},
      {0.705673158, 0.01555616, 0.150232812},
  }};
  t = std::clamp(t, 0.0, 1.0);
  const std::size_t i = t < 0.5 ? 0 : 1;
  const double u = t < 0.5 ? t / 0.5 : (t - 0.5) / 0.5;
  std::array<double, 3> rgb{};
  for (std::size_t c = 0; c < 3; ++c) rgb[c] = anchors[i][c] + u * (anchors[i + 1][c] - anchors[i][c]);
  return rgb;
}

inline constexpr double kHeatmapAlpha = 0.45;

/// RGB overlay of normalized patch attention on the source image; where
/// edge-aligned patches overlap the larger weight wins.
template <typename Scalar>
Image<Scalar> attention_heatmap(const PatchGrid<Scalar>& grid, const Vector<Scalar>& weights,
                                const Image<Scalar>& source) {
  if (static_cast<std::size_t>(weights.size()) != grid.coords.size()) {
    throw InvalidInput("attention_heatmap: one weight per patch required");
  }
  if (source.height() != grid.source_height || source.width() != grid.source_width) {
    throw InvalidInput("attention_heatmap: source image does not match the grid");
  }
  const std::vector<double> level = normalize_weights(weights);
  Eigen::MatrixXd strength = Eigen::MatrixXd::Constant(source.height(), source.width(), -1.0);
  for (std::size_t k = 0; k < grid.coords.size(); ++k) {
    const PatchRect& r = grid.coords[k];
    auto block = strength.block(r.top, r.left, r.height, r.width);
    block = block.cwiseMax(level[k]);
  }
  Image<Scalar> out(source.height(), source.width(), 3);
  for (Eigen::Index x = 0; x < source.width(); ++x) {
    for (Eigen::Index y = 0; y < source.height(); ++y) {
      const auto color = coolwarm(strength(y, x));
      for (int c = 0; c < 3; ++c) {
        const double base = static_cast<double>(source[std::min(c, source.channel_count() - 1)](y, x));
        out[c](y, x) = static_cast<Scalar>((1.0 - kHeatmapAlpha) * base + kHeatmapAlpha * color[static_cast<std::size_t>(c)]);
      }
    }
  }
  return out;
}

}  // namespace spai
