#pragma once

// Spectral reconstruction similarity: per-block projections of the original,
// low-band and high-band token features, their token-wise cosine similarities,
// and the mean/std pooling of those similarities into z_lambda.

#include <array>
#include <random>
#include <string>
#include <vector>

#include "spai/backbone.hpp"
#include "spai/nn.hpp"

namespace spai {

/// P_n: LayerNorm -> Linear(d, hidden) -> GELU -> Linear(hidden, D) -> LayerNorm.
template <typename Scalar>
using ProjectionOperator = Projector<Scalar>;

template <typename Scalar, typename Rng>
std::vector<ProjectionOperator<Scalar>> make_projection_operators(int depth, int embed_dim, int hidden, int out_dim,
                                                                  Rng& rng) {
  std::vector<ProjectionOperator<Scalar>> ops_out;
  ops_out.reserve(static_cast<std::size_t>(depth));
  for (int n = 0; n < depth; ++n) {
    ops_out.emplace_back("srs.proj" + std::to_string(n), embed_dim, hidden, out_dim, true, rng);
  }
  return ops_out;
}

/// Cosine similarities of matching token rows, each in [-1, 1].
template <typename Scalar>
struct SrsTriplet {
  Vector<Scalar> omega_ol;
  Vector<Scalar> omega_oh;
  Vector<Scalar> omega_lh;
};

/// Per block n: [mean ol, std ol, mean oh, std oh, mean lh, std lh]; length 6N.
template <typename Scalar>
struct SrsSummary {
  Vector<Scalar> z_lambda;
};

/// Block n goes through operator n only.
template <typename Scalar, typename Operators>
std::vector<Var<Scalar>> project_features(Tape<Scalar>& tape, const std::vector<Var<Scalar>>& blocks,
                                          Operators& operators) {
  if (blocks.size() != operators.size()) throw InvalidInput("project_features: operator count differs from depth");
  std::vector<Var<Scalar>> out;
  out.reserve(blocks.size());
  for (std::size_t n = 0; n < blocks.size(); ++n) out.push_back(operators[n](tape, blocks[n]));
  return out;
}

template <typename Scalar>
std::vector<Matrix<Scalar>> project_features(const BlockFeatures<Scalar>& blocks,
                                             const std::vector<ProjectionOperator<Scalar>>& operators) {
  if (blocks.per_block.size() != operators.size()) {
    throw InvalidInput("project_features: operator count differs from depth");
  }
  Tape<Scalar> tape(false);
  std::vector<Matrix<Scalar>> out;
  for (std::size_t n = 0; n < operators.size(); ++n) {
    if (blocks.per_block[n].cols() != operators[n].in_features()) {
      throw InvalidInput("project_features: feature width differs from operator input");
    }
    out.push_back(operators[n](tape, tape.constant_ref(blocks.per_block[n])).value());
  }
  return out;
}

inline constexpr double kSrsEps = 1e-8;

/// Row-wise cosine similarity; zero-norm rows give 0.
template <typename Scalar>
Vector<Scalar> srs(const Matrix<Scalar>& a, const Matrix<Scalar>& b, Scalar eps = Scalar(kSrsEps)) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidInput("srs: shape mismatch");
  Tape<Scalar> tape(false);
  return ops::cosine_rows(tape.constant_ref(a), tape.constant_ref(b), eps).value();
}

template <typename Scalar>
SrsTriplet<Scalar> srs_triplet(const Matrix<Scalar>& orig, const Matrix<Scalar>& low, const Matrix<Scalar>& high,
                               Scalar eps = Scalar(kSrsEps)) {
  return {srs(orig, low, eps), srs(orig, high, eps), srs(low, high, eps)};
}

/// Tape form of the triplet pooled to 1 x 6 for one block.
template <typename Scalar>
Var<Scalar> srs_block_summary(const Var<Scalar>& orig, const Var<Scalar>& low, const Var<Scalar>& high,
                              Scalar eps = Scalar(kSrsEps)) {
  std::vector<Var<Scalar>> parts;
  parts.reserve(6);
  for (auto [a, b] : {std::pair{orig, low}, std::pair{orig, high}, std::pair{low, high}}) {
    Var<Scalar> omega = ops::cosine_rows(a, b, eps);
    parts.push_back(ops::mean_rows(omega));
    parts.push_back(ops::std_rows(omega));
  }
  return ops::concat_cols(parts);
}

/// Mean and population std of each similarity vector, concatenated block by block.
template <typename Scalar>
SrsSummary<Scalar> pool_srs(const std::vector<SrsTriplet<Scalar>>& triplets) {
  if (triplets.empty()) throw InvalidInput("pool_srs: no triplets");
  const Eigen::Index length = triplets.front().omega_ol.size();
  SrsSummary<Scalar> out{Vector<Scalar>(static_cast<Eigen::Index>(6 * triplets.size()))};
  Eigen::Index at = 0;
  for (const auto& t : triplets) {
    for (const Vector<Scalar>* omega : {&t.omega_ol, &t.omega_oh, &t.omega_lh}) {
      if (omega->size() != length || length == 0) throw InvalidInput("pool_srs: triplets differ in length");
      const Scalar mean = omega->mean();
      const Scalar var = (omega->array() - mean).square().sum() / static_cast<Scalar>(length);
      out.z_lambda(at++) = mean;
      out.z_lambda(at++) = std::sqrt(var);
    }
  }
  return out;
}

}  // namespace spai
