#pragma once

// Spectral context vector: token statistics of the projected original-image
// features, weighted by a learned per-block spectral map, summed over blocks,
// and concatenated with z_lambda into the per-patch spectral vector.

#include <random>
#include <vector>

#include "spai/configs.hpp"
#include "spai/nn.hpp"
#include "spai/srs.hpp"

namespace spai {

/// z': row n = [token mean of block n ; token population std of block n] (N x 2D).
template <typename Scalar>
struct BlockStats {
  Matrix<Scalar> z_prime;
};

template <typename Scalar>
struct SpectralMap {
  Parameter<Scalar> map;  // C, N x D
  Projector<Scalar> expand;   // 2D -> D
  Projector<Scalar> refine;   // D -> D
  SoftmaxAxis axis = SoftmaxAxis::PerFeature;

  SpectralMap() = default;
  template <typename Rng>
  SpectralMap(int depth, int dim, SoftmaxAxis softmax_axis, Rng& rng)
      : map{"scv.map", Matrix<Scalar>::Zero(depth, dim), {}, true},
        expand("scv.expand", 2 * dim, dim, dim, false, rng),
        refine("scv.refine", dim, dim, dim, false, rng),
        axis(softmax_axis) {}

  int depth() const { return static_cast<int>(map.value.rows()); }
  int dim() const { return static_cast<int>(map.value.cols()); }

  void collect(ParameterList<Scalar>& out) {
    out.push_back(&map);
    expand.collect(out);
    refine.collect(out);
  }
};

template <typename Scalar>
struct SpectralVector {
  Vector<Scalar> z_s;  // [z_c ; z_lambda]
};

template <typename Scalar>
Var<Scalar> pool_block_stats(const std::vector<Var<Scalar>>& projected) {
  if (projected.empty()) throw InvalidInput("pool_block_stats: no blocks");
  std::vector<Var<Scalar>> rows;
  rows.reserve(projected.size());
  for (const auto& z : projected) rows.push_back(ops::concat_cols<Scalar>({ops::mean_rows(z), ops::std_rows(z)}));
  return ops::concat_rows(rows);
}

template <typename Scalar>
BlockStats<Scalar> pool_block_stats(const std::vector<Matrix<Scalar>>& projected) {
  Tape<Scalar> tape(false);
  std::vector<Var<Scalar>> vars;
  for (const auto& m : projected) vars.push_back(tape.constant_ref(m));
  return {pool_block_stats(vars).value()};
}

/// softmax(C) over the configured axis: per row across D, or per column across N.
template <typename Scalar>
Var<Scalar> spectral_map_weights(const Var<Scalar>& map, SoftmaxAxis axis) {
  if (axis == SoftmaxAxis::PerFeature) return ops::softmax_rows(map);
  return ops::transpose(ops::softmax_rows(ops::transpose(map)));
}

/// z_c = sum_n [P2(softmax(C) * P1(z'))]_n, returned as 1 x D.
template <typename Scalar, typename Map>
Var<Scalar> spectral_context(Tape<Scalar>& tape, const Var<Scalar>& stats, Map& map) {
  if (stats.rows() != map.depth() || stats.cols() != 2 * map.dim()) {
    throw InvalidInput("spectral_context: block stats shape does not match the spectral map");
  }
  Var<Scalar> weights = spectral_map_weights(tape.parameter(map.map), map.axis);
  Var<Scalar> weighted = ops::mul(weights, map.expand(tape, stats));
  return ops::sum_rows(map.refine(tape, weighted));
}

template <typename Scalar>
Vector<Scalar> spectral_context(const BlockStats<Scalar>& stats, const SpectralMap<Scalar>& map) {
  Tape<Scalar> tape(false);
  return spectral_context(tape, tape.constant_ref(stats.z_prime), map).value().transpose();
}

template <typename Scalar>
SpectralVector<Scalar> assemble_spectral_vector(const Vector<Scalar>& z_c, const SrsSummary<Scalar>& z_lambda,
                                                Eigen::Index expected_dim = -1, Eigen::Index expected_depth = -1) {
  if (expected_dim >= 0 && z_c.size() != expected_dim) throw InvalidInput("assemble_spectral_vector: z_c length");
  if (z_lambda.z_lambda.size() % 6 != 0 ||
      (expected_depth >= 0 && z_lambda.z_lambda.size() != 6 * expected_depth)) {
    throw InvalidInput("assemble_spectral_vector: z_lambda length must be 6N");
  }
  SpectralVector<Scalar> out{Vector<Scalar>(z_c.size() + z_lambda.z_lambda.size())};
  out.z_s << z_c, z_lambda.z_lambda;
  return out;
}

}  // namespace spai
