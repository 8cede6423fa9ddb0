#include <doctest.h>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "nn_oracles.hpp"
#include "oracles.hpp"
#include "spai/scv.hpp"

using namespace spai;

namespace {

std::vector<Matrix<double>> random_projected(int depth, Eigen::Index tokens, Eigen::Index dim, std::mt19937_64& rng) {
  std::vector<Matrix<double>> out;
  for (int n = 0; n < depth; ++n) out.push_back(fixture::random_matrix(tokens, dim, rng));
  return out;
}

}  // namespace

TEST_CASE("pool_block_stats examples") {
  std::vector<Matrix<double>> constant(3, Matrix<double>::Constant(5, 4, 0.7));
  const auto stats = pool_block_stats(constant);
  CHECK(stats.z_prime.rows() == 3);
  CHECK(stats.z_prime.cols() == 8);
  CHECK((stats.z_prime.leftCols(4).array() - 0.7).abs().maxCoeff() < 1e-15);
  CHECK(stats.z_prime.rightCols(4).isZero(0));

  std::mt19937_64 rng(1);
  CHECK(pool_block_stats(random_projected(12, 3, 1024, rng)).z_prime.cols() == 2048);
  CHECK(pool_block_stats(random_projected(12, 3, 1024, rng)).z_prime.rows() == 12);
  CHECK_THROWS_AS(pool_block_stats(std::vector<Matrix<double>>{}), InvalidInput);
}

TEST_CASE("pool_block_stats matches a scalar loop") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto projected = random_projected(4, 8, 16, rng);
    const Matrix<double> z = pool_block_stats(projected).z_prime;
    for (int n = 0; n < 4; ++n) {
      for (Eigen::Index d = 0; d < 16; ++d) {
        std::vector<double> column;
        for (Eigen::Index t = 0; t < 8; ++t) column.push_back(projected[static_cast<std::size_t>(n)](t, d));
        CHECK(std::abs(z(n, d) - oracle::mean(column)) < 1e-7);
        CHECK(std::abs(z(n, 16 + d) - oracle::population_std(column)) < 1e-7);
      }
    }
    CHECK((z.rightCols(16).array() >= 0.0).all());
  }
}

TEST_CASE("spectral map weights are probability vectors on the configured axis") {
  std::mt19937_64 rng(3);
  Tape<double> tape(false);
  for (double scale : {0.1, 10.0, 300.0}) {
    const Matrix<double> c = fixture::random_matrix(6, 9, rng, scale);
    const Matrix<double> rows = spectral_map_weights(tape.constant_ref(c), SoftmaxAxis::PerFeature).value();
    CHECK((rows.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);
    CHECK((rows.array() >= 0.0).all());
    const Matrix<double> cols = spectral_map_weights(tape.constant_ref(c), SoftmaxAxis::PerBlock).value();
    CHECK((cols.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);
  }
  SpectralMap<double> fresh(4, 8, SoftmaxAxis::PerFeature, rng);
  const Matrix<double> uniform = spectral_map_weights(tape.constant_ref(fresh.map.value), fresh.axis).value();
  CHECK((uniform.array() - 1.0 / 8).abs().maxCoeff() < 1e-15);
}

TEST_CASE("a single block: z_c is that block's refined row") {
  std::mt19937_64 rng(4);
  SpectralMap<double> map(1, 5, SoftmaxAxis::PerFeature, rng);
  map.map.value = fixture::random_matrix(1, 5, rng);
  const BlockStats<double> stats{fixture::random_matrix(1, 10, rng)};
  const Vector<double> z_c = spectral_context(stats, map);

  std::vector<double> p1 = oracle::projector_row(oracle::row(stats.z_prime, 0), map.expand);
  const std::vector<double> w = oracle::softmax(oracle::row(map.map.value, 0));
  for (std::size_t j = 0; j < p1.size(); ++j) p1[j] *= w[j];
  const std::vector<double> expected = oracle::projector_row(p1, map.refine);
  for (Eigen::Index j = 0; j < 5; ++j) CHECK(z_c(j) == doctest::Approx(expected[static_cast<std::size_t>(j)]).epsilon(1e-9));
}

TEST_CASE("spectral context on a 2 x 4 toy matches a hand-built weighted sum") {
  std::mt19937_64 rng(5);
  SpectralMap<double> map(2, 4, SoftmaxAxis::PerFeature, rng);
  // Pass-through style: the first projector keeps the mean half, both use identity second layers.
  map.expand.fc1.weight.value = Matrix<double>::Zero(8, 4);
  map.expand.fc1.weight.value.topRows(4) = Matrix<double>::Identity(4, 4);
  map.expand.fc2.weight.value = Matrix<double>::Identity(4, 4);
  map.refine.fc1.weight.value = Matrix<double>::Identity(4, 4);
  map.refine.fc2.weight.value = Matrix<double>::Identity(4, 4);
  for (auto* l : {&map.expand.fc1, &map.expand.fc2, &map.refine.fc1, &map.refine.fc2}) l->bias.value.setZero();
  map.map.value << 0.0, 1.0, -1.0, 2.0, 0.5, 0.5, 0.0, -3.0;
  BlockStats<double> stats{Matrix<double>(2, 8)};
  stats.z_prime << 1.0, -2.0, 0.5, 3.0, 0.1, 0.2, 0.3, 0.4, -1.0, 0.0, 2.0, 1.5, 0.9, 0.8, 0.7, 0.6;

  const Vector<double> z_c = spectral_context(stats, map);
  std::vector<double> expected(4, 0.0);
  for (int n = 0; n < 2; ++n) {
    std::vector<double> h(4);
    for (std::size_t j = 0; j < 4; ++j) h[j] = oracle::gelu(stats.z_prime(n, static_cast<Eigen::Index>(j)));
    h = oracle::layer_norm(h, map.expand.norm_out.eps);
    const std::vector<double> w = oracle::softmax(oracle::row(map.map.value, n));
    for (std::size_t j = 0; j < 4; ++j) h[j] = oracle::gelu(h[j] * w[j]);
    h = oracle::layer_norm(h, map.refine.norm_out.eps);
    for (std::size_t j = 0; j < 4; ++j) expected[j] += h[j];
  }
  for (Eigen::Index j = 0; j < 4; ++j) CHECK(std::abs(z_c(j) - expected[static_cast<std::size_t>(j)]) < 1e-6);
}

TEST_CASE("spectral context matches the scalar composition on random fixtures") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    SpectralMap<double> map(3, 4, SoftmaxAxis::PerFeature, rng);
    map.map.value = fixture::random_matrix(3, 4, rng);
    const BlockStats<double> stats{fixture::random_matrix(3, 8, rng)};
    const Vector<double> z_c = spectral_context(stats, map);
    std::vector<double> expected(4, 0.0);
    for (int n = 0; n < 3; ++n) {
      std::vector<double> h = oracle::projector_row(oracle::row(stats.z_prime, n), map.expand);
      const std::vector<double> w = oracle::softmax(oracle::row(map.map.value, n));
      for (std::size_t j = 0; j < 4; ++j) h[j] *= w[j];
      h = oracle::projector_row(h, map.refine);
      for (std::size_t j = 0; j < 4; ++j) expected[j] += h[j];
    }
    for (Eigen::Index j = 0; j < 4; ++j) CHECK(std::abs(z_c(j) - expected[static_cast<std::size_t>(j)]) < 1e-6);
  }
}

TEST_CASE("permuting blocks of z' and C together leaves z_c unchanged") {
  std::mt19937_64 rng(7);
  SpectralMap<double> map(4, 6, SoftmaxAxis::PerFeature, rng);
  map.map.value = fixture::random_matrix(4, 6, rng);
  const BlockStats<double> stats{fixture::random_matrix(4, 12, rng)};
  const Vector<double> base = spectral_context(stats, map);

  Eigen::PermutationMatrix<Eigen::Dynamic> perm(4);
  perm.indices() << 2, 0, 3, 1;
  SpectralMap<double> permuted = map;
  permuted.map.value = perm * map.map.value;
  const BlockStats<double> shuffled{perm * stats.z_prime};
  CHECK((spectral_context(shuffled, permuted) - base).cwiseAbs().maxCoeff() < 1e-6);

  // Permuting only z' changes the result.
  CHECK((spectral_context(shuffled, map) - base).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("z_c gradient with respect to C matches central differences") {
  std::mt19937_64 rng(8);
  for (SoftmaxAxis axis : {SoftmaxAxis::PerFeature, SoftmaxAxis::PerBlock}) {
    SpectralMap<double> map(4, 32, axis, rng);
    map.map.value = fixture::random_matrix(4, 32, rng);
    const Matrix<double> stats = fixture::random_matrix(4, 64, rng);
    const Matrix<double> weights = fixture::random_matrix(1, 32, rng);
    auto loss = [&](Tape<double>& t) {
      Var<double> z_c = spectral_context(t, t.constant_ref(stats), map);
      return ops::sum_rows(ops::transpose(ops::mul(z_c, t.constant_ref(weights))));
    };
    CHECK(gradcheck::max_relative_error({&map.map}, loss, 20, rng) < 1e-4);
  }
}

TEST_CASE("spectral context rejects mismatched shapes") {
  std::mt19937_64 rng(9);
  SpectralMap<double> map(3, 4, SoftmaxAxis::PerFeature, rng);
  CHECK_THROWS_AS(spectral_context(BlockStats<double>{Matrix<double>::Zero(2, 8)}, map), InvalidInput);
  CHECK_THROWS_AS(spectral_context(BlockStats<double>{Matrix<double>::Zero(3, 4)}, map), InvalidInput);
}

TEST_CASE("assembling the spectral vector") {
  const SpectralVector<double> full =
      assemble_spectral_vector<double>(Vector<double>::Zero(1024), SrsSummary<double>{Vector<double>::Zero(72)}, 1024, 12);
  CHECK(full.z_s.size() == 1096);
  CHECK(full.z_s.isZero(0));

  std::mt19937_64 rng(10);
  const Vector<double> z_c = fixture::random_matrix(32, 1, rng);
  const Vector<double> z_l = fixture::random_matrix(24, 1, rng, 0.5);
  const SpectralVector<double> v = assemble_spectral_vector<double>(z_c, SrsSummary<double>{z_l}, 32, 4);
  CHECK(v.z_s.head(32) == z_c);
  CHECK(v.z_s.tail(24) == z_l);

  CHECK_THROWS_AS(assemble_spectral_vector<double>(z_c, SrsSummary<double>{z_l}, 31, 4), InvalidInput);
  CHECK_THROWS_AS(assemble_spectral_vector<double>(z_c, SrsSummary<double>{Vector<double>::Zero(23)}), InvalidInput);
  CHECK_THROWS_AS(assemble_spectral_vector<double>(z_c, SrsSummary<double>{z_l}, 32, 5), InvalidInput);
}
