#include <doctest.h>

#include "fixtures.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "spai/srs.hpp"

using namespace spai;

namespace {

BlockFeatures<double> random_blocks(int depth, Eigen::Index tokens, Eigen::Index dim, std::mt19937_64& rng) {
  BlockFeatures<double> out;
  for (int n = 0; n < depth; ++n) out.per_block.push_back(fixture::random_matrix(tokens, dim, rng));
  return out;
}

std::vector<double> oracle_srs(const Matrix<double>& a, const Matrix<double>& b) {
  std::vector<double> out;
  for (Eigen::Index r = 0; r < a.rows(); ++r) out.push_back(oracle::cosine(oracle::row(a, r), oracle::row(b, r), kSrsEps));
  return out;
}

}  // namespace

TEST_CASE("projection operators map every block to D features") {
  std::mt19937_64 rng(1);
  auto ops_list = make_projection_operators<double>(4, 64, 32, 32, rng);
  const auto blocks = random_blocks(4, 64, 64, rng);
  const auto out = project_features(blocks, ops_list);
  REQUIRE(out.size() == 4);
  for (const auto& m : out) {
    CHECK(m.rows() == 64);
    CHECK(m.cols() == 32);
    CHECK(m.allFinite());
  }
  CHECK(project_features(blocks, ops_list)[2] == out[2]);

  auto wrong = random_blocks(3, 64, 64, rng);
  CHECK_THROWS_AS(project_features(wrong, ops_list), InvalidInput);
  auto narrow = random_blocks(4, 64, 60, rng);
  CHECK_THROWS_AS(project_features(narrow, ops_list), InvalidInput);
}

TEST_CASE("block n goes through operator n only") {
  std::mt19937_64 rng(2);
  auto ops_list = make_projection_operators<double>(3, 8, 8, 8, rng);
  auto blocks = random_blocks(3, 5, 8, rng);
  const auto before = project_features(blocks, ops_list);
  ops_list[1].fc2.bias.value.array() += 1.0;
  const auto after = project_features(blocks, ops_list);
  CHECK(after[0] == before[0]);
  CHECK_FALSE(after[1] == before[1]);
  CHECK(after[2] == before[2]);
}

TEST_CASE("identity linears reduce a projection to layer norm, GELU, layer norm") {
  std::mt19937_64 rng(3);
  auto ops_list = make_projection_operators<double>(1, 6, 6, 6, rng);
  auto& p = ops_list[0];
  p.fc1.weight.value = Matrix<double>::Identity(6, 6);
  p.fc2.weight.value = Matrix<double>::Identity(6, 6);
  p.fc1.bias.value.setZero();
  p.fc2.bias.value.setZero();
  BlockFeatures<double> blocks{{fixture::random_matrix(7, 6, rng, 3.0)}};
  const Matrix<double> out = project_features(blocks, ops_list)[0];
  for (Eigen::Index r = 0; r < 7; ++r) {
    std::vector<double> x = oracle::layer_norm(oracle::row(blocks.per_block[0], r), p.norm_in.eps);
    for (double& v : x) v = oracle::gelu(v);
    x = oracle::layer_norm(x, p.norm_out.eps);
    for (Eigen::Index c = 0; c < 6; ++c) CHECK(out(r, c) == doctest::Approx(x[static_cast<std::size_t>(c)]).epsilon(1e-6));
  }
}

TEST_CASE("srs examples") {
  std::mt19937_64 rng(4);
  const Matrix<double> z = fixture::random_matrix(6, 5, rng);
  CHECK((srs<double>(z, z).array() - 1.0).abs().maxCoeff() < 1e-6);
  CHECK((srs<double>(z, -z).array() + 1.0).abs().maxCoeff() < 1e-6);

  Matrix<double> a(2, 2), b(2, 2);
  a << 1, 0, 0, 1;
  b << 0, 1, 1, 0;
  CHECK(srs<double>(a, b).isZero(0));

  Matrix<double> zero_row = z;
  zero_row.row(2).setZero();
  const Vector<double> s = srs<double>(zero_row, z);
  CHECK(s(2) == 0.0);
  CHECK(s.allFinite());
  CHECK_THROWS_AS(srs<double>(z, Matrix<double>::Zero(6, 4)), InvalidInput);
}

TEST_CASE("srs_triplet examples") {
  std::mt19937_64 rng(5);
  const Matrix<double> z = fixture::random_matrix(8, 16, rng);
  auto same = srs_triplet<double>(z, z, z);
  for (const Vector<double>* v : {&same.omega_ol, &same.omega_oh, &same.omega_lh}) {
    CHECK((v->array() - 1.0).abs().maxCoeff() < 1e-6);
  }
  auto flipped = srs_triplet<double>(z, z, -z);
  CHECK((flipped.omega_ol.array() - 1.0).abs().maxCoeff() < 1e-6);
  CHECK((flipped.omega_oh.array() + 1.0).abs().maxCoeff() < 1e-6);
  CHECK((flipped.omega_lh.array() + 1.0).abs().maxCoeff() < 1e-6);
}

TEST_CASE("srs_triplet matches a scalar cosine loop on random fixtures") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix<double> o = fixture::random_matrix(8, 16, rng), l = fixture::random_matrix(8, 16, rng),
                         h = fixture::random_matrix(8, 16, rng);
    const auto t = srs_triplet<double>(o, l, h);
    const auto ol = oracle_srs(o, l), oh = oracle_srs(o, h), lh = oracle_srs(l, h);
    for (Eigen::Index r = 0; r < 8; ++r) {
      const auto i = static_cast<std::size_t>(r);
      CHECK(std::abs(t.omega_ol(r) - ol[i]) < 1e-6);
      CHECK(std::abs(t.omega_oh(r) - oh[i]) < 1e-6);
      CHECK(std::abs(t.omega_lh(r) - lh[i]) < 1e-6);
    }
  }
}

TEST_CASE("srs is scale invariant, symmetric and bounded") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> positive(0.01, 100.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix<double> a = fixture::random_matrix(10, 12, rng), b = fixture::random_matrix(10, 12, rng);
    const double sa = positive(rng), sb = positive(rng);
    const Matrix<double> as = sa * a, bs = sb * b;
    CHECK((srs<double>(as, bs) - srs<double>(a, b)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(srs<double>(a, b) == srs<double>(b, a));
    const Vector<double> s = srs<double>(a, b);
    CHECK(s.maxCoeff() <= 1.0);
    CHECK(s.minCoeff() >= -1.0);
  }
  // Nearly parallel float rows still stay inside [-1, 1].
  Matrix<float> x = Matrix<float>::Constant(3, 64, 0.3f);
  CHECK(srs<float>(x, x).maxCoeff() <= 1.0f);
  CHECK(srs<float>(x, -x).minCoeff() >= -1.0f);
}

TEST_CASE("pool_srs examples") {
  const Vector<double> c = Vector<double>::Constant(9, 0.25);
  const SrsSummary<double> constant = pool_srs<double>({{c, c, c}, {c, c, c}});
  REQUIRE(constant.z_lambda.size() == 12);
  for (Eigen::Index i = 0; i < 12; ++i) CHECK(constant.z_lambda(i) == (i % 2 == 0 ? 0.25 : 0.0));

  std::vector<SrsTriplet<double>> twelve(12, SrsTriplet<double>{c, c, c});
  CHECK(pool_srs(twelve).z_lambda.size() == 72);

  CHECK_THROWS_AS(pool_srs<double>({}), InvalidInput);
  CHECK_THROWS_AS(pool_srs<double>({{c, c, Vector<double>::Zero(3)}}), InvalidInput);
}

TEST_CASE("pool_srs matches mean and population std in the documented order") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<SrsTriplet<double>> triplets;
    for (int n = 0; n < 3; ++n) {
      SrsTriplet<double> t{Vector<double>(5), Vector<double>(5), Vector<double>(5)};
      for (Vector<double>* v : {&t.omega_ol, &t.omega_oh, &t.omega_lh})
        for (Eigen::Index i = 0; i < 5; ++i) (*v)(i) = unit(rng);
      triplets.push_back(t);
    }
    const SrsSummary<double> s = pool_srs(triplets);
    Eigen::Index at = 0;
    for (const auto& t : triplets) {
      for (const Vector<double>* v : {&t.omega_ol, &t.omega_oh, &t.omega_lh}) {
        const std::vector<double> values(v->data(), v->data() + v->size());
        CHECK(std::abs(s.z_lambda(at++) - oracle::mean(values)) < 1e-7);
        CHECK(std::abs(s.z_lambda(at++) - oracle::population_std(values)) < 1e-7);
      }
    }
    CHECK(s.z_lambda.maxCoeff() <= 1.0);
    CHECK(s.z_lambda.minCoeff() >= -1.0);
  }
}

TEST_CASE("tape block summary equals pool_srs of srs_triplet") {
  std::mt19937_64 rng(9);
  const Matrix<double> o = fixture::random_matrix(11, 7, rng), l = fixture::random_matrix(11, 7, rng),
                       h = fixture::random_matrix(11, 7, rng);
  Tape<double> tape(false);
  const Matrix<double> summary =
      srs_block_summary(tape.constant_ref(o), tape.constant_ref(l), tape.constant_ref(h)).value();
  const SrsSummary<double> pooled = pool_srs<double>({srs_triplet<double>(o, l, h)});
  REQUIRE(summary.cols() == 6);
  for (Eigen::Index i = 0; i < 6; ++i) CHECK(summary(0, i) == doctest::Approx(pooled.z_lambda(i)).epsilon(1e-12));
}

TEST_CASE("summaries survive a JSON round trip bit for bit") {
  std::mt19937_64 rng(10);
  std::vector<SrsTriplet<float>> triplets;
  for (int n = 0; n < 4; ++n) {
    const Matrix<float> a = fixture::random_matrix<float>(16, 8, rng), b = fixture::random_matrix<float>(16, 8, rng);
    triplets.push_back(srs_triplet<float>(a, b, -a));
  }
  const SrsSummary<float> s = pool_srs(triplets);
  const nlohmann::json j = std::vector<float>(s.z_lambda.data(), s.z_lambda.data() + s.z_lambda.size());
  const auto back = nlohmann::json::parse(j.dump()).get<std::vector<float>>();
  REQUIRE(back.size() == 24);
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] == s.z_lambda(static_cast<Eigen::Index>(i)));
}
