#include <doctest.h>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "spai/nn.hpp"
#include "spai/optim.hpp"

using namespace spai;

namespace {

Parameter<double> param(const std::string& name, Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  return {name, fixture::random_matrix(r, c, rng), {}, true};
}

// Weighted sum so every output coordinate contributes a distinct gradient.
Var<double> reduce(Tape<double>& tape, const Var<double>& v, const Matrix<double>& weights) {
  return ops::sum_rows(ops::transpose(ops::sum_rows(ops::mul(v, tape.constant_ref(weights)))));
}

}  // namespace

TEST_CASE("elementwise and matrix op gradients") {
  std::mt19937_64 rng(1);
  auto a = param("a", 4, 5, rng), b = param("b", 5, 3, rng), c = param("c", 4, 5, rng), r = param("r", 1, 5, rng);
  const Matrix<double> w43 = fixture::random_matrix(4, 3, rng), w45 = fixture::random_matrix(4, 5, rng);
  const Matrix<double> w44 = fixture::random_matrix(4, 4, rng);
  std::vector<Parameter<double>*> all{&a, &b, &c, &r};

  CHECK(gradcheck::max_relative_error(all, [&](Tape<double>& t) {
    return reduce(t, ops::matmul(t.parameter(a), t.parameter(b)), w43);
  }, 20, rng) < 1e-6);
  CHECK(gradcheck::max_relative_error(all, [&](Tape<double>& t) {
    return reduce(t, ops::matmul_nt(t.parameter(a), t.parameter(c)), w44);
  }, 20, rng) < 1e-6);
  CHECK(gradcheck::max_relative_error(all, [&](Tape<double>& t) {
    auto x = ops::sub(ops::mul(t.parameter(a), t.parameter(c)), ops::scale(t.parameter(c), 0.3));
    return reduce(t, ops::add_row(ops::add(x, t.parameter(a)), t.parameter(r)), w45);
  }, 20, rng) < 1e-6);
  CHECK(gradcheck::max_relative_error(all, [&](Tape<double>& t) {
    return reduce(t, ops::gelu(t.parameter(a)), w45);
  }, 20, rng) < 1e-6);
  CHECK(gradcheck::max_relative_error(all, [&](Tape<double>& t) {
    return reduce(t, ops::sigmoid(t.parameter(a)), w45);
  }, 20, rng) < 1e-6);
  CHECK(gradcheck::max_relative_error(all, [&](Tape<double>& t) {
    return reduce(t, ops::softmax_rows(t.parameter(a)), w45);
  }, 20, rng) < 1e-6);
}

TEST_CASE("normalization, pooling and similarity gradients") {
  std::mt19937_64 rng(2);
  auto x = param("x", 6, 8, rng), y = param("y", 6, 8, rng), g = param("g", 1, 8, rng), b = param("b", 1, 8, rng);
  std::vector<Parameter<double>*> all{&x, &y, &g, &b};
  const Matrix<double> w68 = fixture::random_matrix(6, 8, rng), w18 = fixture::random_matrix(1, 8, rng);
  const Matrix<double> w61 = fixture::random_matrix(6, 1, rng), w67 = fixture::random_matrix(6, 7, rng);

  CHECK(gradcheck::max_relative_error(all, [&](Tape<double>& t) {
    return reduce(t, ops::layer_norm(t.parameter(x), t.parameter(g), t.parameter(b), 1e-6), w68);
  }, 20, rng) < 1e-5);
  CHECK(gradcheck::max_relative_error(all, [&](Tape<double>& t) {
    return reduce(t, ops::mean_rows(t.parameter(x)), w18);
  }, 20, rng) < 1e-6);
  CHECK(gradcheck::max_relative_error(all, [&](Tape<double>& t) {
    return reduce(t, ops::std_rows(t.parameter(x)), w18);
  }, 20, rng) < 1e-5);
  CHECK(gradcheck::max_relative_error(all, [&](Tape<double>& t) {
    return reduce(t, ops::cosine_rows(t.parameter(x), t.parameter(y), 1e-8), w61);
  }, 20, rng) < 1e-5);
  CHECK(gradcheck::max_relative_error(all, [&](Tape<double>& t) {
    auto parts = ops::concat_cols<double>({ops::slice_cols(t.parameter(x), 2, 3), ops::slice_cols(t.parameter(y), 0, 4)});
    return reduce(t, ops::concat_rows<double>({ops::slice_rows(parts, 3, 3), ops::slice_rows(parts, 0, 3)}), w67);
  }, 20, rng) < 1e-6);
}

TEST_CASE("bce_with_logits matches the scalar formula and its gradient") {
  std::mt19937_64 rng(3);
  auto logits = param("l", 7, 1, rng);
  logits.value *= 4.0;
  Matrix<double> targets(7, 1);
  targets << 1, 0, 1, 1, 0, 0, 1;
  Tape<double> tape(false);
  const double value = ops::bce_with_logits(tape.constant_ref(logits.value), targets).value()(0, 0);
  double expected = 0;
  for (int i = 0; i < 7; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits.value(i, 0)));
    expected += oracle::bce(p, static_cast<int>(targets(i, 0)));
  }
  CHECK(value == doctest::Approx(expected / 7).epsilon(1e-12));
  CHECK(gradcheck::max_relative_error({&logits}, [&](Tape<double>& t) {
    return ops::bce_with_logits(t.parameter(logits), targets);
  }, 20, rng) < 1e-6);

  // Large logits stay finite.
  Matrix<double> extreme(2, 1);
  extreme << 800.0, -800.0;
  Matrix<double> wrong(2, 1);
  wrong << 0, 1;
  CHECK(std::isfinite(ops::bce_with_logits(tape.constant_ref(extreme), wrong).value()(0, 0)));
}

TEST_CASE("cosine rows handle zero rows and stay in range") {
  Matrix<double> a(3, 2), b(3, 2);
  a << 0, 0, 1, 0, 3, 4;
  b << 1, 1, 0, 1, -3, -4;
  Tape<double> tape(false);
  const auto v = ops::cosine_rows(tape.constant_ref(a), tape.constant_ref(b), 1e-8).value();
  CHECK(v(0, 0) == 0.0);
  CHECK(v(1, 0) == 0.0);
  CHECK(v(2, 0) == doctest::Approx(-1.0));
  CHECK(v(2, 0) >= -1.0);
}

TEST_CASE("gelu is the exact erf form") {
  for (double x : {-3.0, -0.5, 0.0, 0.7, 2.5}) CHECK(ops::gelu_value(x) == doctest::Approx(oracle::gelu(x)).epsilon(1e-14));
}

TEST_CASE("non-recording tape records nothing and const parameters stay constant") {
  std::mt19937_64 rng(4);
  auto p = param("p", 2, 2, rng);
  p.zero_grad();
  Tape<double> tape(false);
  auto y = ops::sum_rows(ops::transpose(ops::sum_rows(tape.parameter(p))));
  CHECK_FALSE(y.requires_grad());

  Tape<double> rec(true);
  const Parameter<double>& frozen = p;
  auto z = ops::sum_rows(ops::transpose(ops::sum_rows(rec.parameter(frozen))));
  rec.backward(z);
  CHECK(p.grad.isZero());
}

TEST_CASE("AdamW decays matrices only and clip_grad_norm bounds the global norm") {
  Parameter<double> m{"m", Matrix<double>::Constant(2, 2, 1.0), Matrix<double>::Zero(2, 2), true};
  Parameter<double> v{"v", Matrix<double>::Constant(1, 3, 1.0), Matrix<double>::Zero(1, 3), true};
  AdamW<double> opt({&m, &v}, 0.5);
  opt.step(0.1);
  CHECK(m.value(0, 0) == doctest::Approx(0.95));
  CHECK(v.value(0, 0) == doctest::Approx(1.0));

  m.grad.setConstant(3.0);
  v.grad.setConstant(4.0);
  const double before = clip_grad_norm<double>({&m, &v}, 1.0);
  CHECK(before == doctest::Approx(std::sqrt(4 * 9.0 + 3 * 16.0)));
  CHECK(std::sqrt(m.grad.squaredNorm() + v.grad.squaredNorm()) <= 1.0 + 1e-9);
}
