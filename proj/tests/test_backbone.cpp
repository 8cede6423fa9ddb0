#include <doctest.h>

#include <fstream>
#include <numeric>

#include "fixtures.hpp"
#include "spai/backbone.hpp"
#include "spai/pretrain.hpp"
#include "spai/toy_data.hpp"

using namespace spai;

namespace {

BackboneConfig tiny_config() {
  BackboneConfig c = BackboneConfig::toy();
  c.input_side = 8;
  c.patch_pixels = 4;
  c.depth = 2;
  c.embed_dim = 8;
  c.heads = 2;
  return c;
}

std::vector<ImageF> leaves_corpus(int count, int side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  toy::DeadLeavesOptions opts;
  opts.max_radius = side / 3.0;
  opts.shapes = 200;
  std::vector<ImageF> out;
  for (int i = 0; i < count; ++i) out.push_back(toy::dead_leaves(side, rng, opts));
  return out;
}

// Loss of the plain encode/decode path: no masking at all.
double round_trip_loss(const VisionTransformer<float>& model, const std::vector<ImageF>& images) {
  double total = 0;
  for (const auto& image : images) {
    const auto blocks = model.encode(image);
    const ImageF out = model.decode_head(blocks.per_block.back());
    total += frequency_distance(normalize_image(image, model.config()), out);
  }
  return total / static_cast<double>(images.size());
}

}  // namespace

TEST_CASE("token counts for the production and toy configs") {
  CHECK(BackboneConfig::production().token_count() == 196);
  CHECK(BackboneConfig::toy().token_count() == 64);

  VisionTransformer<float> toy(BackboneConfig::toy(), 1);
  std::mt19937_64 rng(1);
  const auto tokens = toy.tokenize(fixture::random_image(32, 32, 3, rng));
  CHECK(tokens.tokens.rows() == 64);
  CHECK(tokens.tokens.cols() == 64);
}

TEST_CASE("tokenize rejects a patch of the wrong size") {
  VisionTransformer<float> toy(BackboneConfig::toy(), 1);
  std::mt19937_64 rng(2);
  CHECK_THROWS_AS(toy.tokenize(fixture::random_image(30, 32, 3, rng)), InvalidInput);
  CHECK_THROWS_AS(toy.encode(fixture::random_image(32, 32, 1, rng)), InvalidInput);
  ImageF bad = fixture::random_image(32, 32, 3, rng);
  bad[1](3, 3) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(toy.encode(bad), InvalidInput);
}

TEST_CASE("encode_blocks returns every block and is deterministic") {
  VisionTransformer<float> toy(BackboneConfig::toy(), 3);
  std::mt19937_64 rng(3);
  const ImageF patch = fixture::random_image(32, 32, 3, rng);
  const auto a = toy.encode(patch);
  const auto b = toy.encode_blocks(toy.tokenize(patch));
  REQUIRE(a.depth() == 4);
  for (int n = 0; n < 4; ++n) {
    CHECK(a.per_block[static_cast<std::size_t>(n)].rows() == 64);
    CHECK(a.per_block[static_cast<std::size_t>(n)].cols() == 64);
    CHECK(a.per_block[static_cast<std::size_t>(n)] == b.per_block[static_cast<std::size_t>(n)]);
  }
  CHECK(toy.encode(patch).per_block.back() == a.per_block.back());
  // Blocks differ from each other, so they really are intermediate outputs.
  CHECK_FALSE(a.per_block[0] == a.per_block[3]);
}

TEST_CASE("without positional encoding, swapping two tokens swaps their outputs") {
  BackboneConfig config = BackboneConfig::toy();
  config.positional_encoding = false;
  VisionTransformer<double> model(config, 4);
  std::mt19937_64 rng(4);
  const auto tokens = model.tokenize(fixture::random_image<double>(32, 32, 3, rng));
  TokenSequence<double> swapped = tokens;
  swapped.tokens.row(5).swap(swapped.tokens.row(40));
  const auto a = model.encode_blocks(tokens);
  const auto b = model.encode_blocks(swapped);
  for (int n = 0; n < config.depth; ++n) {
    Matrix<double> expected = a.per_block[static_cast<std::size_t>(n)];
    expected.row(5).swap(expected.row(40));
    CHECK((b.per_block[static_cast<std::size_t>(n)] - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("decode_head shape and zero head") {
  VisionTransformer<float> toy(BackboneConfig::toy(), 5);
  const ImageF out = toy.decode_head(Matrix<float>::Random(64, 64));
  CHECK(out.height() == 32);
  CHECK(out.width() == 32);
  CHECK(out.channel_count() == 3);

  toy.head().weight.value.setZero();
  toy.head().bias.value.setZero();
  const ImageF zero = toy.decode_head(Matrix<float>::Zero(64, 64));
  for (int c = 0; c < 3; ++c) CHECK(zero[c].isZero(0));
  CHECK_THROWS_AS(toy.decode_head(Matrix<float>::Zero(63, 64)), InvalidInput);
}

TEST_CASE("patch extraction and folding are inverse") {
  std::mt19937_64 rng(6);
  const ImageF image = fixture::random_image(32, 32, 3, rng);
  const Matrix<float> tokens = extract_patches(image, 4);
  CHECK(tokens.rows() == 64);
  CHECK(tokens.cols() == 48);
  CHECK(tokens(9, 16 + 4 * 2 + 3) == image[1](4 + 2, 4 + 3));
  const ImageF back = fold_patches(tokens, 32, 4, 3);
  for (int c = 0; c < 3; ++c) CHECK(back[c] == image[c]);
}

TEST_CASE("pretext loss is finite and positive at initialization") {
  VisionTransformer<float> toy(BackboneConfig::toy(), 7);
  std::mt19937_64 rng(7);
  const ImageF image = fixture::random_image(32, 32, 3, rng);
  const float loss = toy.pretext_step(image, 4.0, 0.5, rng);
  CHECK(std::isfinite(loss));
  CHECK(loss > 0.0f);
  CHECK_THROWS_AS(toy.pretext_step(fixture::random_image(16, 16, 3, rng), 4.0, 0.5, rng), InvalidInput);
}

TEST_CASE("radius 0 with p_low 0 is plain autoencoding") {
  VisionTransformer<double> model(BackboneConfig::toy(), 8);
  std::mt19937_64 rng(8);
  const ImageD image = fixture::random_image<double>(32, 32, 3, rng);
  const double pretext = model.pretext_loss(image, 0.0, 0.0, rng);
  const ImageD out = model.decode_head(model.encode(image).per_block.back());
  const double plain = frequency_distance(normalize_image(image, model.config()), out);
  CHECK(pretext == doctest::Approx(plain).epsilon(1e-10));
}

TEST_CASE("pretext head gradients match central differences") {
  VisionTransformer<double> model(BackboneConfig::toy(), 9);
  std::mt19937_64 rng(9);
  const ImageD image = fixture::random_image<double>(32, 32, 3, rng);
  for (auto* p : model.parameters()) p->zero_grad();
  constexpr std::uint64_t draw = 99;
  {
    std::mt19937_64 r(draw);
    model.pretext_step(image, 4.0, 0.5, r);
  }
  auto loss = [&] {
    std::mt19937_64 r(draw);
    return model.pretext_loss(image, 4.0, 0.5, r);
  };
  auto params = model.head_parameters();
  double worst = 0;
  for (int s = 0; s < 20; ++s) {
    Parameter<double>& p = *params[static_cast<std::size_t>(s % 2)];
    const auto i = std::uniform_int_distribution<Eigen::Index>(0, p.value.size() - 1)(rng);
    const double keep = p.value.data()[i];
    p.value.data()[i] = keep + 1e-4;
    const double up = loss();
    p.value.data()[i] = keep - 1e-4;
    const double down = loss();
    p.value.data()[i] = keep;
    const double numeric = (up - down) / 2e-4;
    const double analytic = p.grad.data()[i];
    worst = std::max(worst, std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-8}));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("pretext encoder gradients match central differences") {
  VisionTransformer<double> model(tiny_config(), 10);
  std::mt19937_64 rng(10);
  const ImageD image = fixture::random_image<double>(8, 8, 3, rng);
  for (auto* p : model.parameters()) p->zero_grad();
  {
    std::mt19937_64 r(5);
    model.pretext_step(image, 1.5, 1.0, r);
  }
  auto params = model.encoder_parameters();
  double worst = 0;
  for (int s = 0; s < 30; ++s) {
    Parameter<double>& p = *params[std::uniform_int_distribution<std::size_t>(0, params.size() - 1)(rng)];
    const auto i = std::uniform_int_distribution<Eigen::Index>(0, p.value.size() - 1)(rng);
    const double keep = p.value.data()[i];
    std::mt19937_64 r1(5), r2(5);
    p.value.data()[i] = keep + 1e-4;
    const double up = model.pretext_loss(image, 1.5, 1.0, r1);
    p.value.data()[i] = keep - 1e-4;
    const double down = model.pretext_loss(image, 1.5, 1.0, r2);
    p.value.data()[i] = keep;
    const double numeric = (up - down) / 2e-4;
    const double analytic = p.grad.data()[i];
    worst = std::max(worst, std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6}));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("checkpoint round trip is bit-identical") {
  fixture::TempDir dir("backbone");
  VisionTransformer<float> toy(BackboneConfig::toy(), 11);
  toy.save(dir / "b.spai");
  const auto loaded = load_pretrained<float>(dir / "b.spai", BackboneConfig::toy());
  CHECK(loaded.frozen());
  CHECK(loaded.digest() == toy.digest());
  std::mt19937_64 rng(11);
  const ImageF patch = fixture::random_image(32, 32, 3, rng);
  const auto a = toy.encode(patch), b = loaded.encode(patch);
  for (std::size_t n = 0; n < a.per_block.size(); ++n) CHECK(a.per_block[n] == b.per_block[n]);
}

TEST_CASE("checkpoint loading errors") {
  fixture::TempDir dir("backbone-bad");
  CHECK_THROWS_AS(load_pretrained<float>(dir / "missing.spai"), NotFound);

  {
    std::ofstream out(dir / "junk.spai", std::ios::binary);
    out << "not a checkpoint at all";
  }
  CHECK_THROWS_AS(load_pretrained<float>(dir / "junk.spai"), CheckpointIncompatible);

  VisionTransformer<float> toy(BackboneConfig::toy(), 12);
  toy.save(dir / "b.spai");
  CHECK_THROWS_AS(load_pretrained<float>(dir / "b.spai", BackboneConfig::production()), CheckpointIncompatible);

  // Truncated payload.
  const auto size = std::filesystem::file_size(dir / "b.spai");
  std::filesystem::resize_file(dir / "b.spai", size - 100);
  CHECK_THROWS_AS(load_pretrained<float>(dir / "b.spai"), CheckpointIncompatible);
}

TEST_CASE("200 pretext steps on 64 images: smoothed loss decreases") {
  VisionTransformer<float> model(BackboneConfig::toy(), 13);
  const auto corpus = leaves_corpus(64, 32, 13);
  PretrainConfig config;
  config.steps = 200;
  config.seed = 13;
  const std::vector<double> losses = pretrain(model, corpus, config);
  REQUIRE(losses.size() == 200);
  std::vector<double> smooth;
  for (std::size_t i = 0; i + 20 <= losses.size(); i += 20) {
    smooth.push_back(std::accumulate(losses.begin() + static_cast<long>(i), losses.begin() + static_cast<long>(i) + 20, 0.0) / 20);
  }
  for (std::size_t i = 1; i < smooth.size(); ++i) CHECK(smooth[i] < smooth[i - 1]);
}

TEST_CASE("toy pretext training lowers the round-trip loss at least fivefold") {
  VisionTransformer<float> model(BackboneConfig::toy(), 14);
  const auto corpus = leaves_corpus(128, 32, 14);
  const auto held_out = leaves_corpus(32, 32, 15);
  const double before = round_trip_loss(model, held_out);
  PretrainConfig config;
  config.seed = 14;
  pretrain(model, corpus, config);
  const double after = round_trip_loss(model, held_out);
  MESSAGE("round-trip loss " << before << " -> " << after);
  CHECK(after * 5.0 <= before);
}
