#include "spai/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "spai/augment.hpp"
#include "spai/imaging.hpp"
#include "spai/optim.hpp"

namespace spai {

void to_json(nlohmann::json& j, const PretrainConfig& c) {
  j = {{"steps", c.steps},
       {"batch_size", c.batch_size},
       {"lr", c.lr},
       {"min_lr", c.min_lr},
       {"warmup_steps", c.warmup_steps},
       {"weight_decay", c.weight_decay},
       {"grad_clip", c.grad_clip},
       {"radius", c.radius},
       {"p_low", c.p_low},
       {"alpha", c.alpha},
       {"masked_band_only", c.masked_band_only},
       {"min_images", c.min_images},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PretrainConfig& c) {
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.min_lr = j.value("min_lr", c.min_lr);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.radius = j.value("radius", c.radius);
  c.p_low = j.value("p_low", c.p_low);
  c.alpha = j.value("alpha", c.alpha);
  c.masked_band_only = j.value("masked_band_only", c.masked_band_only);
  c.min_images = j.value("min_images", c.min_images);
  c.seed = j.value("seed", c.seed);
}

std::vector<ImageF> load_pretext_corpus(const std::filesystem::path& dir, int side, int min_images) {
  std::vector<ImageF> corpus;
  for (const auto& path : imaging::list_images(dir)) {
    corpus.push_back(center_crop(imaging::ensure_rgb(imaging::read_image(path)), side));
  }
  if (static_cast<int>(corpus.size()) < min_images) {
    throw InvalidDataset("pretext corpus '" + dir.string() + "' has " + std::to_string(corpus.size()) +
                         " images, at least " + std::to_string(min_images) + " required");
  }
  return corpus;
}

namespace {

double pretrain_lr(int step, const PretrainConfig& c) {
  if (step < c.warmup_steps) return c.lr * static_cast<double>(step + 1) / static_cast<double>(c.warmup_steps);
  const int span = std::max(1, c.steps - 1 - c.warmup_steps);
  const double t = std::min(1.0, static_cast<double>(step - c.warmup_steps) / span);
  return c.min_lr + 0.5 * (c.lr - c.min_lr) * (1.0 + std::cos(M_PI * t));
}

PretextObjective objective_of(const PretrainConfig& c) { return {c.alpha, c.masked_band_only}; }

}  // namespace

std::vector<double> pretrain(VisionTransformer<float>& model, const std::vector<ImageF>& corpus,
                             const PretrainConfig& config, const std::function<void(int, double)>& on_step) {
  if (corpus.empty()) throw InvalidDataset("pretrain: empty corpus");
  if (model.frozen()) throw InvalidInput("pretrain: model is frozen");
  if (config.steps < 1 || config.batch_size < 1) throw InvalidInput("pretrain: steps and batch size must be positive");
  ParameterList<float> params = model.parameters();
  AdamW<float> optimizer(params, config.weight_decay);
  std::mt19937_64 rng(config.seed);
  // Shuffled passes over the corpus; a new permutation starts when one runs out.
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t next = order.size();
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(config.steps));
  for (int step = 0; step < config.steps; ++step) {
    optimizer.zero_grad();
    double total = 0.0;
    for (int b = 0; b < config.batch_size; ++b) {
      if (next == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        next = 0;
      }
      total += model.pretext_step(corpus[order[next++]], config.radius, config.p_low, rng, objective_of(config));
    }
    const auto scale = 1.0f / static_cast<float>(config.batch_size);
    for (auto* p : params) p->grad *= scale;
    clip_grad_norm(params, config.grad_clip);
    optimizer.step(pretrain_lr(step, config));
    losses.push_back(total / config.batch_size);
    if (on_step) on_step(step, losses.back());
  }
  return losses;
}

double pretext_loss(const VisionTransformer<float>& model, const std::vector<ImageF>& images,
                    const PretrainConfig& config, std::uint64_t seed) {
  if (images.empty()) throw InvalidInput("pretext_loss: no images");
  std::mt19937_64 rng(seed);
  double total = 0.0;
  for (const auto& image : images) {
    total += model.pretext_loss(image, config.radius, config.p_low, rng, objective_of(config));
  }
  return total / static_cast<double>(images.size());
}

}  // namespace spai
