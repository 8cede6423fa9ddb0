#include "spai/augment.hpp"

#include <algorithm>
#include <cmath>

#include "spai/imaging.hpp"
#include "spai/sca.hpp"

namespace spai {

namespace {

ImageF pad_to(const ImageF& image, int side) {
  if (image.height() >= side && image.width() >= side) return image;
  ImageF out = image;
  for (auto& c : out.channels) {
    c = detail::reflect_pad(c, std::max<Eigen::Index>(image.height(), side),
                            std::max<Eigen::Index>(image.width(), side));
  }
  return out;
}

ImageF one_view(const ImageF& source, const AugmentationPolicy& policy, int side, std::mt19937_64& rng) {
  std::bernoulli_distribution fires(policy.probability);
  ImageF image = source;

  if (policy.resize && fires(rng)) {
    const double s = std::uniform_real_distribution<double>(policy.resize_min, policy.resize_max)(rng);
    const int h = std::max(1, static_cast<int>(std::floor(static_cast<double>(image.height()) * s)));
    const int w = std::max(1, static_cast<int>(std::floor(static_cast<double>(image.width()) * s)));
    image = imaging::resize_bilinear(image, h, w);
  }
  if (policy.rotate && fires(rng)) {
    const double a = policy.rotate_max_degrees;
    image = imaging::rotate(image, std::uniform_real_distribution<double>(-a, a)(rng));
  }

  image = pad_to(image, side);
  if (policy.crop) {
    const auto top = std::uniform_int_distribution<Eigen::Index>(0, image.height() - side)(rng);
    const auto left = std::uniform_int_distribution<Eigen::Index>(0, image.width() - side)(rng);
    image = image.crop(top, left, side, side);
  } else {
    image = center_crop(image, side);
  }

  if (policy.blur && fires(rng)) {
    const double sigma = std::uniform_real_distribution<double>(policy.blur_sigma_min, policy.blur_sigma_max)(rng);
    image = imaging::gaussian_blur(image, 2 * static_cast<int>(std::ceil(3.0 * sigma)) + 1, sigma);
  }
  if (policy.noise && fires(rng)) {
    const double sigma =
        std::uniform_real_distribution<double>(policy.noise_sigma_min, policy.noise_sigma_max)(rng) / 255.0;
    std::normal_distribution<double> noise(0.0, sigma);
    for (auto& c : image.channels) {
      for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] += static_cast<float>(noise(rng));
    }
    image = imaging::clip01(image);
  }
  if (policy.jpeg && fires(rng)) {
    const int q = std::uniform_int_distribution<int>(policy.jpeg_quality_min, policy.jpeg_quality_max)(rng);
    image = imaging::codec_roundtrip(image, ".jpg", q);
  }
  return image;
}

}  // namespace

ImageF center_crop(const ImageF& image, int side) {
  const ImageF padded = pad_to(image, side);
  return padded.crop((padded.height() - side) / 2, (padded.width() - side) / 2, side, side);
}

std::vector<ImageF> augment_views(const ImageF& image, const AugmentationPolicy& policy, int views, int side,
                                  std::mt19937_64& rng) {
  if (views < 1) throw InvalidInput("augment_views: need at least one view");
  if (side < 1) throw InvalidInput("augment_views: view side must be positive");
  if (image.empty()) throw InvalidInput("augment_views: empty image");
  std::vector<ImageF> out;
  out.reserve(static_cast<std::size_t>(views));
  for (int k = 0; k < views; ++k) out.push_back(one_view(image, policy, side, rng));
  return out;
}

}  // namespace spai
