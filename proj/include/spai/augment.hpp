#pragma once

#include <random>
#include <vector>

#include "spai/configs.hpp"
#include "spai/types.hpp"

namespace spai {

/// K independent random views of `image`, each side x side. Every enabled op
/// fires with `policy.probability`; order is resize, rotate, crop, blur,
/// noise, JPEG. With everything disabled each view is the same center crop.
std::vector<ImageF> augment_views(const ImageF& image, const AugmentationPolicy& policy, int views, int side,
                                  std::mt19937_64& rng);

/// Center crop to side x side, reflect-padding axes shorter than `side`.
ImageF center_crop(const ImageF& image, int side);

}  // namespace spai
