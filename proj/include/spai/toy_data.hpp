#pragma once

// Desk-scale dataset: procedural occlusion ("dead leaves") images stand in for
// real photographs; generated twins get their spectrum above a radius replaced
// by the corpus-median radial magnitude profile, phase kept.

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "spai/types.hpp"

namespace spai::toy {

struct DeadLeavesOptions {
  double min_radius = 1.0;
  double max_radius = 48.0;
  int shapes = 900;
  double blur_min = 0.0;  // optical blur sigma, pixels
  double blur_max = 1.2;
  double noise_min = 0.5;  // sensor noise sigma, 0..255 scale
  double noise_max = 2.5;
  int supersample = 2;
};

ImageF dead_leaves(int side, std::mt19937_64& rng, const DeadLeavesOptions& options = {});

/// Mean DFT magnitude per integer distance from the spectral center, per channel.
struct RadialProfile {
  std::vector<std::vector<double>> channels;
};

RadialProfile radial_profile(const ImageF& image);
/// Per-bin median; profiles must come from images of one size.
RadialProfile median_profile(const std::vector<RadialProfile>& profiles);

/// Replaces the magnitude of every coefficient at distance >= `radius` by the
/// profile value of its bin. The result is clipped to [0, 1].
ImageF flatten_spectrum(const ImageF& image, const RadialProfile& profile, double radius);

struct DatasetOptions {
  int pairs = 1000;           // real images, each with one generated twin
  int pretext_images = 128;   // separate real images for backbone pretraining
  int side = 128;
  double flatten_radius = 16.0;
  std::array<double, 2> sharp_blur{0.0, 0.3};  // optical blur sigma ranges of the two real sources
  std::array<double, 2> soft_blur{1.3, 1.8};
  double val_fraction = 0.2;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct DatasetLayout {
  std::filesystem::path root;
  std::filesystem::path pretext_dir;
  std::filesystem::path train_manifest;
  std::filesystem::path val_manifest;
  std::filesystem::path test_manifest;
};

/// Writes PNGs and CSV manifests below `root`. Twins share a split. Real
/// images are tagged "leaves-sharp" or "leaves-soft" by their blur level;
/// generated ones "flattened".
DatasetLayout write_dataset(const std::filesystem::path& root, const DatasetOptions& options);

}  // namespace spai::toy
