#pragma once

// Image file I/O and the resampling/codec primitives shared by augmentation
// and perturbation. Images are RGB (or single-channel) with values in [0, 1].

#include <filesystem>
#include <string>
#include <vector>

#include "spai/types.hpp"

namespace spai::imaging {

/// Decodes any format OpenCV understands into RGB floats in [0, 1].
ImageF read_image(const std::filesystem::path& path);

/// Writes an 8-bit PNG (values clipped to [0, 1]).
void write_png(const std::filesystem::path& path, const ImageF& image);

/// Lossy round trip through an in-memory codec. `extension` is ".jpg" or ".webp".
/// `encoded_bytes`, when non-null, receives the compressed size.
ImageF codec_roundtrip(const ImageF& image, const std::string& extension, int quality,
                       std::size_t* encoded_bytes = nullptr);

/// Size of the lossless PNG encoding, for comparisons with lossy codecs.
std::size_t png_size(const ImageF& image);

ImageF resize_bilinear(const ImageF& image, int height, int width);
ImageF gaussian_blur(const ImageF& image, int kernel, double sigma);
/// Rotation about the center, reflecting at the borders; output keeps the input size.
ImageF rotate(const ImageF& image, double degrees);
ImageF clip01(const ImageF& image);
/// Rounds to the 8-bit grid, as a file save would.
ImageF quantize8(const ImageF& image);

/// Gray images become RGB by replication; RGBA loses alpha.
ImageF ensure_rgb(const ImageF& image);

bool has_image_extension(const std::filesystem::path& path);
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace spai::imaging
