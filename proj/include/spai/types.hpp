#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace spai {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using ComplexMatrix = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;

// Error taxonomy. Every failure surfaced by the library is one of these.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidInput : Error {
  using Error::Error;
};
struct SymmetryViolation : Error {
  using Error::Error;
};
struct CheckpointIncompatible : Error {
  using Error::Error;
};
struct NotFound : Error {
  using Error::Error;
};
struct InvalidDataset : Error {
  using Error::Error;
};
struct UndefinedMetric : Error {
  using Error::Error;
};

/// Planar multi-channel image. Pixel values are nominally in [0, 1].
template <typename Scalar>
struct Image {
  std::vector<Matrix<Scalar>> channels;

  Image() = default;
  Image(Eigen::Index height, Eigen::Index width, int channel_count, Scalar fill = Scalar(0))
      : channels(static_cast<std::size_t>(channel_count), Matrix<Scalar>::Constant(height, width, fill)) {}
  explicit Image(std::vector<Matrix<Scalar>> planes) : channels(std::move(planes)) {
    for (const auto& c : channels) {
      if (c.rows() != channels.front().rows() || c.cols() != channels.front().cols()) {
        throw InvalidInput("image channels differ in shape");
      }
    }
  }

  Eigen::Index height() const { return channels.empty() ? 0 : channels.front().rows(); }
  Eigen::Index width() const { return channels.empty() ? 0 : channels.front().cols(); }
  int channel_count() const { return static_cast<int>(channels.size()); }
  bool empty() const { return channels.empty() || height() == 0 || width() == 0; }

  Matrix<Scalar>& operator[](int c) { return channels[static_cast<std::size_t>(c)]; }
  const Matrix<Scalar>& operator[](int c) const { return channels[static_cast<std::size_t>(c)]; }

  bool all_finite() const {
    for (const auto& c : channels) {
      if (!c.allFinite()) return false;
    }
    return true;
  }

  template <typename Other>
  Image<Other> cast() const {
    Image<Other> out;
    out.channels.reserve(channels.size());
    for (const auto& c : channels) out.channels.push_back(c.template cast<Other>());
    return out;
  }

  /// Sub-rectangle of every channel.
  Image crop(Eigen::Index top, Eigen::Index left, Eigen::Index h, Eigen::Index w) const {
    if (top < 0 || left < 0 || top + h > height() || left + w > width()) {
      throw InvalidInput("crop rectangle out of bounds");
    }
    Image out;
    out.channels.reserve(channels.size());
    for (const auto& c : channels) out.channels.emplace_back(c.block(top, left, h, w));
    return out;
  }

  friend Image operator+(const Image& a, const Image& b) {
    if (a.channel_count() != b.channel_count() || a.height() != b.height() || a.width() != b.width()) {
      throw InvalidInput("image shape mismatch");
    }
    Image out = a;
    for (int c = 0; c < a.channel_count(); ++c) out[c] += b[c];
    return out;
  }
};

using ImageF = Image<float>;
using ImageD = Image<double>;

}  // namespace spai
