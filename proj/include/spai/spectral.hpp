#pragma once

// Centered 2D DFT utilities, radial frequency masks and the frequency
// distance used by the masked spectral pretext task.
//
// Conventions: forward transform unnormalized, inverse scaled by 1/(H*W).
// The spectrum is shifted so that the DC coefficient sits at
// (floor(H/2), floor(W/2)).

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <random>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "spai/types.hpp"

namespace spai {

template <typename Scalar>
struct Spectrum {
  ComplexMatrix<Scalar> coefficients;

  Eigen::Index height() const { return coefficients.rows(); }
  Eigen::Index width() const { return coefficients.cols(); }
  Eigen::Index center_row() const { return height() / 2; }
  Eigen::Index center_col() const { return width() / 2; }
  const std::complex<Scalar>& dc() const { return coefficients(center_row(), center_col()); }
};

/// Binary radial mask: 0 strictly inside `radius` of the spectral center, 1 elsewhere.
struct RadialMask {
  Eigen::Index height = 0;
  Eigen::Index width = 0;
  double radius = 0.0;
  Eigen::Matrix<unsigned char, Eigen::Dynamic, Eigen::Dynamic> values;

  Eigen::Index zero_count() const {
    return values.size() - values.template cast<Eigen::Index>().sum();
  }
};

template <typename Scalar>
struct FrequencyComponents {
  Image<Scalar> low;
  Image<Scalar> high;
  double radius = 0.0;
};

namespace detail {

template <typename Scalar>
Eigen::FFT<Scalar>& fft_engine() {
  thread_local Eigen::FFT<Scalar> engine;
  return engine;
}

// In-place 1D transforms over every column, then every row.
template <typename Scalar>
void transform2(ComplexMatrix<Scalar>& data, bool inverse) {
  auto& fft = fft_engine<Scalar>();
  std::vector<std::complex<Scalar>> in, out;
  // A length-1 transform is the identity (and kissfft does not handle it).
  in.resize(static_cast<std::size_t>(data.rows()));
  for (Eigen::Index c = 0; data.rows() > 1 && c < data.cols(); ++c) {
    for (Eigen::Index r = 0; r < data.rows(); ++r) in[static_cast<std::size_t>(r)] = data(r, c);
    if (inverse) fft.inv(out, in); else fft.fwd(out, in);
    for (Eigen::Index r = 0; r < data.rows(); ++r) data(r, c) = out[static_cast<std::size_t>(r)];
  }
  in.resize(static_cast<std::size_t>(data.cols()));
  for (Eigen::Index r = 0; data.cols() > 1 && r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.cols(); ++c) in[static_cast<std::size_t>(c)] = data(r, c);
    if (inverse) fft.inv(out, in); else fft.fwd(out, in);
    for (Eigen::Index c = 0; c < data.cols(); ++c) data(r, c) = out[static_cast<std::size_t>(c)];
  }
}

// Moves frequency 0 to (floor(H/2), floor(W/2)); `undo` applies the inverse map.
template <typename Derived>
typename Derived::PlainObject shift_center(const Eigen::MatrixBase<Derived>& m, bool undo) {
  const Eigen::Index h = m.rows(), w = m.cols();
  const Eigen::Index ch = h / 2, cw = w / 2;
  typename Derived::PlainObject out(h, w);
  for (Eigen::Index c = 0; c < w; ++c) {
    for (Eigen::Index r = 0; r < h; ++r) {
      if (undo) {
        out(r, c) = m((r + ch) % h, (c + cw) % w);
      } else {
        out((r + ch) % h, (c + cw) % w) = m(r, c);
      }
    }
  }
  return out;
}

}  // namespace detail

template <typename Scalar>
Spectrum<Scalar> dft2(const Matrix<Scalar>& image) {
  if (image.rows() < 1 || image.cols() < 1) throw InvalidInput("dft2: empty image");
  if (!image.allFinite()) throw InvalidInput("dft2: non-finite pixel values");
  ComplexMatrix<Scalar> data = image.template cast<std::complex<Scalar>>();
  detail::transform2<Scalar>(data, false);
  return Spectrum<Scalar>{detail::shift_center(data, false)};
}

/// Complex inverse of a centered spectrum, without any realness check.
template <typename Scalar>
ComplexMatrix<Scalar> idft2_complex(const Spectrum<Scalar>& spectrum) {
  if (spectrum.height() < 1 || spectrum.width() < 1) throw InvalidInput("idft2: empty spectrum");
  ComplexMatrix<Scalar> data = detail::shift_center(spectrum.coefficients, true);
  detail::transform2<Scalar>(data, true);
  return data;
}

inline constexpr double kImaginaryResidueTolerance = 1e-5;

/// Imaginary residue relative to the largest real magnitude, or to
/// `reference` when that is larger (a band of an image can be ~0 everywhere).
template <typename Scalar>
double imaginary_residue(const ComplexMatrix<Scalar>& m, double reference = 0.0) {
  const double imag = static_cast<double>(m.imag().cwiseAbs().maxCoeff());
  const double real = static_cast<double>(m.real().cwiseAbs().maxCoeff());
  if (imag == 0.0) return 0.0;
  return imag / std::max({real, reference, 1e-300});
}

/// Real inverse. Throws SymmetryViolation when the imaginary residue reaches
/// the tolerance; `reference` is the magnitude scale of the source image.
template <typename Scalar>
Matrix<Scalar> idft2(const Spectrum<Scalar>& spectrum, double reference = 0.0) {
  ComplexMatrix<Scalar> data = idft2_complex(spectrum);
  if (imaginary_residue<Scalar>(data, reference) >= kImaginaryResidueTolerance) {
    throw SymmetryViolation("idft2: spectrum is not conjugate-symmetric (imaginary residue too large)");
  }
  return data.real();
}

inline RadialMask build_radial_mask(Eigen::Index height, Eigen::Index width, double radius) {
  if (height < 1 || width < 1) throw InvalidInput("build_radial_mask: dimensions must be positive");
  if (!(radius >= 0.0)) throw InvalidInput("build_radial_mask: radius must be non-negative");
  RadialMask mask{height, width, radius, {}};
  mask.values.resize(height, width);
  const double ch = static_cast<double>(height / 2), cw = static_cast<double>(width / 2);
  const double r2 = radius * radius;
  for (Eigen::Index c = 0; c < width; ++c) {
    for (Eigen::Index r = 0; r < height; ++r) {
      const double du = static_cast<double>(r) - ch, dv = static_cast<double>(c) - cw;
      mask.values(r, c) = (du * du + dv * dv < r2) ? 0 : 1;
    }
  }
  return mask;
}

template <typename Scalar>
Spectrum<Scalar> apply_mask(const Spectrum<Scalar>& spectrum, const RadialMask& mask, bool invert = false) {
  if (mask.height != spectrum.height() || mask.width != spectrum.width()) {
    throw InvalidInput("apply_mask: mask and spectrum shapes differ");
  }
  Spectrum<Scalar> out = spectrum;
  for (Eigen::Index c = 0; c < out.width(); ++c) {
    for (Eigen::Index r = 0; r < out.height(); ++r) {
      const bool keep = invert ? mask.values(r, c) == 0 : mask.values(r, c) != 0;
      if (!keep) out.coefficients(r, c) = std::complex<Scalar>(0, 0);
    }
  }
  return out;
}

/// High = inverse of (spectrum * M), low = inverse of (spectrum * (1 - M)), per channel.
template <typename Scalar>
FrequencyComponents<Scalar> split_frequency(const Image<Scalar>& image, double radius) {
  if (image.empty()) throw InvalidInput("split_frequency: empty image");
  if (!image.all_finite()) throw InvalidInput("split_frequency: non-finite pixel values");
  const RadialMask mask = build_radial_mask(image.height(), image.width(), radius);
  FrequencyComponents<Scalar> out;
  out.radius = radius;
  for (const auto& channel : image.channels) {
    const Spectrum<Scalar> spectrum = dft2(channel);
    const double scale = static_cast<double>(channel.cwiseAbs().maxCoeff());
    out.high.channels.push_back(idft2(apply_mask(spectrum, mask, false), scale));
    out.low.channels.push_back(idft2(apply_mask(spectrum, mask, true), scale));
  }
  return out;
}

/// Binomial choice between the two components: low with probability `p_low`.
template <typename Scalar, typename Rng>
const Image<Scalar>& sample_component(const FrequencyComponents<Scalar>& components, double p_low, Rng& rng) {
  if (!(p_low >= 0.0 && p_low <= 1.0)) throw InvalidInput("sample_component: p_low must lie in [0, 1]");
  std::bernoulli_distribution pick_low(p_low);
  return pick_low(rng) ? components.low : components.high;
}

struct FrequencyDistanceOptions {
  double alpha = 1.0;
  // When set, the average runs only over frequencies where the mask is 0
  // (the band inside `band_radius`) if `inside_band`, else where it is 1.
  std::optional<double> band_radius;
  bool inside_band = false;
};

namespace detail {

inline Eigen::Matrix<unsigned char, Eigen::Dynamic, Eigen::Dynamic> distance_support(
    Eigen::Index h, Eigen::Index w, const FrequencyDistanceOptions& options) {
  using Support = Eigen::Matrix<unsigned char, Eigen::Dynamic, Eigen::Dynamic>;
  if (!options.band_radius) return Support::Ones(h, w);
  const RadialMask mask = build_radial_mask(h, w, *options.band_radius);
  return options.inside_band ? Support((1 - mask.values.array()).matrix()) : mask.values;
}

}  // namespace detail

/// Mean over channels and selected frequencies of |F(x) - F(x_hat)|^alpha.
/// When `gradient` is non-null it receives d(distance)/d(x_hat).
template <typename Scalar>
Scalar frequency_distance(const Image<Scalar>& x, const Image<Scalar>& x_hat,
                          const FrequencyDistanceOptions& options = {}, Image<Scalar>* gradient = nullptr) {
  if (x.channel_count() != x_hat.channel_count() || x.height() != x_hat.height() || x.width() != x_hat.width()) {
    throw InvalidInput("frequency_distance: shape mismatch");
  }
  if (x.empty()) throw InvalidInput("frequency_distance: empty image");
  if (!(options.alpha > 0.0)) throw InvalidInput("frequency_distance: alpha must be positive");
  const auto support = detail::distance_support(x.height(), x.width(), options);
  const double selected = static_cast<double>(support.template cast<long>().sum());
  if (selected == 0.0) throw InvalidInput("frequency_distance: empty frequency support");
  const double count = selected * x.channel_count();
  const Scalar alpha = static_cast<Scalar>(options.alpha);

  double total = 0.0;
  if (gradient) gradient->channels.clear();
  for (int c = 0; c < x.channel_count(); ++c) {
    Matrix<Scalar> diff = x_hat[c] - x[c];
    Spectrum<Scalar> e = dft2(diff);
    Spectrum<Scalar> g{ComplexMatrix<Scalar>::Zero(e.height(), e.width())};
    for (Eigen::Index v = 0; v < e.width(); ++v) {
      for (Eigen::Index u = 0; u < e.height(); ++u) {
        if (!support(u, v)) continue;
        const std::complex<Scalar> coef = e.coefficients(u, v);
        const Scalar mag = std::abs(coef);
        total += std::pow(static_cast<double>(mag), options.alpha);
        if (gradient && mag > Scalar(0)) {
          g.coefficients(u, v) = coef * (alpha * std::pow(mag, alpha - Scalar(2)) / static_cast<Scalar>(count));
        }
      }
    }
    if (gradient) {
      // d/d(diff) of sum_k |E_k|^a is Re(HW * idft(a |E|^(a-2) E)); the 1/HW of idft cancels HW.
      ComplexMatrix<Scalar> back = idft2_complex(g);
      gradient->channels.push_back(back.real() * static_cast<Scalar>(e.height() * e.width()));
    }
  }
  return static_cast<Scalar>(total / count);
}

}  // namespace spai
