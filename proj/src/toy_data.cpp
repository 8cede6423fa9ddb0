#include "spai/toy_data.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>

#include <opencv2/imgproc.hpp>

#include "spai/imaging.hpp"
#include "spai/manifest.hpp"
#include "spai/spectral.hpp"

namespace spai::toy {

namespace {

// Radius with density proportional to r^-3 on [lo, hi], the scale-invariant
// law that gives dead-leaves images their power-law spectrum.
double draw_radius(double lo, double hi, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const double a = 1.0 / (lo * lo), b = 1.0 / (hi * hi);
  return 1.0 / std::sqrt(a - u * (a - b));
}

cv::Scalar draw_color(const cv::Vec3d& palette, std::mt19937_64& rng) {
  std::normal_distribution<double> jitter(0.0, 0.18);
  std::uniform_real_distribution<double> brightness(0.15, 1.0);
  const double v = brightness(rng);
  cv::Scalar c;
  for (int k = 0; k < 3; ++k) c[k] = std::clamp(v * palette[k] + jitter(rng), 0.0, 1.0);
  return c;
}

std::size_t bin_of(Eigen::Index r, Eigen::Index c, Eigen::Index cr, Eigen::Index cc) {
  const double d = std::hypot(static_cast<double>(r - cr), static_cast<double>(c - cc));
  return static_cast<std::size_t>(std::lround(d));
}

}  // namespace

ImageF dead_leaves(int side, std::mt19937_64& rng, const DeadLeavesOptions& o) {
  if (side < 1) throw InvalidInput("dead_leaves: side must be positive");
  const int ss = std::max(1, o.supersample);
  const int big = side * ss;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const cv::Vec3d palette(0.6 + 0.4 * unit(rng), 0.6 + 0.4 * unit(rng), 0.6 + 0.4 * unit(rng));

  cv::Mat canvas(big, big, CV_32FC3, draw_color(palette, rng));
  for (int i = 0; i < o.shapes; ++i) {
    const double r = draw_radius(o.min_radius, o.max_radius, rng) * ss;
    const cv::Point center(static_cast<int>(unit(rng) * big), static_cast<int>(unit(rng) * big));
    const cv::Scalar color = draw_color(palette, rng);
    if (unit(rng) < 0.7) {
      cv::circle(canvas, center, std::max(1, static_cast<int>(std::lround(r))), color, cv::FILLED, cv::LINE_8);
    } else {
      const cv::RotatedRect rect(center, cv::Size2f(static_cast<float>(2 * r), static_cast<float>(r * (0.5 + unit(rng)))),
                                 static_cast<float>(unit(rng) * 180.0));
      cv::Point2f corners[4];
      rect.points(corners);
      std::vector<cv::Point> poly(corners, corners + 4);
      cv::fillConvexPoly(canvas, poly, color, cv::LINE_8);
    }
  }
  // Smooth illumination falloff across the frame.
  const double gx = (unit(rng) - 0.5) * 0.4, gy = (unit(rng) - 0.5) * 0.4;
  for (int y = 0; y < big; ++y) {
    auto* row = canvas.ptr<cv::Vec3f>(y);
    const double fy = gy * (static_cast<double>(y) / big - 0.5);
    for (int x = 0; x < big; ++x) {
      const auto gain = static_cast<float>(1.0 + fy + gx * (static_cast<double>(x) / big - 0.5));
      row[x] *= gain;
    }
  }

  cv::Mat small;
  cv::resize(canvas, small, cv::Size(side, side), 0, 0, cv::INTER_AREA);
  const double blur = std::uniform_real_distribution<double>(o.blur_min, o.blur_max)(rng);
  if (blur > 0.05) cv::GaussianBlur(small, small, cv::Size(0, 0), blur, blur, cv::BORDER_REFLECT_101);

  ImageF out(side, side, 3);
  std::normal_distribution<double> noise(0.0, std::uniform_real_distribution<double>(o.noise_min, o.noise_max)(rng) / 255.0);
  for (int y = 0; y < side; ++y) {
    const auto* row = small.ptr<cv::Vec3f>(y);
    for (int x = 0; x < side; ++x) {
      for (int c = 0; c < 3; ++c) out[c](y, x) = static_cast<float>(row[x][c] + noise(rng));
    }
  }
  return imaging::quantize8(out);
}

RadialProfile radial_profile(const ImageF& image) {
  RadialProfile profile;
  for (const auto& channel : image.channels) {
    const Spectrum<float> s = dft2(channel);
    const Eigen::Index h = s.coefficients.rows(), w = s.coefficients.cols();
    std::vector<double> sum, count;
    for (Eigen::Index c = 0; c < w; ++c) {
      for (Eigen::Index r = 0; r < h; ++r) {
        const std::size_t b = bin_of(r, c, s.center_row(), s.center_col());
        if (b >= sum.size()) {
          sum.resize(b + 1, 0.0);
          count.resize(b + 1, 0.0);
        }
        sum[b] += std::abs(s.coefficients(r, c));
        count[b] += 1.0;
      }
    }
    for (std::size_t b = 0; b < sum.size(); ++b) sum[b] /= std::max(1.0, count[b]);
    profile.channels.push_back(std::move(sum));
  }
  return profile;
}

RadialProfile median_profile(const std::vector<RadialProfile>& profiles) {
  if (profiles.empty()) throw InvalidInput("median_profile: no profiles");
  RadialProfile out = profiles.front();
  for (std::size_t c = 0; c < out.channels.size(); ++c) {
    for (std::size_t b = 0; b < out.channels[c].size(); ++b) {
      std::vector<double> values;
      for (const auto& p : profiles) {
        if (p.channels.size() != out.channels.size() || p.channels[c].size() != out.channels[c].size()) {
          throw InvalidInput("median_profile: profiles differ in shape");
        }
        values.push_back(p.channels[c][b]);
      }
      const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
      std::nth_element(values.begin(), mid, values.end());
      double m = *mid;
      if (values.size() % 2 == 0) m = 0.5 * (m + *std::max_element(values.begin(), mid));
      out.channels[c][b] = m;
    }
  }
  return out;
}

ImageF flatten_spectrum(const ImageF& image, const RadialProfile& profile, double radius) {
  if (profile.channels.size() != static_cast<std::size_t>(image.channel_count())) {
    throw InvalidInput("flatten_spectrum: profile channel count mismatch");
  }
  ImageF out = image;
  for (int ch = 0; ch < image.channel_count(); ++ch) {
    Spectrum<float> s = dft2(image[ch]);
    const auto& bins = profile.channels[static_cast<std::size_t>(ch)];
    for (Eigen::Index c = 0; c < s.coefficients.cols(); ++c) {
      for (Eigen::Index r = 0; r < s.coefficients.rows(); ++r) {
        const double d = std::hypot(static_cast<double>(r - s.center_row()), static_cast<double>(c - s.center_col()));
        if (d < radius) continue;
        const std::size_t b = bin_of(r, c, s.center_row(), s.center_col());
        if (b >= bins.size()) throw InvalidInput("flatten_spectrum: profile shorter than the spectrum");
        auto& x = s.coefficients(r, c);
        const float magnitude = std::abs(x);
        const std::complex<float> phase = magnitude > 0.0f ? x / magnitude : std::complex<float>(1.0f, 0.0f);
        x = phase * static_cast<float>(bins[b]);
      }
    }
    out[ch] = idft2(s);
  }
  return imaging::clip01(out);
}

DatasetLayout write_dataset(const std::filesystem::path& root, const DatasetOptions& o) {
  if (o.pairs < 4) throw InvalidInput("write_dataset: need at least 4 pairs");
  if (o.val_fraction < 0.0 || o.test_fraction < 0.0 || o.val_fraction + o.test_fraction >= 1.0) {
    throw InvalidInput("write_dataset: bad split fractions");
  }
  namespace fs = std::filesystem;
  DatasetLayout layout{root, root / "pretext", root / "train.csv", root / "val.csv", root / "test.csv"};
  fs::create_directories(root / "real");
  fs::create_directories(root / "generated");
  fs::create_directories(layout.pretext_dir);

  std::mt19937_64 rng(o.seed);
  auto name = [](int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05d.png", i);
    return std::string(buf);
  };

  for (int i = 0; i < o.pretext_images; ++i) imaging::write_png(layout.pretext_dir / name(i), dead_leaves(o.side, rng));

  // Real images alternate between a sharp and a soft optical setting.
  DeadLeavesOptions sharp, soft;
  sharp.blur_min = o.sharp_blur[0];
  sharp.blur_max = o.sharp_blur[1];
  soft.blur_min = o.soft_blur[0];
  soft.blur_max = o.soft_blur[1];
  std::vector<RadialProfile> profiles;
  std::vector<std::string> sources;
  for (int i = 0; i < o.pairs; ++i) {
    const bool is_sharp = i % 2 == 0;
    const ImageF real = dead_leaves(o.side, rng, is_sharp ? sharp : soft);
    profiles.push_back(radial_profile(real));
    sources.push_back(is_sharp ? "leaves-sharp" : "leaves-soft");
    imaging::write_png(root / "real" / name(i), real);
  }
  const RadialProfile median = median_profile(profiles);
  for (int i = 0; i < o.pairs; ++i) {
    const ImageF real = imaging::read_image(root / "real" / name(i));
    imaging::write_png(root / "generated" / name(i), flatten_spectrum(real, median, o.flatten_radius));
  }

  std::vector<int> order(static_cast<std::size_t>(o.pairs));
  for (int i = 0; i < o.pairs; ++i) order[static_cast<std::size_t>(i)] = i;
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::lround(o.val_fraction * o.pairs));
  const auto n_test = static_cast<std::size_t>(std::lround(o.test_fraction * o.pairs));
  DatasetManifest train, val, test;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const int i = order[k];
    DatasetManifest& split = k < n_val ? val : (k < n_val + n_test ? test : train);
    split.records.push_back({fs::path("real") / name(i), 0, sources[static_cast<std::size_t>(i)]});
    split.records.push_back({fs::path("generated") / name(i), 1, "flattened"});
  }
  train.save(layout.train_manifest);
  if (!val.records.empty()) val.save(layout.val_manifest);
  if (!test.records.empty()) test.save(layout.test_manifest);
  return layout;
}

}  // namespace spai::toy
