#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "spai/types.hpp"

namespace fixture {

template <typename Scalar = float>
spai::Image<Scalar> random_image(Eigen::Index h, Eigen::Index w, int channels, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  spai::Image<Scalar> img(h, w, channels);
  for (auto& c : img.channels)
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = static_cast<Scalar>(u(rng));
  return img;
}

template <typename Scalar = double>
spai::Matrix<Scalar> random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  spai::Matrix<Scalar> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(n(rng));
  return m;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("spai-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixture
