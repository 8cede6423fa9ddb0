#include "spai/imaging.hpp"

#include <algorithm>
#include <cctype>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace spai::imaging {

namespace {

cv::Mat to_mat8(const ImageF& image) {
  const int h = static_cast<int>(image.height()), w = static_cast<int>(image.width());
  const int channels = image.channel_count();
  cv::Mat out(h, w, CV_8UC(channels));
  for (int y = 0; y < h; ++y) {
    auto* row = out.ptr<unsigned char>(y);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        // OpenCV stores color as BGR.
        const int src = channels == 3 ? 2 - c : c;
        const float v = std::clamp(image[src](y, x), 0.0f, 1.0f);
        row[x * channels + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    }
  }
  return out;
}

ImageF from_mat8(const cv::Mat& mat) {
  const int channels = mat.channels();
  ImageF out(mat.rows, mat.cols, channels);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<unsigned char>(y);
    for (int x = 0; x < mat.cols; ++x) {
      for (int c = 0; c < channels; ++c) {
        const int dst = channels == 3 ? 2 - c : c;
        out[dst](y, x) = static_cast<float>(row[x * channels + c]) / 255.0f;
      }
    }
  }
  return out;
}

cv::Mat to_mat32(const ImageF& image) {
  std::vector<cv::Mat> planes;
  for (const auto& c : image.channels) {
    cv::Mat plane(static_cast<int>(c.rows()), static_cast<int>(c.cols()), CV_32F);
    for (int y = 0; y < plane.rows; ++y)
      for (int x = 0; x < plane.cols; ++x) plane.at<float>(y, x) = c(y, x);
    planes.push_back(plane);
  }
  cv::Mat out;
  cv::merge(planes, out);
  return out;
}

ImageF from_mat32(const cv::Mat& mat) {
  std::vector<cv::Mat> planes;
  cv::split(mat, planes);
  ImageF out;
  for (const auto& plane : planes) {
    Matrix<float> c(plane.rows, plane.cols);
    for (int y = 0; y < plane.rows; ++y)
      for (int x = 0; x < plane.cols; ++x) c(y, x) = plane.at<float>(y, x);
    out.channels.push_back(std::move(c));
  }
  return out;
}

}  // namespace

ImageF read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw NotFound("image '" + path.string() + "' not found");
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (mat.empty()) throw InvalidInput("cannot decode image '" + path.string() + "'");
  return from_mat8(mat);
}

void write_png(const std::filesystem::path& path, const ImageF& image) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), to_mat8(image))) throw Error("cannot write '" + path.string() + "'");
}

ImageF codec_roundtrip(const ImageF& image, const std::string& extension, int quality, std::size_t* encoded_bytes) {
  std::vector<int> params;
  if (extension == ".jpg" || extension == ".jpeg") {
    params = {cv::IMWRITE_JPEG_QUALITY, quality};
  } else if (extension == ".webp") {
    params = {cv::IMWRITE_WEBP_QUALITY, quality};
  } else {
    throw InvalidInput("codec_roundtrip: unsupported codec '" + extension + "'");
  }
  std::vector<unsigned char> buffer;
  if (!cv::imencode(extension, to_mat8(image), buffer, params)) throw Error("encoding to " + extension + " failed");
  if (encoded_bytes) *encoded_bytes = buffer.size();
  const int flag = image.channel_count() == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR;
  cv::Mat decoded = cv::imdecode(buffer, flag);
  if (decoded.empty()) throw Error("decoding " + extension + " failed");
  return from_mat8(decoded);
}

std::size_t png_size(const ImageF& image) {
  std::vector<unsigned char> buffer;
  cv::imencode(".png", to_mat8(image), buffer);
  return buffer.size();
}

ImageF resize_bilinear(const ImageF& image, int height, int width) {
  if (height < 1 || width < 1) throw InvalidInput("resize: target size must be positive");
  cv::Mat out;
  cv::resize(to_mat32(image), out, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  return from_mat32(out);
}

ImageF gaussian_blur(const ImageF& image, int kernel, double sigma) {
  if (kernel < 1 || kernel % 2 == 0) throw InvalidInput("gaussian_blur: kernel size must be odd and positive");
  cv::Mat out;
  cv::GaussianBlur(to_mat32(image), out, cv::Size(kernel, kernel), sigma, sigma, cv::BORDER_REFLECT_101);
  return from_mat32(out);
}

ImageF rotate(const ImageF& image, double degrees) {
  const cv::Point2f center(static_cast<float>(image.width() - 1) / 2.0f,
                           static_cast<float>(image.height() - 1) / 2.0f);
  const cv::Mat transform = cv::getRotationMatrix2D(center, degrees, 1.0);
  cv::Mat out;
  cv::warpAffine(to_mat32(image), out, transform,
                 cv::Size(static_cast<int>(image.width()), static_cast<int>(image.height())), cv::INTER_LINEAR,
                 cv::BORDER_REFLECT_101);
  return from_mat32(out);
}

ImageF clip01(const ImageF& image) {
  ImageF out = image;
  for (auto& c : out.channels) c = c.cwiseMax(0.0f).cwiseMin(1.0f);
  return out;
}

ImageF quantize8(const ImageF& image) {
  ImageF out = clip01(image);
  for (auto& c : out.channels) c = (c * 255.0f).array().round() / 255.0f;
  return out;
}

ImageF ensure_rgb(const ImageF& image) {
  if (image.channel_count() == 3) return image;
  if (image.channel_count() == 1) return ImageF({image[0], image[0], image[0]});
  if (image.channel_count() == 4) return ImageF({image[0], image[1], image[2]});
  throw InvalidInput("unsupported channel count " + std::to_string(image.channel_count()));
}

bool has_image_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".webp" || ext == ".bmp" || ext == ".tif" ||
         ext == ".tiff" || ext == ".ppm" || ext == ".pgm";
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw NotFound("directory '" + dir.string() + "' not found");
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && has_image_extension(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace spai::imaging
