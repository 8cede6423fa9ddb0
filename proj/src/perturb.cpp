#include "spai/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "spai/imaging.hpp"

namespace spai {

std::string to_string(PerturbKind kind) {
  switch (kind) {
    case PerturbKind::Jpeg: return "jpeg";
    case PerturbKind::Webp: return "webp";
    case PerturbKind::Blur: return "blur";
    case PerturbKind::Noise: return "noise";
    case PerturbKind::Resize: return "resize";
  }
  return "unknown";
}

std::string Perturbation::label() const { return to_string(kind) + ":" + std::to_string(severity); }

PerturbKind parse_perturb_kind(const std::string& name) {
  for (PerturbKind k : {PerturbKind::Jpeg, PerturbKind::Webp, PerturbKind::Blur, PerturbKind::Noise,
                        PerturbKind::Resize}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidInput("unknown perturbation kind '" + name + "' (expected jpeg, webp, blur, noise or resize)");
}

const std::vector<int>& severity_grid(PerturbKind kind) {
  static const std::vector<int> quality{85, 70, 50};
  static const std::vector<int> kernels{3, 5, 7};
  static const std::vector<int> sigmas{1, 3, 5};
  switch (kind) {
    case PerturbKind::Blur: return kernels;
    case PerturbKind::Noise: return sigmas;
    default: return quality;
  }
}

std::vector<Perturbation> all_perturbations() {
  std::vector<Perturbation> out;
  for (PerturbKind k : {PerturbKind::Jpeg, PerturbKind::Webp, PerturbKind::Blur, PerturbKind::Noise,
                        PerturbKind::Resize}) {
    for (int s : severity_grid(k)) out.push_back({k, s});
  }
  return out;
}

namespace {

void check_severity(const Perturbation& p, bool allow_arbitrary) {
  const auto& grid = severity_grid(p.kind);
  if (!allow_arbitrary && std::find(grid.begin(), grid.end(), p.severity) == grid.end()) {
    throw InvalidInput("severity " + std::to_string(p.severity) + " is not in the " + to_string(p.kind) + " grid");
  }
  switch (p.kind) {
    case PerturbKind::Jpeg:
    case PerturbKind::Webp:
      if (p.severity < 1 || p.severity > 100) throw InvalidInput("quality must be in [1, 100]");
      break;
    case PerturbKind::Blur:
      if (p.severity < 1 || p.severity % 2 == 0) throw InvalidInput("blur kernel must be odd and positive");
      break;
    case PerturbKind::Noise:
      if (p.severity < 0) throw InvalidInput("noise sigma must be non-negative");
      break;
    case PerturbKind::Resize:
      if (p.severity < 1) throw InvalidInput("resize percentage must be positive");
      break;
  }
}

}  // namespace

Perturbation parse_perturbation(const std::string& text, bool allow_arbitrary) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw InvalidInput("perturbation must look like kind:severity, got '" + text + "'");
  Perturbation p;
  p.kind = parse_perturb_kind(text.substr(0, colon));
  const std::string number = text.substr(colon + 1);
  std::size_t used = 0;
  try {
    p.severity = std::stoi(number, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != number.size()) throw InvalidInput("bad severity '" + number + "'");
  check_severity(p, allow_arbitrary);
  return p;
}

double blur_sigma(int kernel) { return 0.3 * ((kernel - 1) / 2.0 - 1.0) + 0.8; }

ImageF perturb(const ImageF& image, const Perturbation& p, std::uint64_t seed, bool allow_arbitrary) {
  if (image.empty()) throw InvalidInput("perturb: empty image");
  check_severity(p, allow_arbitrary);
  switch (p.kind) {
    case PerturbKind::Jpeg: return imaging::codec_roundtrip(image, ".jpg", p.severity);
    case PerturbKind::Webp: return imaging::codec_roundtrip(image, ".webp", p.severity);
    case PerturbKind::Blur: return imaging::gaussian_blur(image, p.severity, blur_sigma(p.severity));
    case PerturbKind::Noise: {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> noise(0.0, static_cast<double>(p.severity));
      ImageF out = image;
      for (auto& c : out.channels) {
        for (Eigen::Index i = 0; i < c.size(); ++i) {
          const double v = std::clamp(static_cast<double>(c.data()[i]) * 255.0 + noise(rng), 0.0, 255.0);
          c.data()[i] = static_cast<float>(v / 255.0);
        }
      }
      return out;
    }
    case PerturbKind::Resize: {
      const int h = std::max(1, static_cast<int>(image.height() * p.severity / 100));
      const int w = std::max(1, static_cast<int>(image.width() * p.severity / 100));
      return imaging::resize_bilinear(image, h, w);
    }
  }
  throw InvalidInput("perturb: unknown kind");
}

}  // namespace spai
