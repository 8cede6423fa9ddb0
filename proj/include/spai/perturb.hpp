#pragma once

// Robustness perturbations applied to whole images before scoring.

#include <cstdint>
#include <string>
#include <vector>

#include "spai/types.hpp"

namespace spai {

enum class PerturbKind { Jpeg, Webp, Blur, Noise, Resize };

struct Perturbation {
  PerturbKind kind = PerturbKind::Jpeg;
  int severity = 85;  // quality, kernel size, sigma (0..255) or percent

  std::string label() const;
};

std::string to_string(PerturbKind kind);
/// Throws InvalidInput for an unknown name.
PerturbKind parse_perturb_kind(const std::string& name);

/// The standard grid for each kind: jpeg/webp {85,70,50}, blur {3,5,7},
/// noise {1,3,5}, resize {85,70,50}.
const std::vector<int>& severity_grid(PerturbKind kind);
std::vector<Perturbation> all_perturbations();

/// Parses "kind:severity". Severities outside the grid need `allow_arbitrary`.
Perturbation parse_perturbation(const std::string& text, bool allow_arbitrary = false);

/// Kernel-size to sigma rule used for blur.
double blur_sigma(int kernel);

/// Noise draws come from `seed`; other kinds are deterministic.
ImageF perturb(const ImageF& image, const Perturbation& p, std::uint64_t seed = 0, bool allow_arbitrary = false);

}  // namespace spai
