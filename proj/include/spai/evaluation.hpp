#pragma once

// Per-cell metrics over (generator source, real source) pairs, averaged over
// real sources per generator and then over generators.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "spai/manifest.hpp"
#include "spai/perturb.hpp"
#include "spai/types.hpp"

namespace spai {

struct MetricValues {
  std::optional<double> auc;
  std::optional<double> balanced_accuracy;
  std::optional<double> average_precision;
};

struct CellReport {
  std::string generator;
  std::string real_source;
  std::size_t generated_count = 0;
  std::size_t real_count = 0;
  MetricValues metrics;
  std::vector<std::string> errors;
};

struct GeneratorSummary {
  std::string generator;
  MetricValues average;  // over real sources
};

struct MetricsReport {
  std::vector<CellReport> cells;
  std::vector<GeneratorSummary> generators;
  MetricValues grand;
  std::string model_version;
  std::optional<std::string> perturbation;
  std::vector<std::string> warnings;
  std::size_t failed_images = 0;

  bool any_cell_errored() const;
};

/// `scores[i]` belongs to `manifest.records[i]`; a missing score drops the
/// record with a warning.
MetricsReport evaluate_scores(const DatasetManifest& manifest, const std::vector<std::optional<double>>& scores,
                              const std::string& model_version = {},
                              const std::optional<std::string>& perturbation = std::nullopt);

using ImageScorer = std::function<double(const ImageF&)>;

/// Reads, optionally perturbs (noise seeded per record from `seed`) and scores
/// every record. Unreadable or failing images become missing scores.
MetricsReport evaluate_detector(const DatasetManifest& manifest, const ImageScorer& scorer,
                                const std::optional<Perturbation>& perturbation = std::nullopt,
                                std::uint64_t seed = 0, const std::string& model_version = {});

nlohmann::json to_json(const MetricsReport& report);
/// Rows are metrics, columns generators followed by the average.
std::string render_table(const MetricsReport& report);

}  // namespace spai
