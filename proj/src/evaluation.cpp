#include "spai/evaluation.hpp"

#include <cstdio>
#include <sstream>

#include "spai/imaging.hpp"
#include "spai/metrics.hpp"

namespace spai {

namespace {

using MetricField = std::optional<double> MetricValues::*;
constexpr MetricField kFields[] = {&MetricValues::auc, &MetricValues::balanced_accuracy,
                                   &MetricValues::average_precision};
constexpr const char* kFieldNames[] = {"auc", "balanced_accuracy", "average_precision"};
constexpr const char* kFieldLabels[] = {"AUC", "bAcc", "AP"};

template <typename Fn>
std::optional<double> guarded(Fn fn, std::vector<std::string>& errors, const char* name) {
  try {
    return fn();
  } catch (const std::exception& e) {
    errors.push_back(std::string(name) + ": " + e.what());
    return std::nullopt;
  }
}

std::optional<double> mean_of(const std::vector<std::optional<double>>& values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

nlohmann::json metric_json(const MetricValues& m) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t f = 0; f < 3; ++f) {
    const auto& v = m.*kFields[f];
    j[kFieldNames[f]] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  }
  return j;
}

}  // namespace

bool MetricsReport::any_cell_errored() const {
  for (const auto& c : cells) {
    if (!c.errors.empty()) return true;
  }
  return false;
}

MetricsReport evaluate_scores(const DatasetManifest& manifest, const std::vector<std::optional<double>>& scores,
                              const std::string& model_version, const std::optional<std::string>& perturbation) {
  if (scores.size() != manifest.size()) throw InvalidInput("evaluate_scores: one score per record required");
  const auto generators = manifest.sources(1);
  const auto reals = manifest.sources(0);
  if (generators.empty() || reals.empty()) {
    throw InvalidDataset("evaluation needs at least one generated and one real source");
  }

  MetricsReport report;
  report.model_version = model_version;
  report.perturbation = perturbation;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!scores[i]) {
      ++report.failed_images;
      report.warnings.push_back("no score for '" + manifest.records[i].path.string() + "'");
    }
  }

  for (const auto& g : generators) {
    std::vector<MetricValues> row;
    for (const auto& r : reals) {
      CellReport cell{g, r, 0, 0, {}, {}};
      std::vector<double> s;
      std::vector<int> y;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        const auto& rec = manifest.records[i];
        const bool in_cell = (rec.label == 1 && rec.source == g) || (rec.label == 0 && rec.source == r);
        if (!in_cell || !scores[i]) continue;
        s.push_back(*scores[i]);
        y.push_back(rec.label);
        (rec.label == 1 ? cell.generated_count : cell.real_count) += 1;
      }
      cell.metrics.auc = guarded([&] { return auc(s, y); }, cell.errors, "auc");
      cell.metrics.balanced_accuracy = guarded([&] { return balanced_accuracy(s, y); }, cell.errors, "balanced_accuracy");
      cell.metrics.average_precision = guarded([&] { return average_precision(s, y); }, cell.errors, "average_precision");
      if (!cell.errors.empty()) {
        report.warnings.push_back("cell (" + g + ", " + r + ") excluded from averages where undefined");
      }
      row.push_back(cell.metrics);
      report.cells.push_back(std::move(cell));
    }
    GeneratorSummary summary{g, {}};
    for (std::size_t f = 0; f < 3; ++f) {
      std::vector<std::optional<double>> values;
      for (const auto& m : row) values.push_back(m.*kFields[f]);
      summary.average.*kFields[f] = mean_of(values);
    }
    report.generators.push_back(std::move(summary));
  }
  for (std::size_t f = 0; f < 3; ++f) {
    std::vector<std::optional<double>> values;
    for (const auto& g : report.generators) values.push_back(g.average.*kFields[f]);
    report.grand.*kFields[f] = mean_of(values);
  }
  return report;
}

MetricsReport evaluate_detector(const DatasetManifest& manifest, const ImageScorer& scorer,
                                const std::optional<Perturbation>& perturbation, std::uint64_t seed,
                                const std::string& model_version) {
  std::vector<std::optional<double>> scores(manifest.size());
  std::vector<std::string> failures;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    try {
      ImageF image = imaging::ensure_rgb(imaging::read_image(manifest.records[i].path));
      if (perturbation) image = perturb(image, *perturbation, seed + i, true);
      scores[i] = scorer(image);
    } catch (const std::exception& e) {
      failures.push_back(manifest.records[i].path.string() + ": " + e.what());
    }
  }
  MetricsReport report = evaluate_scores(manifest, scores, model_version,
                                         perturbation ? std::optional(perturbation->label()) : std::nullopt);
  report.warnings.insert(report.warnings.begin(), failures.begin(), failures.end());
  return report;
}

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells) {
    cells.push_back({{"generator", c.generator},
                     {"real_source", c.real_source},
                     {"generated_count", c.generated_count},
                     {"real_count", c.real_count},
                     {"metrics", metric_json(c.metrics)},
                     {"errors", c.errors}});
  }
  nlohmann::json generators = nlohmann::json::array();
  for (const auto& g : report.generators) {
    generators.push_back({{"generator", g.generator}, {"average", metric_json(g.average)}});
  }
  return {{"model_version", report.model_version},
          {"perturbation", report.perturbation ? nlohmann::json(*report.perturbation) : nlohmann::json(nullptr)},
          {"cells", cells},
          {"generators", generators},
          {"grand_average", metric_json(report.grand)},
          {"failed_images", report.failed_images},
          {"warnings", report.warnings}};
}

std::string render_table(const MetricsReport& report) {
  auto cell = [](const std::optional<double>& v) {
    char buf[16];
    if (!v) return std::string("   -  ");
    std::snprintf(buf, sizeof(buf), "%6.1f", 100.0 * *v);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "model: " << (report.model_version.empty() ? "?" : report.model_version)
      << "   perturbation: " << report.perturbation.value_or("none") << "\n";
  out << "metric";
  for (const auto& g : report.generators) out << " | " << g.generator;
  out << " | AVG\n";
  for (std::size_t f = 0; f < 3; ++f) {
    out << kFieldLabels[f];
    for (const auto& g : report.generators) {
      const std::string v = cell(g.average.*kFields[f]);
      out << " | " << std::string(g.generator.size() > v.size() ? g.generator.size() - v.size() : 0, ' ') << v;
    }
    out << " | " << cell(report.grand.*kFields[f]) << "\n";
  }
  return out.str();
}

}  // namespace spai
