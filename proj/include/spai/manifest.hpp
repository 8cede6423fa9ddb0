#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace spai {

struct ManifestRecord {
  std::filesystem::path path;
  int label = 0;  // 1 = generated, 0 = real
  std::string source;
};

/// CSV (header path,label,source) or JSONL with the same keys. Labels are
/// "real"/"generated" (0/1 also accepted). Relative paths resolve against the
/// manifest's directory.
struct DatasetManifest {
  std::vector<ManifestRecord> records;

  static DatasetManifest load(const std::filesystem::path& path, bool check_paths = true);
  /// Writes CSV or JSONL depending on the extension; paths are written as given.
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return records.size(); }
  bool has_both_labels() const;
  std::vector<std::string> sources(int label) const;
  std::vector<int> labels() const;
};

std::string label_name(int label);

}  // namespace spai
