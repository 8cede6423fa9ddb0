#include "spai/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "spai/types.hpp"

namespace spai {

namespace {

int parse_label(std::string text) {
  std::transform(text.begin(), text.end(), text.begin(), [](unsigned char c) { return std::tolower(c); });
  if (text == "real" || text == "0") return 0;
  if (text == "generated" || text == "1") return 1;
  throw InvalidDataset("unknown label '" + text + "' (expected real or generated)");
}

// Minimal RFC 4180 field splitter: quoted fields, doubled quotes.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

std::string label_name(int label) { return label == 1 ? "generated" : "real"; }

DatasetManifest DatasetManifest::load(const std::filesystem::path& path, bool check_paths) {
  std::ifstream in(path);
  if (!in) throw NotFound("manifest '" + path.string() + "' not found");
  const bool jsonl = path.extension() == ".jsonl" || path.extension() == ".json";
  DatasetManifest manifest;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    ManifestRecord record;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (jsonl) {
      try {
        const auto j = nlohmann::json::parse(line);
        record.path = j.at("path").get<std::string>();
        const auto& label = j.at("label");
        record.label = label.is_number() ? parse_label(std::to_string(label.get<int>()))
                                         : parse_label(label.get<std::string>());
        record.source = j.value("source", std::string{});
      } catch (const nlohmann::json::exception& e) {
        throw InvalidDataset(where + ": " + e.what());
      }
    } else {
      auto fields = split_csv(line);
      if (header.empty()) {
        header = fields;
        for (const char* need : {"path", "label", "source"}) {
          if (std::find(header.begin(), header.end(), need) == header.end()) {
            throw InvalidDataset(path.string() + ": CSV header must contain path,label,source");
          }
        }
        continue;
      }
      if (fields.size() != header.size()) throw InvalidDataset(where + ": wrong number of fields");
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "path") record.path = fields[i];
        if (header[i] == "label") record.label = parse_label(fields[i]);
        if (header[i] == "source") record.source = fields[i];
      }
    }
    if (record.path.empty()) throw InvalidDataset(where + ": empty path");
    if (record.path.is_relative()) record.path = path.parent_path() / record.path;
    if (check_paths && !std::filesystem::exists(record.path)) {
      throw InvalidDataset(where + ": '" + record.path.string() + "' does not exist");
    }
    manifest.records.push_back(std::move(record));
  }
  if (manifest.records.empty()) throw InvalidDataset("manifest '" + path.string() + "' has no records");
  return manifest;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  const bool jsonl = path.extension() == ".jsonl" || path.extension() == ".json";
  if (!jsonl) out << "path,label,source\n";
  for (const auto& r : records) {
    if (jsonl) {
      out << nlohmann::json{{"path", r.path.string()}, {"label", label_name(r.label)}, {"source", r.source}}.dump()
          << "\n";
    } else {
      out << csv_field(r.path.string()) << "," << label_name(r.label) << "," << csv_field(r.source) << "\n";
    }
  }
}

bool DatasetManifest::has_both_labels() const {
  bool real = false, generated = false;
  for (const auto& r : records) (r.label == 1 ? generated : real) = true;
  return real && generated;
}

std::vector<std::string> DatasetManifest::sources(int label) const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (r.label == label && seen.insert(r.source).second) out.push_back(r.source);
  }
  return out;
}

std::vector<int> DatasetManifest::labels() const {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

}  // namespace spai
