#include "spai/run_config.hpp"

#include <fstream>

#include "spai/types.hpp"

namespace spai {

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"subcommand", c.subcommand}, {"seed", c.seed},         {"out_dir", c.out_dir},
       {"verbosity", c.verbosity},   {"backbone", c.backbone}, {"pretrain", c.pretrain},
       {"train", c.train}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  c.subcommand = j.value("subcommand", c.subcommand);
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.verbosity = j.value("verbosity", c.verbosity);
  if (j.contains("backbone")) from_json(j.at("backbone"), c.backbone);
  if (j.contains("pretrain")) from_json(j.at("pretrain"), c.pretrain);
  if (j.contains("train")) from_json(j.at("train"), c.train);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("config '" + path.string() + "' not found");
  RunConfig config;
  try {
    from_json(nlohmann::json::parse(in), config);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("config '" + path.string() + "': " + e.what());
  }
  return config;
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << nlohmann::json(config).dump(2) << "\n";
}

}  // namespace spai
