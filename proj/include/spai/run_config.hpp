#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "spai/configs.hpp"
#include "spai/pretrain.hpp"

namespace spai {

/// Declarative run description shared by all subcommands. Missing keys keep
/// their toy-scale defaults.
struct RunConfig {
  std::string subcommand;
  std::uint64_t seed = 0;
  std::string out_dir = "runs/latest";
  int verbosity = 1;
  BackboneConfig backbone = BackboneConfig::toy();
  PretrainConfig pretrain;
  TrainConfig train = TrainConfig::toy();

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace spai
