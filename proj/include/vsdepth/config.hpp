#pragma once

// Run configuration: one JSON document covering data locations, model,
// training, calibration and evaluation. Unknown keys are rejected.

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vsdepth/evaluation.hpp"
#include "vsdepth/networks.hpp"
#include "vsdepth/scalecal.hpp"
#include "vsdepth/trainer.hpp"

namespace vsdepth {

/// Environment variable holding the config path used when --config is absent.
inline constexpr const char* kConfigEnvVar = "VSDEPTH_CONFIG";

struct RunConfig {
  std::string profile = "full";
  std::string data_root = "data";
  std::string output_dir = "runs/default";
  int held_out_sequences = 1;  // last sequences of each domain, kept out of training
  ModelConfig model;
  TrainConfig train;
  CalibrationConfig calibration;
  EvalConfig evaluation;

  /// "full": full resolution and batch; "desk": CPU-sized preset.
  static RunConfig for_profile(const std::string& name);
  void validate() const;
};

std::vector<std::string> profile_names();

nlohmann::ordered_json to_json(const RunConfig& c);

/// Starts from the profile named in the document (or `profile_override`)
/// and applies every key present. ConfigError::key() holds the dotted path
/// of an unknown or ill-typed entry.
RunConfig config_from_json(const nlohmann::json& j, const std::optional<std::string>& profile_override = {});

/// Throws ConfigError naming the path when the file is missing or unparsable.
RunConfig load_config(const std::filesystem::path& file, const std::optional<std::string>& profile_override = {});
void save_config(const std::filesystem::path& file, const RunConfig& c);

/// Value of kConfigEnvVar, when set and non-empty.
std::optional<std::filesystem::path> config_path_from_env();

}  // namespace vsdepth
