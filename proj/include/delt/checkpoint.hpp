#pragma once

#include "delt/tinylm.hpp"

#include <json.hpp>

#include <filesystem>
#include <string_view>

namespace delt {

inline constexpr std::string_view checkpoint_format = "delt-tinylm/1";

nlohmann::json to_json(const ModelConfig& config);
/// Missing keys keep their defaults.
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json checkpoint_json(const ModelParams& params);
ModelParams params_from_checkpoint(const nlohmann::json& j);

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

/// Writes `j` with a trailing newline; throws io errors.
void write_json_file(const nlohmann::json& j, const std::filesystem::path& path, int indent = 2);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace delt
