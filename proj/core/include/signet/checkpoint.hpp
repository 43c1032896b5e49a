#pragma once

#include <filesystem>
#include <string>

#include "signet/model.hpp"

namespace signet {

// JSON round-trip of an architecture description (used in the checkpoint
// header and the CLI config echo).
std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& json_text);

// Checkpoint container: magic, a JSON header (config echo, seed, parameter
// names and shapes) and the raw parameter values as IEEE-754 little-endian
// doubles in registry order. save(load(f)) reproduces f byte for byte.
void save_checkpoint(Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

// Human-readable parameter listing: one `name shape count` line per
// parameter plus a total.
std::string param_manifest(Model& model);

}  // namespace signet
