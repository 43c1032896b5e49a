#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "signet/model.hpp"
#include "signet/train.hpp"

namespace signet::cli {

// Fully flattened training-session configuration. Resolution order is
// defaults, then the JSON config file, then explicit command-line flags.
struct SessionConfig {
  std::string task = "custom";  // depression | responder | custom
  std::vector<std::string> families{"transformer", "cnn1d", "lstm", "cnn_lstm"};

  // data source: a manifest path, or the inline synthetic spec below
  std::string manifest;
  std::size_t per_class = 10;
  std::size_t channels = 4;
  std::size_t samples = 2200;
  double separation = 1.0;
  double sampling_hz = 250.0;
  std::uint64_t data_seed = 1;

  std::size_t window_length = 2000;
  std::size_t offset = 0;

  // model overrides applied on top of the shipped family config; nullopt
  // keeps the shipped value. Structural overrides lift the budget check.
  std::optional<std::size_t> segments;
  std::optional<std::size_t> d_model;
  std::optional<std::size_t> heads;
  std::optional<std::size_t> blocks;
  std::optional<std::size_t> ffn_width;
  std::optional<double> dropout;
  std::optional<bool> residual;
  std::optional<bool> layer_norm;
  std::optional<bool> forget_bias_one;

  TrainConfig train;

  double test_fraction = 0.30;
  std::uint64_t split_seed = 1;
  bool subject_split = false;

  std::size_t seeds = 10;
  std::uint64_t seed_base = 1;
  std::vector<std::uint64_t> seed_list;  // when nonempty, wins over seeds/seed_base

  std::string out = "runs";
  std::size_t jobs = 1;

  std::vector<std::uint64_t> resolved_seeds() const;
  void validate() const;  // throws ConfigError
};

// Applies a flat JSON object (parsed from `text`) onto `cfg`; unknown keys
// are rejected with ConfigError naming the key.
void apply_config_json(SessionConfig& cfg, const std::string& text, const std::string& source);

// Serialized echo of the fully resolved configuration.
std::string session_config_json(const SessionConfig& cfg);

// Family config after applying the session's model overrides.
ModelConfig resolve_model_config(const SessionConfig& cfg, ModelFamily family);

// Runs the whole session: trains every (family, seed) pair, writes the
// output tree, prints one aggregate summary line per family.
void run_session(const SessionConfig& cfg);

}  // namespace signet::cli
