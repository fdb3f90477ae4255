#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "lost/model_config.hpp"
#include "lost/optim.hpp"

namespace lost {

struct DataConfig {
  std::string source = "synthetic";  // synthetic | file
  std::string path;                  // file source only
  std::size_t synthetic_bytes = 2'000'000;
  std::uint64_t synthetic_seed = 0;  // corpus text; window sampling uses train.seed
  double split = 0.9;
};

/// One experiment: sections [model], [train], [data], [output]. See docs/config.md.
struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  std::string output_dir = "runs/desk";

  /// Throws ConfigError.
  void validate() const;
};

/// Parses "key = value" lines under [section] headers; '#' starts a comment.
/// Unknown sections or keys and malformed values throw ConfigError naming
/// the key and line. Keys left out keep their defaults.
ExperimentConfig parse_config(std::string_view text, std::string_view source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every key, in documented order. parse_config(write_config(c)) == c.
std::string write_config(const ExperimentConfig& cfg);

}  // namespace lost
