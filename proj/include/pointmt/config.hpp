#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "pointmt/dataio.hpp"
#include "pointmt/model.hpp"
#include "pointmt/training.hpp"

namespace pointmt {

enum class Precision { f32, f64 };

std::string to_string(Precision p);
Precision parse_precision(const std::string& s);

/// Everything a CLI run needs. `seed` drives model initialization and the
/// training shuffle; the synthetic generator uses it too unless synth.seed
/// is set explicitly.
struct RunConfig {
  std::uint64_t seed = 42;
  Precision precision = Precision::f32;
  std::size_t threads = 0;
  ModelConfig model = ModelConfig::desk();
  TrainConfig train;
  SynthConfig synth;
  bool synth_seed_explicit = false;
  std::string train_data;  // PMTC path; empty = generate synthetic data
  std::string test_data;

  /// Copies with the run seed and thread cap applied.
  TrainConfig resolved_train() const;
  SynthConfig resolved_synth() const;

  /// Every section validated; throws ConfigError.
  void validate() const;
};

/// Sets one `section.key` value; unknown keys and malformed values throw
/// ConfigError.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Applies a `key=value` override as given on the command line.
void apply_override(RunConfig& cfg, const std::string& assignment);

/// Flat `key = value` lines; `#` starts a comment. Errors name the line.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source = "<config>");
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// Every key with its resolved value, one `key = value` per line; the
/// output parses back to the same config.
std::string format_config(const RunConfig& cfg);

/// All recognized keys in output order.
std::vector<std::string> config_keys();

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace pointmt
