#pragma once

#include <filesystem>
#include <string>

#include "tempodet/augment.hpp"
#include "tempodet/data.hpp"
#include "tempodet/detector/config.hpp"
#include "tempodet/detector/train.hpp"

namespace tempodet::config {

// YAML key-value files. Parse errors are ConfigError with `source:line:`.
// Unknown keys are errors; missing keys keep their defaults.

detector::ModelConfig parse_model_config(const std::string& text, const std::string& source = "model config");
std::string format_model_config(const detector::ModelConfig& config);

// A train file may carry nested `loss:`, `augment:` and `model:` maps.
struct TrainFile {
  detector::TrainConfig config;
  bool has_lr = false;
  bool has_optimizer = false;
  std::string model_yaml;  // the `model:` map re-emitted as YAML; empty when absent
};
TrainFile parse_train_file(const std::string& text, const std::string& source = "train config");
// Unset optimizer/lr take the variant defaults (the lr default follows the optimizer).
detector::TrainConfig resolve_train_config(const TrainFile& file, detector::Variant variant);
std::string format_train_config(const detector::TrainConfig& config);

augment::AugmentConfig parse_augment_config(const std::string& text, const std::string& source = "augment config");
std::string format_augment_config(const augment::AugmentConfig& config);

// Synth files also accept a `seed` key.
struct SynthSettings {
  data::SynthConfig synth;
  std::uint64_t seed = 0;
};
SynthSettings parse_synth_config(const std::string& text, const std::string& source = "synth config");
std::string format_synth_config(const SynthSettings& settings);

std::string read_text(const std::filesystem::path& path);

}  // namespace tempodet::config
