#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tempodet/detector/model.hpp"

namespace tempodet::detector {

// Binary container: magic "TDCKPT", format version, model config text, free
// metadata text, then named float32 tensors.
struct Checkpoint {
  ModelConfig config;
  std::string metadata;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model, const std::string& metadata = "");
Checkpoint read_checkpoint(const std::filesystem::path& path);
// Every parameter of the config must be present with its exact shape.
Model<float> model_from_checkpoint(const Checkpoint& checkpoint);
Model<float> load_model(const std::filesystem::path& path);

// Copies tensors whose name and shape match; returns how many were copied.
int warm_start(Model<float>& model, const Checkpoint& checkpoint);

}  // namespace tempodet::detector
