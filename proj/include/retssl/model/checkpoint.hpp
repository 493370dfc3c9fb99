#pragma once

#include "retssl/model/vit.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

namespace retssl::model {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OptimizerBlobs {
  std::vector<nn::Mat<float>> m;
  std::vector<nn::Mat<float>> v;
  long step_count = 0;
};

// Everything needed to continue a run exactly: weights, optimizer moments,
// position in the schedule, and the seed (per-item randomness is a pure
// function of seed/epoch/index, so no generator state is stored).
struct CheckpointData {
  VitModel<float> model;
  std::optional<OptimizerBlobs> optimizer;
  int epoch = 0;  // epochs completed
  long global_step = 0;
  std::uint64_t seed = 0;
  nlohmann::json train_config;  // echo of the run config, may be null
};

void save_checkpoint(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::filesystem::path& path);

// Throws CheckpointError listing every differing field when the two configs
// do not match exactly.
void require_matching_config(const nlohmann::json& current, const nlohmann::json& stored);

}  // namespace retssl::model
