#pragma once

#include "retssl/manifest.hpp"
#include "retssl/model/checkpoint.hpp"
#include "retssl/pairing.hpp"
#include "retssl/train/batch.hpp"
#include "retssl/train/optimizer.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace retssl::train {

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  model::ModelConfig model{};
  int epochs = 30;
  int warmup_epochs = 3;
  double base_lr = 5e-5;
  int batch_size = 16;
  double weight_decay = 0.05;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.95;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  double mask_r0 = 0.985;
  double mask_rT = 0.85;
  LossWeights weights{};
  AugmentConfig augment{};
  float eligibility_threshold = 0.5f;
  int workers = 1;

  MaskSchedule schedule() const { return MaskSchedule(mask_r0, mask_rT, epochs); }
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Linear warmup to base_lr, then cosine decay reaching exactly 0 at
// step == total_steps (one past the last executed step).
double lr_at(long step, long warmup_steps, long total_steps, double base_lr);

// Deterministic materialization of one pair: role draw, augmentation,
// retina eligibility of the masked view, and the mask plan. pair_id is the
// pair's stable index in the PairIndex enumeration.
BatchItem<float> prepare_pair(const std::vector<PatientRecord>& records, const PairIndex& index,
                              long pair_id, int epoch, const TrainConfig& cfg);

struct StepLog {
  int epoch = 0;
  long step = 0;  // global step index
  double lr = 0;
  double mask_ratio = 0;
  double grad_norm = 0;
  LossReport report;

  nlohmann::json to_json() const;
};

struct PretrainResult {
  std::filesystem::path final_checkpoint;
  std::vector<StepLog> steps;
};

// Full pretraining run over a manifest. Writes checkpoint_epoch_NNN.bin per
// epoch, checkpoint_final.bin, losses.jsonl (one StepLog per line) and
// schedule.tsv into out_dir. `resume_from` restarts an interrupted run; the
// stored config must match cfg exactly.
PretrainResult run_pretraining(const std::filesystem::path& manifest_path,
                               const TrainConfig& cfg, const std::filesystem::path& out_dir,
                               const std::filesystem::path* resume_from = nullptr);

// Single optimizer step on an already prepared batch; exposed for the
// overfit and determinism tests. Throws TrainError on non-finite losses.
StepLog train_step(model::VitModel<float>& model, const FeatureExtractor<float>& fx,
                   AdamW& opt, const std::vector<BatchItem<float>>& items,
                   const TrainConfig& cfg, int epoch, long global_step, long total_steps,
                   long warmup_steps);

}  // namespace retssl::train
