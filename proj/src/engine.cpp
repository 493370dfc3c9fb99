#include "retssl/train/engine.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

namespace retssl::train {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  model.validate();
  weights.validate();
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (warmup_epochs < 0 || warmup_epochs >= epochs)
    throw std::invalid_argument("warmup_epochs must be in [0, epochs)");
  if (batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
  if (base_lr <= 0) throw std::invalid_argument("base_lr must be positive");
  if (grad_clip <= 0) throw std::invalid_argument("grad_clip must be positive");
  if (eligibility_threshold <= 0 || eligibility_threshold > 1)
    throw std::invalid_argument("eligibility_threshold must be in (0, 1]");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  MaskSchedule(mask_r0, mask_rT, epochs);  // range-checks the endpoints
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"model", c.model},
                     {"epochs", c.epochs},
                     {"warmup_epochs", c.warmup_epochs},
                     {"base_lr", c.base_lr},
                     {"batch_size", c.batch_size},
                     {"weight_decay", c.weight_decay},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"grad_clip", c.grad_clip},
                     {"seed", c.seed},
                     {"mask_r0", c.mask_r0},
                     {"mask_rT", c.mask_rT},
                     {"weights", c.weights},
                     {"augment",
                      {{"enabled", c.augment.enabled},
                       {"min_area_scale", c.augment.min_area_scale},
                       {"max_area_scale", c.augment.max_area_scale},
                       {"flip_prob", c.augment.flip_prob}}},
                     {"eligibility_threshold", c.eligibility_threshold},
                     {"workers", c.workers}};
}

// Missing keys keep their defaults; unknown keys are rejected so config
// typos fail loudly instead of silently training with defaults.
void from_json(const nlohmann::json& j, TrainConfig& c) {
  static const std::set<std::string> known{
      "model",      "epochs",  "warmup_epochs", "base_lr", "batch_size",
      "weight_decay", "adam_beta1", "adam_beta2",    "grad_clip", "seed",
      "mask_r0",    "mask_rT", "weights",       "augment", "eligibility_threshold",
      "workers"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw std::invalid_argument("unknown train config key: " + key);
  c = TrainConfig{};
  if (j.contains("model")) j.at("model").get_to(c.model);
  if (j.contains("epochs")) j.at("epochs").get_to(c.epochs);
  if (j.contains("warmup_epochs")) j.at("warmup_epochs").get_to(c.warmup_epochs);
  if (j.contains("base_lr")) j.at("base_lr").get_to(c.base_lr);
  if (j.contains("batch_size")) j.at("batch_size").get_to(c.batch_size);
  if (j.contains("weight_decay")) j.at("weight_decay").get_to(c.weight_decay);
  if (j.contains("adam_beta1")) j.at("adam_beta1").get_to(c.adam_beta1);
  if (j.contains("adam_beta2")) j.at("adam_beta2").get_to(c.adam_beta2);
  if (j.contains("grad_clip")) j.at("grad_clip").get_to(c.grad_clip);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (j.contains("mask_r0")) j.at("mask_r0").get_to(c.mask_r0);
  if (j.contains("mask_rT")) j.at("mask_rT").get_to(c.mask_rT);
  if (j.contains("weights")) j.at("weights").get_to(c.weights);
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    static const std::set<std::string> known_aug{"enabled", "min_area_scale", "max_area_scale",
                                                 "flip_prob"};
    for (const auto& [key, _] : a.items())
      if (!known_aug.count(key)) throw std::invalid_argument("unknown augment key: " + key);
    if (a.contains("enabled")) a.at("enabled").get_to(c.augment.enabled);
    if (a.contains("min_area_scale")) a.at("min_area_scale").get_to(c.augment.min_area_scale);
    if (a.contains("max_area_scale")) a.at("max_area_scale").get_to(c.augment.max_area_scale);
    if (a.contains("flip_prob")) a.at("flip_prob").get_to(c.augment.flip_prob);
  }
  if (j.contains("eligibility_threshold"))
    j.at("eligibility_threshold").get_to(c.eligibility_threshold);
  if (j.contains("workers")) j.at("workers").get_to(c.workers);
  c.validate();
}

double lr_at(long step, long warmup_steps, long total_steps, double base_lr) {
  if (step < 0) throw std::invalid_argument("lr_at: negative step");
  if (step < warmup_steps)
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const long span = total_steps - warmup_steps;
  if (span <= 0) return base_lr;
  const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(span);
  return 0.5 * base_lr * (1.0 + std::cos(3.14159265358979323846 * std::min(progress, 1.0)));
}

BatchItem<float> prepare_pair(const std::vector<PatientRecord>& records, const PairIndex& index,
                              long pair_id, int epoch, const TrainConfig& cfg) {
  const PairTemplate& tpl = index.pairs.at(static_cast<size_t>(pair_id));
  const PatientRecord& record = records.at(static_cast<size_t>(tpl.patient_index));
  PairSample pair = assign_roles(record, tpl, cfg.seed, epoch, pair_id);
  pair = augment_views(std::move(pair), cfg.augment, cfg.seed, epoch, pair_id);

  const Mask mask = pair.view_masked.retina_mask
                        ? *pair.view_masked.retina_mask
                        : estimate_retina_mask(pair.view_masked.pixels);
  const auto eligible =
      patch_eligibility(mask, cfg.model.patch_size, cfg.eligibility_threshold);
  const double ratio = masking_ratio(epoch, cfg.schedule());
  const MaskPlan plan = sample_mask(
      eligible, ratio, derive_seed({cfg.seed, RngStream::kMaskPlan, epoch, pair_id}));
  return make_batch_item<float>(pair, plan, cfg.model.patch_size);
}

nlohmann::json StepLog::to_json() const {
  nlohmann::json j = report.to_json();
  j["epoch"] = epoch;
  j["step"] = step;
  j["lr"] = lr;
  j["mask_ratio"] = mask_ratio;
  j["grad_norm"] = grad_norm;
  return j;
}

StepLog train_step(model::VitModel<float>& model, const FeatureExtractor<float>& fx,
                   AdamW& opt, const std::vector<BatchItem<float>>& items,
                   const TrainConfig& cfg, int epoch, long global_step, long total_steps,
                   long warmup_steps) {
  auto result = compute_batch(model, fx, items, cfg.weights, true, cfg.workers);
  if (auto bad = result.report.first_non_finite())
    throw TrainError("non-finite loss term '" + *bad + "' at epoch " +
                     std::to_string(epoch) + " step " + std::to_string(global_step) +
                     "; diagnostics: " + result.report.to_json().dump());

  StepLog log;
  log.epoch = epoch;
  log.step = global_step;
  log.mask_ratio = masking_ratio(epoch, cfg.schedule());
  log.report = result.report;
  log.grad_norm = clip_global_norm(result.grads, cfg.grad_clip);
  log.lr = lr_at(global_step, warmup_steps, total_steps, cfg.base_lr);
  opt.step(model.params, result.grads, log.lr);
  return log;
}

PretrainResult run_pretraining(const fs::path& manifest_path, const TrainConfig& cfg,
                               const fs::path& out_dir, const fs::path* resume_from) {
  cfg.validate();
  const auto records = load_manifest(manifest_path.string());
  const PairIndex index = build_pair_index(records);
  if (index.total() == 0)
    throw TrainError("no same-patient image pairs in " + manifest_path.string() +
                     "; every patient has a single image");

  fs::create_directories(out_dir);
  // Worker count changes execution, never results, so it is not part of the
  // run identity stored in checkpoints (resume on another machine is fine).
  nlohmann::json cfg_json = cfg;
  cfg_json.erase("workers");

  model::VitModel<float> net;
  AdamW opt(cfg.adam_beta1, cfg.adam_beta2, 1e-8, cfg.weight_decay);
  int start_epoch = 0;
  long global_step = 0;
  if (resume_from) {
    auto ck = model::load_checkpoint(*resume_from);
    model::require_matching_config(cfg_json, ck.train_config);
    net = std::move(ck.model);
    start_epoch = ck.epoch;
    global_step = ck.global_step;
    opt.init(net.params);
    if (ck.optimizer)
      opt.restore(std::move(ck.optimizer->m), std::move(ck.optimizer->v),
                  ck.optimizer->step_count);
  } else {
    net = model::VitModel<float>::init(cfg.model, cfg.seed);
    opt.init(net.params);
  }
  const auto fx = FeatureExtractor<float>::create(cfg.seed);

  const long pairs_per_epoch = index.total();
  const long steps_per_epoch = (pairs_per_epoch + cfg.batch_size - 1) / cfg.batch_size;
  const long total_steps = steps_per_epoch * cfg.epochs;
  const long warmup_steps = steps_per_epoch * cfg.warmup_epochs;

  {
    std::ofstream tsv(out_dir / "schedule.tsv", std::ios::trunc);
    tsv << "epoch\tmask_ratio\n";
    char buf[64];
    for (int t = 0; t <= cfg.epochs; ++t) {
      std::snprintf(buf, sizeof buf, "%d\t%.17g\n", t, masking_ratio(t, cfg.schedule()));
      tsv << buf;
    }
  }

  std::ofstream losses(out_dir / "losses.jsonl",
                       resume_from ? std::ios::app : std::ios::trunc);
  if (!losses) throw TrainError("cannot open losses.jsonl in " + out_dir.string());

  PretrainResult result;
  auto save = [&](const fs::path& p, int epochs_done) {
    model::CheckpointData data;
    data.model = net;
    data.optimizer = model::OptimizerBlobs{opt.moments1(), opt.moments2(), opt.step_count()};
    data.epoch = epochs_done;
    data.global_step = global_step;
    data.seed = cfg.seed;
    data.train_config = cfg_json;
    model::save_checkpoint(p, data);
  };

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<long> order(pairs_per_epoch);
    for (long i = 0; i < pairs_per_epoch; ++i) order[i] = i;
    Rng(derive_seed({cfg.seed, RngStream::kShuffle, epoch})).shuffle(order.begin(), order.end());

    for (long at = 0; at < pairs_per_epoch; at += cfg.batch_size) {
      const long n = std::min<long>(cfg.batch_size, pairs_per_epoch - at);
      std::vector<BatchItem<float>> items(n);
      parallel_for(n, cfg.workers, [&](long i) {
        items[i] = prepare_pair(records, index, order[at + i], epoch, cfg);
      });
      StepLog log = train_step(net, fx, opt, items, cfg, epoch, global_step, total_steps,
                               warmup_steps);
      losses << log.to_json().dump() << "\n";
      result.steps.push_back(std::move(log));
      ++global_step;
    }
    losses.flush();

    char name[48];
    std::snprintf(name, sizeof name, "checkpoint_epoch_%03d.bin", epoch);
    save(out_dir / name, epoch + 1);
  }

  result.final_checkpoint = out_dir / "checkpoint_final.bin";
  save(result.final_checkpoint, cfg.epochs);
  return result;
}

}  // namespace retssl::train
