#include "retssl/eval/probe.hpp"
#include "retssl/manifest.hpp"
#include "retssl/masking.hpp"
#include "retssl/model/checkpoint.hpp"
#include "retssl/pairing.hpp"
#include "retssl/png_io.hpp"
#include "retssl/synth.hpp"
#include "retssl/train/engine.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "retssl 0.1.0";

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.parent_path() / (path.filename().string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::trunc | std::ios::binary);
    os << content;
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

// Applies the RETSSL_OUTPUT_ROOT override to relative output directories.
fs::path resolve_out(const std::string& out) {
  fs::path p(out);
  if (const char* root = std::getenv("RETSSL_OUTPUT_ROOT"); root && *root && p.is_relative())
    return fs::path(root) / p;
  return p;
}

int env_workers(int flag_value, int fallback = 1) {
  if (flag_value > 0) return flag_value;
  if (const char* w = std::getenv("RETSSL_WORKERS"); w && *w) {
    const int n = std::atoi(w);
    if (n > 0) return n;
  }
  return fallback;
}

// Reproducibility record written into every run directory, once before the
// work starts and again (with end_time and outputs) on success.
struct RunManifest {
  json doc;
  fs::path path;

  RunManifest(const fs::path& out_dir, const std::string& subcommand, json config,
              std::uint64_t seed) {
    fs::create_directories(out_dir);
    path = out_dir / "run_manifest.json";
    doc["subcommand"] = subcommand;
    doc["config"] = std::move(config);
    doc["seed"] = seed;
    doc["code_version"] = kVersion;
    doc["start_time"] = utc_now();
    doc["end_time"] = nullptr;
    doc["outputs"] = json::array();
    write_file_atomic(path, doc.dump(2) + "\n");
  }

  void finish(const std::vector<fs::path>& outputs) {
    doc["end_time"] = utc_now();
    for (const auto& p : outputs) doc["outputs"].push_back(p.string());
    write_file_atomic(path, doc.dump(2) + "\n");
  }
};

int cmd_synth_gen(const retssl::synth::SynthSpec& spec, const std::string& out) {
  const fs::path out_dir = resolve_out(out);
  json cfg{{"n_patients", spec.n_patients}, {"scanners", spec.scanners},
           {"image_size", spec.image_size}, {"radius_fraction", spec.radius_fraction},
           {"age_min", spec.age_min},       {"age_max", spec.age_max},
           {"curvature_gain", spec.curvature_gain},
           {"stripe_amplitude", spec.stripe_amplitude},
           {"lesion_max", spec.lesion_max}, {"disease_threshold", spec.disease_threshold},
           {"noise_sigma", spec.noise_sigma}};
  RunManifest rm(out_dir, "synth-gen", cfg, spec.seed);
  const auto paths = retssl::synth::generate_dataset(spec, out_dir / "data");
  std::cout << "wrote " << paths.n_images << " images under " << (out_dir / "data").string()
            << "\n";
  rm.finish({paths.manifest, paths.labels, paths.split_manifests[0], paths.split_manifests[1],
             paths.split_manifests[2]});
  return 0;
}

int cmd_pretrain(const std::string& manifest, const std::string& config_path,
                 const std::string& out, std::optional<std::uint64_t> seed_flag,
                 std::optional<std::string> resume, int workers_flag) {
  retssl::train::TrainConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open config: " + config_path);
    json j = json::parse(in);
    cfg = j.get<retssl::train::TrainConfig>();
  }
  if (seed_flag) cfg.seed = *seed_flag;
  cfg.workers = env_workers(workers_flag, cfg.workers);
  cfg.validate();

  const fs::path out_dir = resolve_out(out);
  RunManifest rm(out_dir, "pretrain", json(cfg), cfg.seed);
  fs::path resume_path;
  const fs::path* resume_ptr = nullptr;
  if (resume) {
    resume_path = *resume;
    resume_ptr = &resume_path;
  }
  const auto result = retssl::train::run_pretraining(manifest, cfg, out_dir, resume_ptr);
  std::cout << "final checkpoint: " << result.final_checkpoint.string() << "\n";
  if (!result.steps.empty())
    std::cout << "final total loss: " << result.steps.back().report.total << "\n";
  rm.finish({result.final_checkpoint, out_dir / "losses.jsonl", out_dir / "schedule.tsv"});
  return 0;
}

struct SplitSet {
  std::vector<const retssl::Image*> images;
  std::vector<int> labels;
  std::vector<double> ages;
};

int cmd_probe(const std::string& checkpoint, const std::string& manifest,
              const std::string& labels_path, const std::string& task,
              const std::string& mode, const std::string& out, std::uint64_t seed,
              int workers_flag, bool mean_pool) {
  auto ck = retssl::model::load_checkpoint(checkpoint);
  const auto records = retssl::load_manifest(manifest, retssl::LoadOptions{false, false});
  const auto label_rows = retssl::eval::parse_labels(labels_path);

  std::map<std::string, const retssl::eval::LabelRow*> by_patient;
  for (const auto& row : label_rows) by_patient[row.patient_id] = &row;

  retssl::eval::ProbeConfig pc;
  pc.mode = mode == "finetune" ? retssl::eval::ProbeConfig::Mode::kFineTune
                               : retssl::eval::ProbeConfig::Mode::kLinearProbe;
  pc.seed = seed;
  pc.workers = env_workers(workers_flag);
  pc.mean_pool_features = mean_pool;

  std::map<std::string, SplitSet> splits;
  for (const auto& rec : records) {
    auto it = by_patient.find(rec.patient_id);
    if (it == by_patient.end())
      throw retssl::eval::ProbeError("patient missing from labels file: " + rec.patient_id);
    const auto& lab = *it->second;
    auto& set = splits[lab.split];
    for (const auto& img : rec.images) {
      set.images.push_back(&img.pixels);
      set.labels.push_back(task == "disease" ? lab.disease
                                             : retssl::gender_class(lab.gender));
      set.ages.push_back(lab.age_years);
    }
  }
  for (const char* name : {"train", "val", "test"})
    if (!splits.count(name))
      throw retssl::eval::ProbeError(std::string("labels file has no '") + name + "' split");

  const fs::path out_dir = resolve_out(out);
  json cfg{{"checkpoint", checkpoint}, {"manifest", manifest}, {"labels", labels_path},
           {"task", task},             {"mode", mode},         {"mean_pool", mean_pool},
           {"epochs", pc.epochs},      {"batch_size", pc.batch_size},
           {"lr_probe", pc.lr_probe},  {"lr_finetune", pc.lr_finetune}};
  RunManifest rm(out_dir, "probe", cfg, seed);

  auto& train = splits["train"];
  auto& val = splits["val"];
  auto& test = splits["test"];
  json metrics{{"task", task}, {"mode", mode},
               {"n", {{"train", train.images.size()},
                      {"val", val.images.size()},
                      {"test", test.images.size()}}}};

  if (task == "age") {
    const auto preds = retssl::eval::predict_age_years(ck.model, test.images, pc.workers);
    double mean_train_age = 0;
    for (double a : train.ages) mean_train_age += a;
    mean_train_age /= static_cast<double>(train.ages.size());
    double mae = 0, rmse = 0, baseline_mae = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
      const double err = preds[i] - test.ages[i];
      mae += std::abs(err);
      rmse += err * err;
      baseline_mae += std::abs(mean_train_age - test.ages[i]);
    }
    const double n = static_cast<double>(preds.size());
    metrics["test"] = {{"mae_years", mae / n},
                       {"rmse_years", std::sqrt(rmse / n)},
                       {"baseline_mae_years", baseline_mae / n}};
    metrics["train_mean_age"] = mean_train_age;
  } else if (pc.mode == retssl::eval::ProbeConfig::Mode::kLinearProbe) {
    const auto ft_train =
        retssl::eval::extract_features(ck.model, train.images, mean_pool, pc.workers);
    const auto ft_val =
        retssl::eval::extract_features(ck.model, val.images, mean_pool, pc.workers);
    const auto ft_test =
        retssl::eval::extract_features(ck.model, test.images, mean_pool, pc.workers);
    const auto probe =
        retssl::eval::train_linear_probe(ft_train, train.labels, ft_val, val.labels, pc);
    const auto scores = probe.scores(ft_test);
    metrics["best_epoch"] = probe.best_epoch;
    metrics["val_auroc"] = probe.best_val_auroc;
    metrics["test"] = {{"auroc", retssl::eval::auroc(scores, test.labels)},
                       {"auprc", retssl::eval::auprc(scores, test.labels)}};
  } else {
    const auto ft = retssl::eval::fine_tune(ck.model, train.images, train.labels, val.images,
                                            val.labels, pc);
    const auto scores = ft.scores(test.images, mean_pool, pc.workers);
    metrics["best_epoch"] = ft.best_epoch;
    metrics["val_auroc"] = ft.best_val_auroc;
    metrics["test"] = {{"auroc", retssl::eval::auroc(scores, test.labels)},
                       {"auprc", retssl::eval::auprc(scores, test.labels)}};
  }

  const fs::path metrics_path = out_dir / "metrics.json";
  write_file_atomic(metrics_path, metrics.dump(2) + "\n");
  std::cout << metrics.dump(2) << "\n";
  rm.finish({metrics_path});
  return 0;
}

int cmd_attn(const std::string& checkpoint, const std::string& image_path, int layer,
             const std::string& tokens_csv, const std::string& out) {
  auto ck = retssl::model::load_checkpoint(checkpoint);
  retssl::Image img = retssl::read_png_rgb(image_path);
  if (img.width != ck.model.cfg.image_size || img.height != ck.model.cfg.image_size) {
    img = retssl::resize_bilinear(img, ck.model.cfg.image_size, ck.model.cfg.image_size);
    for (auto& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
  }

  std::vector<retssl::model::AttnToken> tokens;
  std::stringstream ss(tokens_csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "cls") tokens.push_back(retssl::model::AttnToken::kCls);
    else if (tok == "age") tokens.push_back(retssl::model::AttnToken::kAge);
    else if (tok == "gender") tokens.push_back(retssl::model::AttnToken::kGender);
    else throw std::invalid_argument("unknown token '" + tok + "' (use cls,age,gender)");
  }
  if (layer < 0) layer = ck.model.cfg.enc_depth - 1;

  const fs::path out_dir = resolve_out(out);
  json cfg{{"checkpoint", checkpoint}, {"image", image_path}, {"layer", layer},
           {"tokens", tokens_csv}};
  RunManifest rm(out_dir, "attn", cfg, ck.seed);
  const auto result = retssl::eval::export_attention(
      ck.model, img, tokens, layer, out_dir,
      fs::path(image_path).stem().string() + "_attn");
  for (const auto& f : result.files) std::cout << f.string() << "\n";
  rm.finish(result.files);
  return 0;
}

int cmd_schedule(double r0, double rT, int T, const std::string& out) {
  const retssl::MaskSchedule schedule(r0, rT, T);
  std::string tsv;
  char buf[64];
  for (int t = 0; t <= T; ++t) {
    std::snprintf(buf, sizeof buf, "%d\t%.17g\n", t, retssl::masking_ratio(t, schedule));
    tsv += buf;
  }
  if (out.empty()) {
    std::cout << tsv;
    return 0;
  }
  const fs::path out_dir = resolve_out(out);
  RunManifest rm(out_dir, "schedule", json{{"r0", r0}, {"rT", rT}, {"T", T}}, 0);
  write_file_atomic(out_dir / "schedule.tsv", tsv);
  std::cout << (out_dir / "schedule.tsv").string() << "\n";
  rm.finish({out_dir / "schedule.tsv"});
  return 0;
}

int cmd_pairs_stats(const std::string& manifest, const std::string& out) {
  const auto records = retssl::load_manifest(manifest, retssl::LoadOptions{false, false});
  const auto index = retssl::build_pair_index(records);
  long cross = 0;
  for (const auto& p : index.pairs) cross += p.cross_laterality ? 1 : 0;
  long images = 0;
  for (const auto& r : records) images += static_cast<long>(r.images.size());

  json stats{{"patients", records.size()},
             {"images", images},
             {"pairs", index.total()},
             {"cross_laterality_pairs", cross}};
  auto& per = stats["pairs_per_patient"] = json::array();
  for (size_t i = 0; i < records.size(); ++i)
    per.push_back({{"patient_id", records[i].patient_id},
                   {"pairs", index.per_patient_counts[i]}});
  std::cout << stats.dump(2) << "\n";
  if (!out.empty()) {
    const fs::path out_dir = resolve_out(out);
    RunManifest rm(out_dir, "pairs-stats", json{{"manifest", manifest}}, 0);
    write_file_atomic(out_dir / "pairs_stats.json", stats.dump(2) + "\n");
    rm.finish({out_dir / "pairs_stats.json"});
  }
  return 0;
}

const char* categorize(const std::exception& e) {
  if (dynamic_cast<const retssl::ManifestError*>(&e)) return "manifest";
  if (dynamic_cast<const retssl::model::CheckpointError*>(&e)) return "checkpoint";
  if (dynamic_cast<const retssl::synth::SynthError*>(&e)) return "synth";
  if (dynamic_cast<const retssl::train::TrainError*>(&e)) return "train";
  if (dynamic_cast<const retssl::eval::ProbeError*>(&e)) return "eval";
  if (dynamic_cast<const retssl::eval::MetricError*>(&e)) return "eval";
  if (dynamic_cast<const std::invalid_argument*>(&e)) return "config";
  return "runtime";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised fundus pretraining toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // synth-gen
  retssl::synth::SynthSpec spec;
  std::string sg_out;
  auto* sg = app.add_subcommand("synth-gen", "Generate a synthetic fundus dataset");
  sg->add_option("--n", spec.n_patients, "Number of patients")->capture_default_str();
  sg->add_option("--out", sg_out, "Output directory")->required();
  sg->add_option("--seed", spec.seed, "Random seed")->capture_default_str();
  sg->add_option("--scanners", spec.scanners, "Scanners per eye (1=A, 2=A+B)")
      ->check(CLI::Range(1, 2))
      ->capture_default_str();
  sg->add_option("--image-size", spec.image_size, "Square image size")->capture_default_str();
  sg->add_option("--radius-fraction", spec.radius_fraction, "Retina disc radius / width")
      ->capture_default_str();
  sg->add_option("--lesion-max", spec.lesion_max, "Max lesion count (uniform from 0)")
      ->capture_default_str();
  sg->add_option("--noise-sigma", spec.noise_sigma, "Per-image Gaussian noise sigma")
      ->capture_default_str();

  // pretrain
  std::string pt_manifest, pt_config, pt_out, pt_resume;
  std::uint64_t pt_seed = 0;
  int pt_workers = 0;
  auto* pt = app.add_subcommand("pretrain", "Run self-supervised pretraining");
  pt->add_option("--manifest", pt_manifest, "Training manifest CSV")->required();
  pt->add_option("--config", pt_config, "TrainConfig JSON file (defaults when omitted)");
  pt->add_option("--out", pt_out, "Output directory")->required();
  pt->add_option("--resume", pt_resume, "Checkpoint to resume from");
  auto* pt_seed_opt = pt->add_option("--seed", pt_seed, "Random seed (overrides config)");
  pt->add_option("--workers", pt_workers, "Data/compute worker threads");
  {
    // keep the config-schema documentation generated from the schema itself
    const json defaults = retssl::train::TrainConfig{};
    std::string keys;
    for (auto it = defaults.begin(); it != defaults.end(); ++it)
      keys += (keys.empty() ? "" : ", ") + it.key();
    pt->footer("Config JSON keys: " + keys);
  }

  // probe
  std::string pr_checkpoint, pr_manifest, pr_labels, pr_task = "disease",
              pr_mode = "probe", pr_out;
  std::uint64_t pr_seed = 0;
  int pr_workers = 0;
  bool pr_mean_pool = false;
  auto* pr = app.add_subcommand("probe", "Evaluate a checkpoint on a downstream task");
  pr->add_option("--checkpoint", pr_checkpoint, "Pretrained checkpoint")->required();
  pr->add_option("--manifest", pr_manifest, "Manifest CSV covering all splits")->required();
  pr->add_option("--labels", pr_labels, "labels.csv with split assignments")->required();
  pr->add_option("--task", pr_task, "disease | gender | age")
      ->check(CLI::IsMember({"disease", "gender", "age"}))
      ->capture_default_str();
  pr->add_option("--mode", pr_mode, "probe (frozen encoder) | finetune")
      ->check(CLI::IsMember({"probe", "finetune"}))
      ->capture_default_str();
  pr->add_option("--out", pr_out, "Output directory")->required();
  pr->add_option("--seed", pr_seed, "Random seed")->capture_default_str();
  pr->add_option("--workers", pr_workers, "Worker threads");
  pr->add_flag("--mean-pool", pr_mean_pool, "Mean-pooled patch features instead of CLS");

  // attn
  std::string at_checkpoint, at_image, at_tokens = "cls,age,gender", at_out;
  int at_layer = -1;
  auto* at = app.add_subcommand("attn", "Export attention heatmaps for one image");
  at->add_option("--checkpoint", at_checkpoint, "Pretrained checkpoint")->required();
  at->add_option("--image", at_image, "Input PNG image")->required();
  at->add_option("--layer", at_layer, "Encoder layer (-1 = last)")->capture_default_str();
  at->add_option("--tokens", at_tokens, "Comma list of cls,age,gender")
      ->capture_default_str();
  at->add_option("--out", at_out, "Output directory")->required();

  // schedule
  double sc_r0 = 0.985, sc_rT = 0.85;
  int sc_T = 300;
  std::string sc_out;
  auto* sc = app.add_subcommand("schedule", "Print the masking-ratio schedule as TSV");
  sc->add_option("--r0", sc_r0, "Ratio at epoch 0")->capture_default_str();
  sc->add_option("--rT", sc_rT, "Ratio at epoch T")->capture_default_str();
  sc->add_option("--T", sc_T, "Total epochs")->capture_default_str();
  sc->add_option("--out", sc_out, "Output directory (stdout when omitted)");

  // pairs-stats
  std::string ps_manifest, ps_out;
  auto* ps = app.add_subcommand("pairs-stats", "Report same-patient pair statistics");
  ps->add_option("--manifest", ps_manifest, "Manifest CSV")->required();
  ps->add_option("--out", ps_out, "Output directory (stdout only when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sg->parsed()) return cmd_synth_gen(spec, sg_out);
    if (pt->parsed())
      return cmd_pretrain(pt_manifest, pt_config, pt_out,
                          pt_seed_opt->count() ? std::optional<std::uint64_t>(pt_seed)
                                               : std::nullopt,
                          pt_resume.empty() ? std::nullopt
                                            : std::optional<std::string>(pt_resume),
                          pt_workers);
    if (pr->parsed())
      return cmd_probe(pr_checkpoint, pr_manifest, pr_labels, pr_task, pr_mode, pr_out,
                       pr_seed, pr_workers, pr_mean_pool);
    if (at->parsed()) return cmd_attn(at_checkpoint, at_image, at_layer, at_tokens, at_out);
    if (sc->parsed()) return cmd_schedule(sc_r0, sc_rT, sc_T, sc_out);
    if (ps->parsed()) return cmd_pairs_stats(ps_manifest, ps_out);
  } catch (const std::exception& e) {
    std::cerr << "error [" << categorize(e) << "]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
