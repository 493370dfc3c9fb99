// End-to-end acceptance harness: twelve checks of the pretraining recipe,
// each printed as one PASS/FAIL line with the measured values. Exits
// nonzero if any check fails. Checks 8-12 share one synthetic dataset and
// six pretraining runs, so a full pass takes around an hour on one core;
// per-check wall time is included in each line.

#include "retssl/eval/metrics.hpp"
#include "retssl/eval/probe.hpp"
#include "retssl/losses.hpp"
#include "retssl/manifest.hpp"
#include "retssl/masking.hpp"
#include "retssl/model/checkpoint.hpp"
#include "retssl/model/patchify.hpp"
#include "retssl/model/vit.hpp"
#include "retssl/pairing.hpp"
#include "retssl/retina_mask.hpp"
#include "retssl/rng.hpp"
#include "retssl/synth.hpp"
#include "retssl/train/batch.hpp"
#include "retssl/train/engine.hpp"
#include "retssl/train/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace retssl;
using model::ModelConfig;
using model::VitModel;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

void note(const std::string& msg) {
  std::printf("      .. %s\n", msg.c_str());
  std::fflush(stdout);
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[1];
}

std::string read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f.good()) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream f(p);
  if (!f.good()) throw std::runtime_error("cannot read " + p.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(f, line)) out.push_back(line);
  return out;
}

// Shared products of the pretraining checks: the dataset, its splits with
// per-image labels, and the trained encoders for each seed.
struct Shared {
  fs::path work;
  synth::SynthSpec data_spec;
  fs::path train_manifest;
  bool dataset_ready = false;

  std::vector<PatientRecord> recs[3];  // train / val / test
  std::vector<const Image*> images[3];
  std::vector<int> gender[3];
  std::vector<double> age[3];
  double train_mean_age = 0;

  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<VitModel<float>> nets;  // metadata tokens on, one per seed
  std::vector<double> auroc_full;
};

Shared shared;

void prune_epoch_checkpoints(const fs::path& dir) {
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("checkpoint_epoch_", 0) == 0) fs::remove(e.path());
  }
}

void build_dataset() {
  shared.data_spec.n_patients = 200;
  shared.data_spec.scanners = 1;
  shared.data_spec.seed = 7;
  const fs::path dir = shared.work / "dataset";
  note("generating 200-patient dataset under " + dir.string());
  const auto paths = synth::generate_dataset(shared.data_spec, dir);
  shared.train_manifest = paths.split_manifests[0];

  std::map<std::string, eval::LabelRow> by_pid;
  for (const auto& row : eval::parse_labels(paths.labels)) by_pid[row.patient_id] = row;

  LoadOptions no_masks;
  no_masks.with_retina_masks = false;
  no_masks.write_mask_cache = false;
  for (int s = 0; s < 3; ++s) {
    shared.recs[s] = load_manifest(paths.split_manifests[s].string(), no_masks);
    for (const auto& rec : shared.recs[s]) {
      const auto& row = by_pid.at(rec.patient_id);
      for (const auto& img : rec.images) {
        shared.images[s].push_back(&img.pixels);
        shared.gender[s].push_back(gender_class(row.gender));
        shared.age[s].push_back(row.age_years);
      }
    }
  }
  double sum = 0;
  for (double a : shared.age[0]) sum += a;
  shared.train_mean_age = sum / static_cast<double>(shared.age[0].size());
  shared.dataset_ready = true;
}

// One pretraining run at the recipe defaults (TINY encoder, 30 epochs),
// returning the final weights. Per-epoch checkpoints are deleted to bound
// disk use; the final checkpoint stays on disk.
VitModel<float> pretrain_once(std::uint64_t seed, bool meta_tokens) {
  train::TrainConfig cfg;
  cfg.seed = seed;
  if (!meta_tokens) {
    cfg.model.use_meta_tokens = false;
    cfg.weights.lambda_meta = 0;
  }
  const fs::path out =
      shared.work / fmt("%s_seed%llu", meta_tokens ? "full" : "nometa",
                        static_cast<unsigned long long>(seed));
  note(fmt("pretraining %s model, seed %llu (30 epochs)",
           meta_tokens ? "full" : "no-metadata", static_cast<unsigned long long>(seed)));
  const auto res = train::run_pretraining(shared.train_manifest, cfg, out);
  auto ck = model::load_checkpoint(res.final_checkpoint);
  prune_epoch_checkpoints(out);
  return std::move(ck.model);
}

// Frozen-encoder protocol: CLS features, logistic head trained on the train
// split, snapshot chosen on validation, reported on test.
double gender_probe_auroc(const VitModel<float>& net) {
  const auto ftr = eval::extract_features(net, shared.images[0], false, 1);
  const auto fva = eval::extract_features(net, shared.images[1], false, 1);
  const auto fte = eval::extract_features(net, shared.images[2], false, 1);
  const auto probe =
      eval::train_linear_probe(ftr, shared.gender[0], fva, shared.gender[1], {});
  return eval::auroc(probe.scores(fte), shared.gender[2]);
}

// ---------------------------------------------------------------------------
// 1. masking-ratio schedule endpoints, midpoint, monotonicity

Outcome check_schedule() {
  const MaskSchedule s(0.985, 0.85, 300);
  const double dev = std::max({std::abs(masking_ratio(0, s) - 0.985),
                               std::abs(masking_ratio(150, s) - 0.9175),
                               std::abs(masking_ratio(300, s) - 0.85)});
  bool monotone = true;
  for (int t = 1; t <= 300; ++t)
    if (!(masking_ratio(t, s) < masking_ratio(t - 1, s))) monotone = false;
  Outcome o;
  o.pass = dev <= 1e-12 && monotone;
  o.detail = fmt("pinned-epoch deviation %.2e (tol 1e-12), strictly decreasing over 300 epochs: %s",
                 dev, monotone ? "yes" : "NO");
  return o;
}

// ---------------------------------------------------------------------------
// 2. mask sampling respects the eligible region and the visible-count rule

Outcome check_mask_plans() {
  synth::SynthSpec spec;
  spec.n_patients = 50;
  spec.scanners = 1;
  spec.seed = 17;
  Rng ratio_rng(4242);
  long plans = 0, outside = 0, count_bad = 0, partition_bad = 0, images = 0;
  for (long p = 0; p < spec.n_patients; ++p) {
    const auto sp = synth::generate_patient(p, spec);
    for (const auto& img : sp.record.images) {
      ++images;
      const Mask est = estimate_retina_mask(img.pixels);
      const auto elig = patch_eligibility(est, 16);
      const int g = elig.grid_size;
      for (int j = 0; j < 100; ++j) {
        const double ratio = 0.85 + 0.135 * ratio_rng.uniform();
        const auto plan = sample_mask(elig, ratio, static_cast<std::uint64_t>(plans));
        ++plans;
        const long want = std::max<long>(1, std::llround((1.0 - ratio) * elig.count()));
        if (static_cast<long>(plan.visible_indices.size()) != want) ++count_bad;
        for (int v : plan.visible_indices)
          if (!elig.eligible(v / g, v % g)) ++outside;
        std::vector<char> seen(static_cast<size_t>(g) * g, 0);
        for (int v : plan.visible_indices) seen[v] ^= 1;
        for (int m : plan.masked_indices) seen[m] ^= 1;
        if (std::count(seen.begin(), seen.end(), 1) != g * g) ++partition_bad;
      }
    }
  }
  Outcome o;
  o.pass = outside == 0 && count_bad == 0 && partition_bad == 0;
  o.detail = fmt("%ld plans on %ld images: %ld visible outside eligible, %ld count-rule misses, "
                 "%ld partition errors",
                 plans, images, outside, count_bad, partition_bad);
  return o;
}

// ---------------------------------------------------------------------------
// 3. pair enumeration equals the brute-force oracle on random rosters

Outcome check_pair_enumeration() {
  Rng rng(33);
  const Image blank(kImageSize, kImageSize, 3);
  std::vector<PatientRecord> recs;
  std::vector<int> sizes;
  long expected = 0;
  for (int i = 0; i < 60; ++i) {
    const int n = 1 + rng.uniform_int(6);
    sizes.push_back(n);
    expected += static_cast<long>(n) * (n - 1) / 2;
    std::vector<FundusImage> imgs;
    const std::string pid = fmt("R%03d", i);
    for (int k = 0; k < n; ++k)
      imgs.emplace_back(pid, k % 2 ? Eye::kRight : Eye::kLeft, k % 4 < 2 ? "A" : "B", blank);
    recs.emplace_back(pid, std::move(imgs),
                      MetadataLabels(40.0 + i % 50, i % 2 ? Gender::kMale : Gender::kFemale));
  }

  const auto index = build_pair_index(recs);
  long mismatches = 0, foreign = 0;
  for (int i = 0; i < 60; ++i) {
    std::set<std::pair<int, int>> brute;
    for (int a = 0; a < sizes[i]; ++a)
      for (int b = a + 1; b < sizes[i]; ++b) brute.insert({a, b});
    std::set<std::pair<int, int>> got;
    for (const auto& t : enumerate_pairs(recs[i], i)) {
      got.insert({t.image_a, t.image_b});
      if (t.patient_index != i || t.image_a >= t.image_b || t.image_b >= sizes[i]) ++foreign;
      if (t.cross_laterality !=
          (recs[i].images[t.image_a].eye != recs[i].images[t.image_b].eye))
        ++mismatches;
    }
    if (got != brute) ++mismatches;
    if (index.per_patient_counts[i] != static_cast<long>(brute.size())) ++mismatches;
  }
  for (const auto& t : index.pairs)
    if (t.patient_index < 0 || t.patient_index >= 60 || t.image_b >= sizes[t.patient_index])
      ++foreign;

  Outcome o;
  o.pass = index.total() == expected && mismatches == 0 && foreign == 0;
  o.detail = fmt("60 rosters, %ld pairs vs oracle %ld, %ld roster mismatches, %ld foreign pairs",
                 index.total(), expected, mismatches, foreign);
  return o;
}

// ---------------------------------------------------------------------------
// 4. analytic batch gradient vs central finite differences, full model

Outcome check_gradients() {
  const ModelConfig cfg;  // TINY, metadata tokens on
  synth::SynthSpec spec;
  spec.n_patients = 2;
  spec.scanners = 1;
  spec.seed = 23;
  std::vector<train::BatchItem<double>> items;
  for (long p = 0; p < 2; ++p) {
    const auto sp = synth::generate_patient(p, spec);
    const auto& vis = sp.record.images[p == 0 ? 0 : 1];
    const auto& msk = sp.record.images[p == 0 ? 1 : 0];
    train::BatchItem<double> it;
    it.visible_patches = model::patchify<double>(vis.pixels, cfg.patch_size);
    it.masked_patches = model::patchify<double>(msk.pixels, cfg.patch_size);
    it.plan = sample_mask(patch_eligibility(*msk.retina_mask, cfg.patch_size), 0.75,
                          static_cast<std::uint64_t>(500 + p));
    it.mirrored = vis.eye != msk.eye;
    it.age_norm = sp.record.labels.age_normalized();
    it.gender = gender_class(sp.record.labels.gender);
    const int g = it.plan.eligible.grid_size;
    for (int q : it.plan.masked_indices)
      if (it.plan.eligible.eligible(q / g, q % g)) it.qualifying.push_back(q);
    items.push_back(std::move(it));
  }

  auto net = VitModel<double>::init(cfg, 31);
  const auto fx = FeatureExtractor<double>::create(31);
  const LossWeights w;
  const auto res = train::compute_batch<double>(net, fx, items, w, true);

  const double h = 1e-5;
  const int per_entry =
      std::max<int>(2, static_cast<int>((200 + net.params.count() - 1) / net.params.count()));
  Rng pick(99);
  long checked = 0;
  double worst = 0;
  std::string worst_name;
  for (size_t p = 0; p < net.params.count(); ++p) {
    auto& value = net.params.entries[p].value;
    for (int k = 0; k < per_entry; ++k) {
      const auto i = static_cast<Eigen::Index>(pick.uniform_int(static_cast<int>(value.size())));
      const double saved = value.data()[i];
      value.data()[i] = saved + h;
      const double up = train::compute_batch<double>(net, fx, items, w, false).report.total;
      value.data()[i] = saved - h;
      const double down = train::compute_batch<double>(net, fx, items, w, false).report.total;
      value.data()[i] = saved;
      const double fd = (up - down) / (2 * h);
      const double an = res.grads[p](i / value.cols(), i % value.cols());
      // 1e-9 absolute floor: the difference quotient carries ~|loss|*eps/h
      // ~ 3e-11 of roundoff, which dominates on near-zero gradients
      const double rel =
          (std::abs(an - fd) - 1e-9) / std::max(std::abs(an) + std::abs(fd), 1e-12);
      if (rel > worst) {
        worst = rel;
        worst_name = net.params.entries[p].name;
      }
      ++checked;
    }
  }
  Outcome o;
  o.pass = checked >= 200 && worst <= 1e-4;
  o.detail = fmt("%ld coords across all %zu parameter tensors, worst rel err %.2e (tol 1e-4)%s%s",
                 checked, net.params.count(), worst,
                 worst_name.empty() ? "" : " at ", worst_name.c_str());
  return o;
}

// ---------------------------------------------------------------------------
// 5. closed-form loss identities

Outcome check_loss_identities() {
  nn::Tape<double> t;
  auto row = [&](double x, double y) {
    nn::Mat<double> m(1, 2);
    m << x, y;
    return t.constant(std::move(m));
  };
  const std::vector<int> self{0};
  const double c_same = t.val(consistency_sum(t, row(1, 0), row(1, 0), self).sum)(0, 0);
  const double c_orth = t.val(consistency_sum(t, row(1, 0), row(0, 1), self).sum)(0, 0);
  const double c_anti = t.val(consistency_sum(t, row(1, 0), row(-1, 0), self).sum)(0, 0);
  const double ce = t.val(t.cross_entropy_with_labels(row(0, 0), {0}))(0, 0);
  const LossWeights w;
  const double total = LossReport::combine(w, 1, 1, 1, 1, 1);

  const double dev = std::max({std::abs(c_same - 0), std::abs(c_orth - 1), std::abs(c_anti - 2)});
  const double ce_dev = std::abs(ce - std::log(2.0));
  const double total_dev = std::abs(total - 2.76);
  Outcome o;
  o.pass = dev <= 1e-9 && ce_dev <= 1e-9 && total_dev <= 1e-9;
  o.detail = fmt("consistency %.2e/%.6f/%.6f vs 0/1/2, |CE-ln2| %.2e, |combined-2.76| %.2e "
                 "(tol 1e-9)",
                 c_same, c_orth, c_anti, ce_dev, total_dev);
  return o;
}

// ---------------------------------------------------------------------------
// 6. ranking metrics vs quadratic oracles, ties included

double auroc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0;
  long pairs = 0;
  for (size_t i = 0; i < s.size(); ++i)
    for (size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      ++pairs;
    }
  return wins / static_cast<double>(pairs);
}

double auprc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
  std::set<double, std::greater<double>> thresholds(s.begin(), s.end());
  const long n_pos = std::count(y.begin(), y.end(), 1);
  double ap = 0, prev_recall = 0;
  for (double t : thresholds) {
    long tp = 0, fp = 0;
    for (size_t i = 0; i < s.size(); ++i)
      if (s[i] >= t) (y[i] == 1 ? tp : fp)++;
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    ap += (recall - prev_recall) * (static_cast<double>(tp) / static_cast<double>(tp + fp));
    prev_recall = recall;
  }
  return ap;
}

Outcome check_metric_oracles() {
  Rng rng(55);
  double worst_roc = 0, worst_pr = 0;
  for (int d = 0; d < 200; ++d) {
    const int n = 20 + rng.uniform_int(180);
    const bool quantize = d % 2 == 0;
    std::vector<double> s;
    std::vector<int> y;
    for (int i = 0; i < n; ++i) {
      double v = rng.uniform();
      if (quantize) v = std::floor(v * (2 + d % 5)) / (2 + d % 5);
      s.push_back(v);
      y.push_back(rng.bernoulli(0.4) ? 1 : 0);
    }
    y[0] = 1;
    y[1] = 0;
    worst_roc = std::max(worst_roc, std::abs(eval::auroc(s, y) - auroc_oracle(s, y)));
    worst_pr = std::max(worst_pr, std::abs(eval::auprc(s, y) - auprc_oracle(s, y)));
  }
  Outcome o;
  o.pass = worst_roc <= 1e-9 && worst_pr <= 1e-9;
  o.detail = fmt("200 draws with ties: max |auroc-oracle| %.2e, max |auprc-oracle| %.2e "
                 "(tol 1e-9)",
                 worst_roc, worst_pr);
  return o;
}

// ---------------------------------------------------------------------------
// 7. repeated steps on one fixed batch cut the loss at least in half

Outcome check_overfit() {
  const ModelConfig cfg;
  synth::SynthSpec spec;
  spec.n_patients = 4;
  spec.scanners = 1;
  spec.seed = 29;
  std::vector<train::BatchItem<float>> items;
  for (long p = 0; p < 4; ++p) {
    const auto sp = synth::generate_patient(p, spec);
    PairSample pair(sp.record.images[0], sp.record.images[1], sp.record.labels);
    const auto elig = patch_eligibility(*pair.view_masked.retina_mask, cfg.patch_size);
    const auto plan = sample_mask(elig, 0.9, static_cast<std::uint64_t>(700 + p));
    items.push_back(train::make_batch_item<float>(pair, plan, cfg.patch_size));
  }

  auto net = VitModel<float>::init(cfg, 41);
  const auto fx = FeatureExtractor<float>::create(41);
  train::TrainConfig tc;
  tc.base_lr = 1e-3;
  train::AdamW opt(tc.adam_beta1, tc.adam_beta2, 1e-8, tc.weight_decay);
  opt.init(net.params);

  double first = 0, last = 0;
  bool finite = true;
  for (long step = 0; step < 200; ++step) {
    const auto log = train::train_step(net, fx, opt, items, tc, 0, step, 200, 10);
    if (!std::isfinite(log.report.total)) finite = false;
    if (step == 0) first = log.report.total;
    last = log.report.total;
  }
  Outcome o;
  o.pass = finite && last <= 0.5 * first;
  o.detail = fmt("fixed 4-pair batch: step-1 total %.4f, step-200 total %.4f (ratio %.3f, "
                 "need <=0.5), all finite: %s",
                 first, last, last / first, finite ? "yes" : "NO");
  return o;
}

// ---------------------------------------------------------------------------
// 8. pretraining makes frozen features predictive of the planted metadata

Outcome check_probe_efficacy() {
  build_dataset();
  std::vector<double> aurocs, maes, improvements;
  double baseline = 0;
  for (auto seed : shared.seeds) {
    shared.nets.push_back(pretrain_once(seed, true));
    const auto& net = shared.nets.back();
    const double a = gender_probe_auroc(net);

    const auto preds = eval::predict_age_years(net, shared.images[2], 1);
    double mae = 0, base = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
      mae += std::abs(preds[i] - shared.age[2][i]);
      base += std::abs(shared.train_mean_age - shared.age[2][i]);
    }
    mae /= static_cast<double>(preds.size());
    base /= static_cast<double>(preds.size());
    baseline = base;
    aurocs.push_back(a);
    maes.push_back(mae);
    improvements.push_back((base - mae) / base);
    note(fmt("seed %llu: gender AUROC %.3f, age MAE %.2fy (mean-baseline %.2fy)",
             static_cast<unsigned long long>(seed), a, mae, base));
  }
  shared.auroc_full = aurocs;
  const double med_a = median3(aurocs);
  const double med_imp = median3(improvements);
  Outcome o;
  o.pass = med_a >= 0.75 && med_imp >= 0.10;
  o.detail = fmt("3-seed medians: gender AUROC %.3f (%.3f/%.3f/%.3f, need >=0.75); age MAE "
                 "%.2fy vs %.2fy baseline, improvement %.1f%% (need >=10%%)",
                 med_a, aurocs[0], aurocs[1], aurocs[2], median3(maes), baseline,
                 100 * med_imp);
  return o;
}

// ---------------------------------------------------------------------------
// 9. metadata tokens do not hurt the gender probe (ablation direction)

Outcome check_ablation_direction() {
  if (!shared.dataset_ready || shared.nets.size() != 3)
    throw std::runtime_error("needs the check-8 pretraining runs");
  std::vector<double> ablation;
  for (auto seed : shared.seeds) {
    const auto net = pretrain_once(seed, false);
    ablation.push_back(gender_probe_auroc(net));
    note(fmt("seed %llu: no-metadata gender AUROC %.3f",
             static_cast<unsigned long long>(seed), ablation.back()));
  }
  const double med_full = median3(shared.auroc_full);
  const double med_abl = median3(ablation);
  Outcome o;
  o.pass = med_full >= med_abl;
  o.detail = fmt("median gender AUROC: full %.3f vs no-metadata %.3f (%.3f/%.3f/%.3f), need "
                 "full >= ablation",
                 med_full, med_abl, ablation[0], ablation[1], ablation[2]);
  return o;
}

// ---------------------------------------------------------------------------
// 10. consistency distance separates same-patient from cross-patient pairs

Outcome check_consistency_gap() {
  if (shared.nets.size() != 3) throw std::runtime_error("needs the check-8 pretraining runs");
  const auto& test = shared.recs[2];
  int wins = 0;
  std::string per_seed;
  for (size_t s = 0; s < shared.nets.size(); ++s) {
    double same = 0, cross = 0;
    const long n = static_cast<long>(test.size());
    for (long i = 0; i < n; ++i) {
      const auto& a = test[i].images[0].pixels;
      same += eval::pair_consistency_distance(shared.nets[s], a, test[i].images[1].pixels, true);
      cross += eval::pair_consistency_distance(shared.nets[s], a,
                                               test[(i + 1) % n].images[1].pixels, true);
    }
    same /= static_cast<double>(n);
    cross /= static_cast<double>(n);
    if (same < cross) ++wins;
    per_seed += fmt("%s%.4f<%.4f", per_seed.empty() ? "" : ", ", same, cross);
  }
  Outcome o;
  o.pass = wins == 3;
  o.detail = fmt("mean same-patient vs cross-patient distance per seed: %s; lower on %d/3 seeds",
                 per_seed.c_str(), wins);
  return o;
}

// ---------------------------------------------------------------------------
// 11. bitwise-deterministic logs and exact checkpoint resume

Outcome check_determinism_resume() {
  synth::SynthSpec spec;
  spec.n_patients = 12;
  spec.scanners = 1;
  spec.seed = 19;
  const fs::path ds = shared.work / "dataset_small";
  const auto manifest = synth::generate_dataset(spec, ds).manifest;

  train::TrainConfig cfg;
  cfg.epochs = 4;
  cfg.warmup_epochs = 1;
  cfg.seed = 77;
  const fs::path a = shared.work / "det_a", b = shared.work / "det_b", c = shared.work / "det_c";
  train::run_pretraining(manifest, cfg, a);
  train::run_pretraining(manifest, cfg, b);
  const bool logs_equal = read_bytes(a / "losses.jsonl") == read_bytes(b / "losses.jsonl");

  const fs::path midpoint = a / "checkpoint_epoch_001.bin";
  train::run_pretraining(manifest, cfg, c, &midpoint);
  const auto full_log = read_lines(a / "losses.jsonl");
  const auto tail_log = read_lines(c / "losses.jsonl");
  bool resume_logs_equal = tail_log.size() == 2 && full_log.size() == 4;
  for (size_t i = 0; resume_logs_equal && i < tail_log.size(); ++i)
    resume_logs_equal = tail_log[i] == full_log[full_log.size() - tail_log.size() + i];
  const bool final_equal =
      read_bytes(a / "checkpoint_final.bin") == read_bytes(c / "checkpoint_final.bin");

  Outcome o;
  o.pass = logs_equal && resume_logs_equal && final_equal;
  o.detail = fmt("rerun logs byte-identical: %s; resumed run reproduces the last %zu/4 log "
                 "lines: %s; final checkpoints byte-identical: %s",
                 logs_equal ? "yes" : "NO", tail_log.size(), resume_logs_equal ? "yes" : "NO",
                 final_equal ? "yes" : "NO");
  return o;
}

// ---------------------------------------------------------------------------
// 12. metadata-token attention concentrates inside the retina disc

Outcome check_attention_mass() {
  if (shared.nets.size() != 3) throw std::runtime_error("needs the check-8 pretraining runs");
  const ModelConfig cfg;  // matches the pretrained nets
  const int g = cfg.grid(), ps = cfg.patch_size;
  const Mask disc = synth::analytic_retina_mask(shared.data_spec);
  nn::Mat<float> frac = nn::Mat<float>::Zero(g, g);
  for (int r = 0; r < g; ++r)
    for (int c = 0; c < g; ++c) {
      int inside = 0;
      for (int y = 0; y < ps; ++y)
        for (int x = 0; x < ps; ++x) inside += disc.at(r * ps + y, c * ps + x);
      frac(r, c) = static_cast<float>(inside) / static_cast<float>(ps * ps);
    }
  const double uniform_mass = frac.sum() / static_cast<float>(g * g);

  std::vector<double> age_mass, gender_mass;
  for (const auto& net : shared.nets) {
    double age_sum = 0, gender_sum = 0;
    for (const Image* img : shared.images[2]) {
      nn::Tape<float> tape;
      auto tm = model::TapeModel<float>::bind(tape, net, false);
      const auto enc = model::encode(tm, model::patchify<float>(*img, ps), nullptr, true);
      for (auto token : {model::AttnToken::kAge, model::AttnToken::kGender}) {
        const auto heat = model::attention_heatmap(tape, enc, cfg, token, cfg.enc_depth - 1);
        const double mass = (heat.array() * frac.array()).sum() / heat.sum();
        (token == model::AttnToken::kAge ? age_sum : gender_sum) += mass;
      }
    }
    const auto n = static_cast<double>(shared.images[2].size());
    age_mass.push_back(age_sum / n);
    gender_mass.push_back(gender_sum / n);
  }
  const double med_age = median3(age_mass), med_gender = median3(gender_mass);
  Outcome o;
  o.pass = med_age >= 0.6 && med_gender >= 0.6;
  o.detail = fmt("median in-retina attention mass: age token %.3f, gender token %.3f "
                 "(uniform baseline %.3f, need >=0.6)",
                 med_age, med_gender, uniform_mass);
  return o;
}

}  // namespace

int main() {
  shared.work = fs::temp_directory_path() / "retssl_acceptance";
  fs::remove_all(shared.work);
  fs::create_directories(shared.work);
  std::printf("retssl acceptance harness (work dir %s)\n\n", shared.work.string().c_str());
  std::fflush(stdout);

  struct Check {
    const char* name;
    std::function<Outcome()> fn;
  };
  const std::vector<Check> checks = {
      {"mask schedule", check_schedule},
      {"mask sampling", check_mask_plans},
      {"pair enumeration", check_pair_enumeration},
      {"batch gradients", check_gradients},
      {"loss identities", check_loss_identities},
      {"metric oracles", check_metric_oracles},
      {"overfit one batch", check_overfit},
      {"frozen-probe efficacy", check_probe_efficacy},
      {"metadata ablation", check_ablation_direction},
      {"consistency gap", check_consistency_gap},
      {"determinism and resume", check_determinism_resume},
      {"attention location", check_attention_mass},
  };

  int failures = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (size_t i = 0; i < checks.size(); ++i) {
    const auto c0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = checks[i].fn();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = fmt("exception: %s", e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - c0).count();
    if (!out.pass) ++failures;
    std::printf("[%2zu] %s  %s: %s (%.1fs)\n", i + 1, out.pass ? "PASS" : "FAIL",
                checks[i].name, out.detail.c_str(), secs);
    std::fflush(stdout);
  }
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("\n%zu/%zu checks passed in %.0fs\n", checks.size() - failures, checks.size(),
              total);
  return failures == 0 ? 0 : 1;
}
