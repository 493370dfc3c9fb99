#pragma once

#include "retssl/eval/metrics.hpp"
#include "retssl/model/vit.hpp"
#include "retssl/types.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace retssl::eval {

struct ProbeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProbeConfig {
  enum class Mode { kLinearProbe, kFineTune };
  Mode mode = Mode::kLinearProbe;
  int epochs = 50;
  int batch_size = 16;
  double lr_probe = 1e-3;
  double lr_finetune = 5e-5;
  bool mean_pool_features = false;  // CLS output unless set
  std::uint64_t seed = 0;
  int workers = 1;
};

// Full-visibility forward; one row per image. Deterministic, parallel over
// images.
nn::Mat<float> extract_features(const model::VitModel<float>& net,
                                const std::vector<const Image*>& images, bool mean_pool,
                                int workers);

// Logistic head on standardized features, full-batch gradient descent.
// Snapshot selection by validation AUROC, ties to the earlier epoch.
struct LinearProbe {
  nn::Mat<float> mean;     // 1 x dim feature standardization
  nn::Mat<float> inv_std;  // 1 x dim
  nn::Mat<float> w;        // dim x 1
  float bias = 0;
  int best_epoch = 0;
  double best_val_auroc = 0;

  std::vector<double> scores(const nn::Mat<float>& features) const;
};

LinearProbe train_linear_probe(const nn::Mat<float>& train_features,
                               const std::vector<int>& train_labels,
                               const nn::Mat<float>& val_features,
                               const std::vector<int>& val_labels, const ProbeConfig& cfg);

// Joint encoder + linear head training with cross-entropy; same validation
// snapshot rule. Returns the selected model and head.
struct FineTuneResult {
  model::VitModel<float> net;
  nn::Mat<float> head_w;  // dim x 2
  nn::Mat<float> head_b;  // 1 x 2
  int best_epoch = 0;
  double best_val_auroc = 0;

  std::vector<double> scores(const std::vector<const Image*>& images, bool mean_pool,
                             int workers) const;
};

FineTuneResult fine_tune(const model::VitModel<float>& net,
                         const std::vector<const Image*>& train_images,
                         const std::vector<int>& train_labels,
                         const std::vector<const Image*>& val_images,
                         const std::vector<int>& val_labels, const ProbeConfig& cfg);

// Meta-head age predictions in years for a set of images (mean of the two
// view heads is not needed here; each image is one full-visibility pass).
std::vector<double> predict_age_years(const model::VitModel<float>& net,
                                      const std::vector<const Image*>& images, int workers);

// Mean (1 - cosine) over mirror-corresponded patch tokens of two
// fully-encoded views; the evaluation-time analog of the pairing loss term.
double pair_consistency_distance(const model::VitModel<float>& net, const Image& a,
                                 const Image& b, bool mirrored);

// labels.csv rows: patient_id,split,age_years,gender,disease
struct LabelRow {
  std::string patient_id;
  std::string split;
  double age_years = 0;
  Gender gender = Gender::kFemale;
  int disease = 0;
};

std::vector<LabelRow> parse_labels(const std::filesystem::path& path);

struct AttentionExport {
  std::map<std::string, nn::Mat<float>> heatmaps;  // token name -> G x G
  std::vector<std::filesystem::path> files;
};

// Writes <stem>_<token>.tsv (raw grid) and <stem>_<token>.png (bilinear
// upsample blended onto the image at alpha 0.5) for each requested token.
AttentionExport export_attention(const model::VitModel<float>& net, const Image& image,
                                 const std::vector<model::AttnToken>& tokens, int layer,
                                 const std::filesystem::path& out_dir,
                                 const std::string& stem);

const char* attn_token_name(model::AttnToken t);

}  // namespace retssl::eval
