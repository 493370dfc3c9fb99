#include "retssl/eval/probe.hpp"

#include "retssl/losses.hpp"
#include "retssl/model/patchify.hpp"
#include "retssl/parallel.hpp"
#include "retssl/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace retssl::eval {

namespace fs = std::filesystem;

namespace {

// Forward one image with no gradient bookkeeping and return the requested
// summary row.
nn::Mat<float> feature_row(const model::VitModel<float>& net, const Image& img,
                           bool mean_pool) {
  nn::Tape<float> tape;
  auto tm = model::TapeModel<float>::bind(tape, net, false);
  auto enc = model::encode(tm, model::patchify<float>(img, net.cfg.patch_size), nullptr);
  if (!mean_pool) return tape.val(enc.cls);
  return tape.val(enc.patch_tokens).colwise().mean();
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_two_classes(const std::vector<int>& labels, const char* which) {
  bool has0 = false, has1 = false;
  for (int y : labels) (y ? has1 : has0) = true;
  if (!has0 || !has1)
    throw ProbeError(std::string("probe needs both classes in the ") + which + " split");
}

}  // namespace

nn::Mat<float> extract_features(const model::VitModel<float>& net,
                                const std::vector<const Image*>& images, bool mean_pool,
                                int workers) {
  if (images.empty()) throw ProbeError("extract_features: no images");
  nn::Mat<float> out(static_cast<Eigen::Index>(images.size()), net.cfg.enc_dim);
  parallel_for(static_cast<long>(images.size()), workers, [&](long i) {
    out.row(i) = feature_row(net, *images[static_cast<size_t>(i)], mean_pool);
  });
  return out;
}

std::vector<double> LinearProbe::scores(const nn::Mat<float>& features) const {
  std::vector<double> out(static_cast<size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const nn::Mat<float> z = (features.row(i) - mean.row(0)).cwiseProduct(inv_std.row(0));
    out[static_cast<size_t>(i)] = static_cast<double>((z * w)(0, 0)) + bias;
  }
  return out;
}

LinearProbe train_linear_probe(const nn::Mat<float>& train_features,
                               const std::vector<int>& train_labels,
                               const nn::Mat<float>& val_features,
                               const std::vector<int>& val_labels, const ProbeConfig& cfg) {
  if (train_features.rows() != static_cast<Eigen::Index>(train_labels.size()) ||
      val_features.rows() != static_cast<Eigen::Index>(val_labels.size()))
    throw ProbeError("probe: features/labels size mismatch");
  check_two_classes(train_labels, "train");
  check_two_classes(val_labels, "validation");

  const Eigen::Index n = train_features.rows(), d = train_features.cols();
  LinearProbe probe;
  probe.mean = train_features.colwise().mean();
  probe.inv_std.resize(1, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const float mu = probe.mean(0, j);
    float var = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const float dv = train_features(i, j) - mu;
      var += dv * dv;
    }
    var /= static_cast<float>(n);
    probe.inv_std(0, j) = 1.0f / std::sqrt(var + 1e-8f);
  }

  const nn::Mat<float> x = ((train_features.rowwise() - probe.mean.row(0)).array().rowwise() *
                            probe.inv_std.row(0).array())
                               .matrix();
  probe.w = nn::Mat<float>::Zero(d, 1);
  probe.bias = 0;

  nn::Mat<float> best_w = probe.w;
  float best_bias = 0;
  probe.best_val_auroc = -1;
  const float lr = static_cast<float>(cfg.lr_probe);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // full-batch logistic gradient
    nn::Mat<float> gw = nn::Mat<float>::Zero(d, 1);
    float gb = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = static_cast<double>((x.row(i) * probe.w)(0, 0)) + probe.bias;
      const float err = static_cast<float>(sigmoid(z) - train_labels[static_cast<size_t>(i)]);
      gw += err * x.row(i).transpose();
      gb += err;
    }
    probe.w -= (lr / n) * gw;
    probe.bias -= (lr / n) * gb;

    const double val = auroc(probe.scores(val_features), val_labels);
    if (val > probe.best_val_auroc) {
      probe.best_val_auroc = val;
      probe.best_epoch = epoch;
      best_w = probe.w;
      best_bias = probe.bias;
    }
  }
  probe.w = best_w;
  probe.bias = best_bias;
  return probe;
}

std::vector<double> FineTuneResult::scores(const std::vector<const Image*>& images,
                                           bool mean_pool, int workers) const {
  const auto feats = extract_features(net, images, mean_pool, workers);
  std::vector<double> out(static_cast<size_t>(feats.rows()));
  for (Eigen::Index i = 0; i < feats.rows(); ++i) {
    const auto logits = feats.row(i) * head_w + head_b.row(0);
    out[static_cast<size_t>(i)] = static_cast<double>(logits(0, 1) - logits(0, 0));
  }
  return out;
}

FineTuneResult fine_tune(const model::VitModel<float>& net,
                         const std::vector<const Image*>& train_images,
                         const std::vector<int>& train_labels,
                         const std::vector<const Image*>& val_images,
                         const std::vector<int>& val_labels, const ProbeConfig& cfg) {
  if (train_images.size() != train_labels.size() || val_images.size() != val_labels.size())
    throw ProbeError("fine_tune: images/labels size mismatch");
  check_two_classes(train_labels, "train");
  check_two_classes(val_labels, "validation");

  FineTuneResult ft;
  ft.net = net;
  {
    Rng rng(derive_seed({cfg.seed, RngStream::kProbe, 0}));
    ft.head_w.resize(net.cfg.enc_dim, 2);
    for (Eigen::Index i = 0; i < ft.head_w.size(); ++i)
      ft.head_w.data()[i] = static_cast<float>(rng.truncated_normal(0.02));
    ft.head_b = nn::Mat<float>::Zero(1, 2);
  }

  const long n = static_cast<long>(train_images.size());
  const float lr = static_cast<float>(cfg.lr_finetune);
  auto best_net = ft.net;
  auto best_w = ft.head_w;
  auto best_b = ft.head_b;
  ft.best_val_auroc = -1;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<long> order(n);
    for (long i = 0; i < n; ++i) order[i] = i;
    Rng(derive_seed({cfg.seed, RngStream::kProbe, epoch})).shuffle(order.begin(), order.end());

    for (long at = 0; at < n; at += cfg.batch_size) {
      const long bsz = std::min<long>(cfg.batch_size, n - at);
      std::vector<nn::Mat<float>> grads(ft.net.params.count());
      for (size_t p = 0; p < ft.net.params.count(); ++p) {
        const auto& v = ft.net.params.entries[p].value;
        grads[p] = nn::Mat<float>::Zero(v.rows(), v.cols());
      }
      nn::Mat<float> gw = nn::Mat<float>::Zero(ft.head_w.rows(), 2);
      nn::Mat<float> gb = nn::Mat<float>::Zero(1, 2);

      for (long i = 0; i < bsz; ++i) {
        const long idx = order[at + i];
        nn::Tape<float> tape;
        auto tm = model::TapeModel<float>::bind(tape, ft.net, true);
        auto enc = model::encode(
            tm, model::patchify<float>(*train_images[static_cast<size_t>(idx)],
                                       ft.net.cfg.patch_size),
            nullptr);
        auto feat = enc.cls;
        if (cfg.mean_pool_features) {
          const int np = ft.net.cfg.n_patches();
          feat = tape.matmul(
              tape.constant(nn::Mat<float>::Constant(1, np, 1.0f / static_cast<float>(np))),
              enc.patch_tokens);
        }
        auto wi = tape.input(ft.head_w, true);
        auto bi = tape.input(ft.head_b, true);
        auto logits = tape.add_rowvec(tape.matmul(feat, wi), bi);
        auto ce = tape.cross_entropy_with_labels(logits,
                                                 {train_labels[static_cast<size_t>(idx)]});
        tape.backward_weighted({{ce, 1.0f / static_cast<float>(bsz)}});
        for (size_t p = 0; p < ft.net.params.count(); ++p)
          grads[p] += tape.grad(tm.refs[p]);
        gw += tape.grad(wi);
        gb += tape.grad(bi);
      }
      for (size_t p = 0; p < ft.net.params.count(); ++p)
        ft.net.params.entries[p].value -= lr * grads[p];
      ft.head_w -= lr * gw;
      ft.head_b -= lr * gb;
    }

    const double val = auroc(ft.scores(val_images, cfg.mean_pool_features, cfg.workers),
                             val_labels);
    if (val > ft.best_val_auroc) {
      ft.best_val_auroc = val;
      ft.best_epoch = epoch;
      best_net = ft.net;
      best_w = ft.head_w;
      best_b = ft.head_b;
    }
  }
  ft.net = std::move(best_net);
  ft.head_w = std::move(best_w);
  ft.head_b = std::move(best_b);
  return ft;
}

std::vector<double> predict_age_years(const model::VitModel<float>& net,
                                      const std::vector<const Image*>& images, int workers) {
  if (!net.cfg.use_meta_tokens)
    throw ProbeError("age prediction needs a model with meta tokens");
  std::vector<double> out(images.size());
  parallel_for(static_cast<long>(images.size()), workers, [&](long i) {
    nn::Tape<float> tape;
    auto tm = model::TapeModel<float>::bind(tape, net, false);
    auto enc = model::encode(
        tm, model::patchify<float>(*images[static_cast<size_t>(i)], net.cfg.patch_size),
        nullptr);
    auto meta = model::predict_meta(tm, enc);
    out[static_cast<size_t>(i)] = static_cast<double>(tape.val(meta.age)(0, 0)) * 100.0;
  });
  return out;
}

double pair_consistency_distance(const model::VitModel<float>& net, const Image& a,
                                 const Image& b, bool mirrored) {
  nn::Tape<float> tape;
  auto tm = model::TapeModel<float>::bind(tape, net, false);
  auto enc_a = model::encode(tm, model::patchify<float>(a, net.cfg.patch_size), nullptr);
  auto enc_b = model::encode(tm, model::patchify<float>(b, net.cfg.patch_size), nullptr);
  std::vector<int> all(net.cfg.n_patches());
  std::iota(all.begin(), all.end(), 0);
  const auto counterpart = consistency_correspondence(all, net.cfg.grid(), mirrored);
  auto term = consistency_sum(tape, enc_a.patch_tokens, enc_b.patch_tokens, counterpart);
  return static_cast<double>(tape.val(term.sum)(0, 0)) / static_cast<double>(term.count);
}

std::vector<LabelRow> parse_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ProbeError("cannot open labels file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ProbeError("empty labels file: " + path.string());
  if (line != "patient_id,split,age_years,gender,disease")
    throw ProbeError("unexpected labels header: " + line);
  std::vector<LabelRow> rows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string pid, split, age, gender, disease;
    if (!std::getline(ss, pid, ',') || !std::getline(ss, split, ',') ||
        !std::getline(ss, age, ',') || !std::getline(ss, gender, ',') ||
        !std::getline(ss, disease))
      throw ProbeError(path.string() + ":" + std::to_string(line_no) + ": expected 5 fields");
    LabelRow row;
    row.patient_id = pid;
    row.split = split;
    row.age_years = std::stod(age);
    row.gender = parse_gender(gender);
    row.disease = std::stoi(disease);
    if (row.disease != 0 && row.disease != 1)
      throw ProbeError(path.string() + ":" + std::to_string(line_no) + ": disease must be 0/1");
    rows.push_back(std::move(row));
  }
  return rows;
}

const char* attn_token_name(model::AttnToken t) {
  switch (t) {
    case model::AttnToken::kCls: return "cls";
    case model::AttnToken::kAge: return "age";
    default: return "gender";
  }
}

AttentionExport export_attention(const model::VitModel<float>& net, const Image& image,
                                 const std::vector<model::AttnToken>& tokens, int layer,
                                 const fs::path& out_dir, const std::string& stem) {
  fs::create_directories(out_dir);
  nn::Tape<float> tape;
  auto tm = model::TapeModel<float>::bind(tape, net, false);
  auto enc = model::encode(tm, model::patchify<float>(image, net.cfg.patch_size), nullptr,
                           true);

  AttentionExport out;
  for (auto token : tokens) {
    const auto heat = model::attention_heatmap(tape, enc, net.cfg, token, layer);
    const std::string name = attn_token_name(token);

    const fs::path tsv_path = out_dir / (stem + "_" + name + ".tsv");
    {
      std::ofstream tsv(tsv_path, std::ios::trunc);
      char buf[40];
      for (Eigen::Index r = 0; r < heat.rows(); ++r) {
        for (Eigen::Index c = 0; c < heat.cols(); ++c) {
          std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(heat(r, c)));
          tsv << buf << (c + 1 == heat.cols() ? "\n" : "\t");
        }
      }
    }
    out.files.push_back(tsv_path);

    Image heat_img(static_cast<int>(heat.cols()), static_cast<int>(heat.rows()), 1);
    const float peak = std::max(heat.maxCoeff(), 1e-12f);
    for (Eigen::Index r = 0; r < heat.rows(); ++r)
      for (Eigen::Index c = 0; c < heat.cols(); ++c)
        heat_img.at(static_cast<int>(r), static_cast<int>(c), 0) = heat(r, c) / peak;
    const Image up = resize_bilinear(heat_img, image.width, image.height);

    Image overlay(image.width, image.height, 3);
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) {
        const float h = up.at(y, x, 0);
        // warm single-hue ramp keeps the underlying anatomy readable
        const float hr = h, hg = 0.25f * h, hb = 1.0f - h;
        overlay.at(y, x, 0) = 0.5f * image.at(y, x, 0) + 0.5f * hr;
        overlay.at(y, x, 1) = 0.5f * image.at(y, x, 1) + 0.5f * hg;
        overlay.at(y, x, 2) = 0.5f * image.at(y, x, 2) + 0.5f * hb;
      }
    const fs::path png_path = out_dir / (stem + "_" + name + ".png");
    write_png_rgb8(png_path, overlay);
    out.files.push_back(png_path);

    out.heatmaps.emplace(name, heat);
  }
  return out;
}

}  // namespace retssl::eval
