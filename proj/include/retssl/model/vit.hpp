#pragma once

#include "retssl/masking.hpp"
#include "retssl/model/config.hpp"
#include "retssl/model/params.hpp"
#include "retssl/nn/tape.hpp"
#include "retssl/rng.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace retssl::model {

// Fixed 2-D sin/cos table: half the dim encodes the row coordinate, half the
// column, each as interleaved [sin, cos] banks over a geometric frequency
// ladder. Not trained, not checkpointed.
template <class S>
nn::Mat<S> sincos_position_table(int grid, int dim) {
  if (dim % 4 != 0) throw std::invalid_argument("position table needs dim % 4 == 0");
  const int half = dim / 2;
  const int quarter = dim / 4;
  nn::Mat<S> out(grid * grid, dim);
  for (int r = 0; r < grid; ++r)
    for (int c = 0; c < grid; ++c) {
      const int row = r * grid + c;
      for (int k = 0; k < quarter; ++k) {
        const double omega = 1.0 / std::pow(10000.0, static_cast<double>(k) / quarter);
        out(row, k) = static_cast<S>(std::sin(r * omega));
        out(row, quarter + k) = static_cast<S>(std::cos(r * omega));
        out(row, half + k) = static_cast<S>(std::sin(c * omega));
        out(row, half + quarter + k) = static_cast<S>(std::cos(c * omega));
      }
    }
  return out;
}

template <class S>
struct VitModel {
  ModelConfig cfg;
  ParamStore<S> params;
  nn::Mat<S> enc_pos;
  nn::Mat<S> dec_pos;

  static VitModel init(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    VitModel m;
    m.cfg = cfg;
    const int d = cfg.enc_dim, dd = cfg.dec_dim, h = cfg.mlp_ratio;

    auto trunc = [&](int rows, int cols) {
      nn::Mat<S> w(rows, cols);
      Rng rng(derive_seed({seed, RngStream::kInit, m.params.count()}));
      for (Eigen::Index i = 0; i < w.size(); ++i)
        w.data()[i] = static_cast<S>(rng.truncated_normal(0.02));
      return w;
    };
    auto zeros = [](int rows, int cols) { return nn::Mat<S>::Zero(rows, cols); };
    auto ones = [](int rows, int cols) { return nn::Mat<S>::Ones(rows, cols); };

    auto& p = m.params;
    p.add("patch_embed.weight", trunc(cfg.patch_values(), d), true);
    p.add("patch_embed.bias", zeros(1, d), false);
    p.add("cls_token", trunc(1, d), false);
    if (cfg.use_meta_tokens) {
      p.add("meta_age_token", trunc(1, d), false);
      p.add("meta_gender_token", trunc(1, d), false);
    }
    p.add("slot_embed", trunc(cfg.n_special(), d), false);

    auto attn_block = [&](const std::string& prefix, int dim) {
      p.add(prefix + ".ln1.gamma", ones(1, dim), false);
      p.add(prefix + ".ln1.beta", zeros(1, dim), false);
      p.add(prefix + ".attn.qkv.weight", trunc(dim, 3 * dim), true);
      p.add(prefix + ".attn.qkv.bias", zeros(1, 3 * dim), false);
      p.add(prefix + ".attn.proj.weight", trunc(dim, dim), true);
      p.add(prefix + ".attn.proj.bias", zeros(1, dim), false);
    };
    auto mlp_block = [&](const std::string& prefix, int dim) {
      p.add(prefix + ".mlp.fc1.weight", trunc(dim, h * dim), true);
      p.add(prefix + ".mlp.fc1.bias", zeros(1, h * dim), false);
      p.add(prefix + ".mlp.fc2.weight", trunc(h * dim, dim), true);
      p.add(prefix + ".mlp.fc2.bias", zeros(1, dim), false);
    };

    for (int i = 0; i < cfg.enc_depth; ++i) {
      const std::string b = "enc." + std::to_string(i);
      attn_block(b, d);
      p.add(b + ".ln2.gamma", ones(1, d), false);
      p.add(b + ".ln2.beta", zeros(1, d), false);
      mlp_block(b, d);
    }
    p.add("enc.norm.gamma", ones(1, d), false);
    p.add("enc.norm.beta", zeros(1, d), false);

    p.add("dec.embed.weight", trunc(d, dd), true);
    p.add("dec.embed.bias", zeros(1, dd), false);
    p.add("mask_token", trunc(1, dd), false);
    for (int i = 0; i < cfg.dec_depth; ++i) {
      const std::string b = "dec." + std::to_string(i);
      attn_block(b, dd);
      p.add(b + ".ln2.gamma", ones(1, dd), false);
      p.add(b + ".ln2.beta", zeros(1, dd), false);
      p.add(b + ".cross.q.weight", trunc(dd, dd), true);
      p.add(b + ".cross.q.bias", zeros(1, dd), false);
      p.add(b + ".cross.kv.weight", trunc(dd, 2 * dd), true);
      p.add(b + ".cross.kv.bias", zeros(1, 2 * dd), false);
      p.add(b + ".cross.proj.weight", trunc(dd, dd), true);
      p.add(b + ".cross.proj.bias", zeros(1, dd), false);
      p.add(b + ".ln3.gamma", ones(1, dd), false);
      p.add(b + ".ln3.beta", zeros(1, dd), false);
      mlp_block(b, dd);
    }
    p.add("dec.norm.gamma", ones(1, dd), false);
    p.add("dec.norm.beta", zeros(1, dd), false);

    p.add("recon_head.weight", trunc(dd, cfg.patch_values()), true);
    p.add("recon_head.bias", zeros(1, cfg.patch_values()), false);
    if (cfg.use_meta_tokens) {
      p.add("age_head.weight", trunc(d, 1), true);
      p.add("age_head.bias", zeros(1, 1), false);
      p.add("gender_head.weight", trunc(d, 2), true);
      p.add("gender_head.bias", zeros(1, 2), false);
    }

    m.enc_pos = sincos_position_table<S>(cfg.grid(), d);
    m.dec_pos = sincos_position_table<S>(cfg.grid(), dd);
    return m;
  }

  template <class T>
  VitModel<T> cast() const {
    VitModel<T> out;
    out.cfg = cfg;
    out.params = params.template cast<T>();
    out.enc_pos = enc_pos.template cast<T>();
    out.dec_pos = dec_pos.template cast<T>();
    return out;
  }
};

// Binds every parameter into one tape as an input node; the training loop
// reads gradients back out by index after the backward sweep.
template <class S>
struct TapeModel {
  using Ref = typename nn::Tape<S>::Ref;

  const VitModel<S>* model = nullptr;
  nn::Tape<S>* tape = nullptr;
  std::vector<Ref> refs;

  static TapeModel bind(nn::Tape<S>& tape, const VitModel<S>& model, bool requires_grad) {
    TapeModel tm;
    tm.model = &model;
    tm.tape = &tape;
    tm.refs.reserve(model.params.count());
    for (const auto& e : model.params.entries)
      tm.refs.push_back(tape.input(e.value, requires_grad));
    return tm;
  }

  Ref p(const std::string& name) const { return refs.at(model->params.index(name)); }
  const ModelConfig& cfg() const { return model->cfg; }
};

template <class S>
struct EncodeResult {
  using Ref = typename nn::Tape<S>::Ref;
  Ref cls;
  Ref meta_age;     // invalid when meta tokens disabled
  Ref meta_gender;  // invalid when meta tokens disabled
  Ref patch_tokens;
  std::vector<int> patch_indices;
  // captured softmax values per (layer, head); rows are the full sequence,
  // columns the key set [CLS, patches...]
  std::vector<std::vector<Ref>> attention;
};

namespace detail {

template <class S>
typename nn::Tape<S>::Ref layer_norm(TapeModel<S>& tm, typename nn::Tape<S>::Ref x,
                                     const std::string& prefix) {
  return tm.tape->layer_norm_rows(x, tm.p(prefix + ".gamma"), tm.p(prefix + ".beta"),
                                  static_cast<S>(1e-6));
}

// Multi-head attention. Queries come from qx rows; keys/values from kx rows.
// When kv_select is non-empty, keys/values are restricted to those rows of
// the fused projection (used to keep meta tokens out of the key set).
template <class S>
typename nn::Tape<S>::Ref attention(TapeModel<S>& tm, typename nn::Tape<S>::Ref q_in,
                                    typename nn::Tape<S>::Ref k_in,
                                    typename nn::Tape<S>::Ref v_in, int dim, int heads,
                                    std::vector<typename nn::Tape<S>::Ref>* capture) {
  auto& t = *tm.tape;
  const int dh = dim / heads;
  const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<typename nn::Tape<S>::Ref> head_out;
  head_out.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    auto qh = t.slice_cols(q_in, h * dh, dh);
    auto kh = t.slice_cols(k_in, h * dh, dh);
    auto vh = t.slice_cols(v_in, h * dh, dh);
    auto probs = t.softmax_rows(t.scale(t.matmul_nt(qh, kh), inv_sqrt));
    if (capture) capture->push_back(probs);
    head_out.push_back(t.matmul(probs, vh));
  }
  return t.concat_cols(head_out);
}

template <class S>
typename nn::Tape<S>::Ref self_attention(TapeModel<S>& tm, typename nn::Tape<S>::Ref x,
                                         const std::string& prefix, int dim, int heads,
                                         const std::vector<int>& kv_rows,
                                         std::vector<typename nn::Tape<S>::Ref>* capture) {
  auto& t = *tm.tape;
  auto qkv = t.add_rowvec(t.matmul(x, tm.p(prefix + ".attn.qkv.weight")),
                          tm.p(prefix + ".attn.qkv.bias"));
  auto q = t.slice_cols(qkv, 0, dim);
  auto kv_src = kv_rows.empty() ? qkv : t.gather_rows(qkv, kv_rows);
  auto k = t.slice_cols(kv_src, dim, dim);
  auto v = t.slice_cols(kv_src, 2 * dim, dim);
  auto o = attention(tm, q, k, v, dim, heads, capture);
  return t.add_rowvec(t.matmul(o, tm.p(prefix + ".attn.proj.weight")),
                      tm.p(prefix + ".attn.proj.bias"));
}

template <class S>
typename nn::Tape<S>::Ref mlp(TapeModel<S>& tm, typename nn::Tape<S>::Ref x,
                              const std::string& prefix) {
  auto& t = *tm.tape;
  auto h = t.gelu(t.add_rowvec(t.matmul(x, tm.p(prefix + ".mlp.fc1.weight")),
                               tm.p(prefix + ".mlp.fc1.bias")));
  return t.add_rowvec(t.matmul(h, tm.p(prefix + ".mlp.fc2.weight")),
                      tm.p(prefix + ".mlp.fc2.bias"));
}

}  // namespace detail

// Encoder forward. `plan` null means full visibility. Token order is
// [CLS, m_age, m_gender, patches...]; patch tokens carry the fixed position
// table, special tokens a learned slot embedding. Meta tokens act as probes:
// they query the sequence but are excluded from everyone's key/value set, so
// nothing downstream of CLS or patch outputs depends on them.
template <class S>
EncodeResult<S> encode(TapeModel<S>& tm, const nn::Mat<S>& patches, const MaskPlan* plan,
                       bool capture_attention = false) {
  auto& t = *tm.tape;
  const ModelConfig& cfg = tm.cfg();
  const int n_patches = cfg.n_patches();
  if (patches.rows() != n_patches || patches.cols() != cfg.patch_values())
    throw std::invalid_argument("encode: patch matrix shape mismatch");

  EncodeResult<S> res;
  if (plan) {
    if (plan->grid_patches() != n_patches)
      throw std::invalid_argument("encode: mask plan grid does not match model");
    res.patch_indices = plan->visible_indices;
  } else {
    res.patch_indices.resize(n_patches);
    std::iota(res.patch_indices.begin(), res.patch_indices.end(), 0);
  }
  const int n_vis = static_cast<int>(res.patch_indices.size());

  nn::Mat<S> vis_patches(n_vis, cfg.patch_values());
  nn::Mat<S> vis_pos(n_vis, cfg.enc_dim);
  for (int i = 0; i < n_vis; ++i) {
    vis_patches.row(i) = patches.row(res.patch_indices[i]);
    vis_pos.row(i) = tm.model->enc_pos.row(res.patch_indices[i]);
  }

  auto emb = t.add(t.add_rowvec(t.matmul(t.constant(std::move(vis_patches)),
                                         tm.p("patch_embed.weight")),
                                tm.p("patch_embed.bias")),
                   t.constant(std::move(vis_pos)));

  std::vector<typename nn::Tape<S>::Ref> specials{tm.p("cls_token")};
  if (cfg.use_meta_tokens) {
    specials.push_back(tm.p("meta_age_token"));
    specials.push_back(tm.p("meta_gender_token"));
  }
  auto seq = t.concat_rows(
      {t.add(t.concat_rows(specials), tm.p("slot_embed")), emb});

  // key/value rows: all tokens except the meta probes
  std::vector<int> kv_rows;
  if (cfg.use_meta_tokens) {
    kv_rows.reserve(1 + n_vis);
    kv_rows.push_back(0);
    for (int i = 0; i < n_vis; ++i) kv_rows.push_back(cfg.n_special() + i);
  }

  if (capture_attention) res.attention.resize(cfg.enc_depth);
  for (int i = 0; i < cfg.enc_depth; ++i) {
    const std::string b = "enc." + std::to_string(i);
    auto cap = capture_attention ? &res.attention[i] : nullptr;
    seq = t.add(seq, detail::self_attention(tm, detail::layer_norm(tm, seq, b + ".ln1"),
                                            b, cfg.enc_dim, cfg.enc_heads, kv_rows, cap));
    seq = t.add(seq, detail::mlp(tm, detail::layer_norm(tm, seq, b + ".ln2"), b));
  }
  seq = detail::layer_norm(tm, seq, "enc.norm");

  res.cls = t.slice_rows(seq, 0, 1);
  if (cfg.use_meta_tokens) {
    res.meta_age = t.slice_rows(seq, 1, 1);
    res.meta_gender = t.slice_rows(seq, 2, 1);
  }
  res.patch_tokens = t.slice_rows(seq, cfg.n_special(), n_vis);
  return res;
}

// Cross-attention decoder: the masked view's visible tokens are scattered
// into a full grid around a shared mask token, then each block runs
// self-attention, cross-attention against the visible view's patch tokens,
// and a feed-forward. Output: predicted pixels for every patch slot.
template <class S>
typename nn::Tape<S>::Ref decode_cross(TapeModel<S>& tm, const EncodeResult<S>& masked_view,
                                       const EncodeResult<S>& visible_view) {
  auto& t = *tm.tape;
  const ModelConfig& cfg = tm.cfg();
  if (static_cast<int>(visible_view.patch_indices.size()) != cfg.n_patches())
    throw std::invalid_argument("decode_cross: visible view must be fully encoded");

  auto embed = [&](typename nn::Tape<S>::Ref x) {
    return t.add_rowvec(t.matmul(x, tm.p("dec.embed.weight")), tm.p("dec.embed.bias"));
  };
  auto dec_pos = t.constant(tm.model->dec_pos);
  auto ctx = t.add(embed(visible_view.patch_tokens), dec_pos);
  auto seq = t.add(t.assemble_rows(tm.p("mask_token"), embed(masked_view.patch_tokens),
                                   masked_view.patch_indices, cfg.n_patches()),
                   dec_pos);

  const std::vector<int> all_rows;  // self-attention over the full grid
  for (int i = 0; i < cfg.dec_depth; ++i) {
    const std::string b = "dec." + std::to_string(i);
    seq = t.add(seq, detail::self_attention(tm, detail::layer_norm(tm, seq, b + ".ln1"), b,
                                            cfg.dec_dim, cfg.dec_heads, all_rows, nullptr));
    auto q = t.add_rowvec(t.matmul(detail::layer_norm(tm, seq, b + ".ln2"),
                                   tm.p(b + ".cross.q.weight")),
                          tm.p(b + ".cross.q.bias"));
    auto kv = t.add_rowvec(t.matmul(ctx, tm.p(b + ".cross.kv.weight")),
                           tm.p(b + ".cross.kv.bias"));
    auto k = t.slice_cols(kv, 0, cfg.dec_dim);
    auto v = t.slice_cols(kv, cfg.dec_dim, cfg.dec_dim);
    auto cross = detail::attention(tm, q, k, v, cfg.dec_dim, cfg.dec_heads, nullptr);
    seq = t.add(seq, t.add_rowvec(t.matmul(cross, tm.p(b + ".cross.proj.weight")),
                                  tm.p(b + ".cross.proj.bias")));
    seq = t.add(seq, detail::mlp(tm, detail::layer_norm(tm, seq, b + ".ln3"), b));
  }
  seq = detail::layer_norm(tm, seq, "dec.norm");
  return t.add_rowvec(t.matmul(seq, tm.p("recon_head.weight")), tm.p("recon_head.bias"));
}

template <class S>
struct MetaPrediction {
  typename nn::Tape<S>::Ref age;            // 1x1, in [0, 1.2]
  typename nn::Tape<S>::Ref gender_logits;  // 1x2
};

template <class S>
MetaPrediction<S> predict_meta(TapeModel<S>& tm, const EncodeResult<S>& enc) {
  if (!tm.cfg().use_meta_tokens)
    throw std::logic_error("predict_meta: model built without meta tokens");
  auto& t = *tm.tape;
  MetaPrediction<S> out;
  out.age = t.scale(t.sigmoid(t.add_rowvec(t.matmul(enc.meta_age, tm.p("age_head.weight")),
                                           tm.p("age_head.bias"))),
                    static_cast<S>(1.2));
  out.gender_logits = t.add_rowvec(t.matmul(enc.meta_gender, tm.p("gender_head.weight")),
                                   tm.p("gender_head.bias"));
  return out;
}

enum class AttnToken { kCls, kAge, kGender };

// Attention row of the chosen token at one layer, averaged over heads and
// restricted to patch key positions, reshaped to the patch grid. Requires a
// full-visibility encode with capture_attention.
template <class S>
nn::Mat<S> attention_heatmap(const nn::Tape<S>& tape, const EncodeResult<S>& enc,
                             const ModelConfig& cfg, AttnToken token, int layer) {
  if (layer < 0 || layer >= static_cast<int>(enc.attention.size()))
    throw std::invalid_argument("attention_heatmap: layer out of range");
  if (static_cast<int>(enc.patch_indices.size()) != cfg.n_patches())
    throw std::invalid_argument("attention_heatmap: needs a full-visibility encode");
  if (token != AttnToken::kCls && !cfg.use_meta_tokens)
    throw std::invalid_argument("attention_heatmap: no meta tokens in this model");
  const int row = token == AttnToken::kCls ? 0 : (token == AttnToken::kAge ? 1 : 2);
  const int g = cfg.grid();
  // key columns: 0 = CLS, then patches in order
  nn::Mat<S> heat = nn::Mat<S>::Zero(g, g);
  const auto& heads = enc.attention[layer];
  for (const auto& probs : heads) {
    const auto& p = tape.val(probs);
    for (int i = 0; i < cfg.n_patches(); ++i)
      heat(i / g, i % g) += p(row, 1 + i);
  }
  heat /= static_cast<S>(heads.size());
  return heat;
}

}  // namespace retssl::model
