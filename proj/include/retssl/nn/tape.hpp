#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

namespace retssl::nn {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dynamically built reverse-mode graph over dense matrices. Nodes are
// created in topological order, so the backward sweep is a single reverse
// pass over creation order. Gradients are only materialized for nodes with a
// differentiable path to a leaf that requires them; constant subgraphs cost
// nothing on the way back.
template <class S>
class Tape {
 public:
  struct Ref {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Ref input(Mat<S> value, bool requires_grad = true) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
  }

  Ref constant(Mat<S> value) { return input(std::move(value), false); }

  Ref scalar_constant(S v) {
    Mat<S> m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  const Mat<S>& val(Ref r) const { return nodes_.at(r.id).value; }

  // Zero matrix if the node never received gradient.
  Mat<S> grad(Ref r) const {
    const Node& n = nodes_.at(r.id);
    if (n.grad.size() == 0) return Mat<S>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  size_t size() const { return nodes_.size(); }

  // ---- elementwise ----

  Ref add(Ref a, Ref b) {
    check_same_shape(a, b, "add");
    Ref out = make(val(a) + val(b), {a, b});
    set_pull(out, [out, a, b](Tape& t) {
      t.accum(a, t.g(out));
      t.accum(b, t.g(out));
    });
    return out;
  }

  Ref sub(Ref a, Ref b) {
    check_same_shape(a, b, "sub");
    Ref out = make(val(a) - val(b), {a, b});
    set_pull(out, [out, a, b](Tape& t) {
      t.accum(a, t.g(out));
      t.accum(b, -t.g(out));
    });
    return out;
  }

  Ref mul(Ref a, Ref b) {
    check_same_shape(a, b, "mul");
    Ref out = make(val(a).cwiseProduct(val(b)), {a, b});
    set_pull(out, [out, a, b](Tape& t) {
      t.accum(a, t.g(out).cwiseProduct(t.val(b)));
      t.accum(b, t.g(out).cwiseProduct(t.val(a)));
    });
    return out;
  }

  // k * a + c, elementwise with scalar coefficients.
  Ref affine(Ref a, S k, S c) {
    Ref out = make((val(a).array() * k + c).matrix(), {a});
    set_pull(out, [out, a, k](Tape& t) { t.accum(a, (t.g(out).array() * k).matrix()); });
    return out;
  }

  Ref scale(Ref a, S k) { return affine(a, k, S(0)); }

  // Broadcast a 1xC row vector over every row of a.
  Ref add_rowvec(Ref a, Ref row) {
    if (val(row).rows() != 1 || val(row).cols() != val(a).cols())
      throw std::invalid_argument("add_rowvec: need 1xC row matching a's columns");
    Ref out = make(val(a).rowwise() + val(row).row(0), {a, row});
    set_pull(out, [out, a, row](Tape& t) {
      t.accum(a, t.g(out));
      t.accum(row, t.g(out).colwise().sum());
    });
    return out;
  }

  // ---- matrix products ----

  Ref matmul(Ref a, Ref b) {
    if (val(a).cols() != val(b).rows()) throw std::invalid_argument("matmul: inner dims differ");
    Ref out = make(val(a) * val(b), {a, b});
    set_pull(out, [out, a, b](Tape& t) {
      t.accum(a, t.g(out) * t.val(b).transpose());
      t.accum(b, t.val(a).transpose() * t.g(out));
    });
    return out;
  }

  // a * b^T
  Ref matmul_nt(Ref a, Ref b) {
    if (val(a).cols() != val(b).cols()) throw std::invalid_argument("matmul_nt: inner dims differ");
    Ref out = make(val(a) * val(b).transpose(), {a, b});
    set_pull(out, [out, a, b](Tape& t) {
      t.accum(a, t.g(out) * t.val(b));
      t.accum(b, t.g(out).transpose() * t.val(a));
    });
    return out;
  }

  // ---- nonlinearities ----

  Ref gelu(Ref a) {
    const auto& x = val(a);
    Mat<S> y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const S v = x.data()[i];
      y.data()[i] = v * phi_cdf(v);
    }
    Ref out = make(std::move(y), {a});
    set_pull(out, [out, a](Tape& t) {
      const auto& x2 = t.val(a);
      const auto& go = t.g(out);
      Mat<S> dx(x2.rows(), x2.cols());
      for (Eigen::Index i = 0; i < x2.size(); ++i) {
        const S v = x2.data()[i];
        dx.data()[i] = go.data()[i] * (phi_cdf(v) + v * phi_pdf(v));
      }
      t.accum(a, dx);
    });
    return out;
  }

  Ref tanh_(Ref a) {
    Ref out = make(val(a).array().tanh().matrix(), {a});
    set_pull(out, [out, a](Tape& t) {
      t.accum(a, t.g(out).cwiseProduct(
                     (S(1) - t.val(out).array().square()).matrix()));
    });
    return out;
  }

  Ref sigmoid(Ref a) {
    Mat<S> y = (S(1) / (S(1) + (-val(a).array()).exp())).matrix();
    Ref out = make(std::move(y), {a});
    set_pull(out, [out, a](Tape& t) {
      const auto& yv = t.val(out);
      t.accum(a, t.g(out).cwiseProduct(yv.cwiseProduct((S(1) - yv.array()).matrix())));
    });
    return out;
  }

  Ref softmax_rows(Ref a) {
    const auto& x = val(a);
    Mat<S> y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const S m = x.row(r).maxCoeff();
      y.row(r) = (x.row(r).array() - m).exp();
      y.row(r) /= y.row(r).sum();
    }
    Ref out = make(std::move(y), {a});
    set_pull(out, [out, a](Tape& t) {
      const auto& yv = t.val(out);
      const auto& go = t.g(out);
      Mat<S> dx(yv.rows(), yv.cols());
      for (Eigen::Index r = 0; r < yv.rows(); ++r) {
        const S dot = go.row(r).dot(yv.row(r));
        dx.row(r) = (yv.row(r).array() * (go.row(r).array() - dot)).matrix();
      }
      t.accum(a, dx);
    });
    return out;
  }

  Ref layer_norm_rows(Ref x, Ref gamma, Ref beta, S eps) {
    const auto& xv = val(x);
    const Eigen::Index d = xv.cols();
    if (val(gamma).cols() != d || val(beta).cols() != d)
      throw std::invalid_argument("layer_norm_rows: gamma/beta width mismatch");
    auto cache = std::make_shared<LnCache>();
    cache->xhat.resize(xv.rows(), d);
    cache->rstd.resize(xv.rows());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      const S mu = xv.row(r).mean();
      const S var = (xv.row(r).array() - mu).square().mean();
      const S rstd = S(1) / std::sqrt(var + eps);
      cache->rstd[r] = rstd;
      cache->xhat.row(r) = ((xv.row(r).array() - mu) * rstd).matrix();
    }
    Mat<S> y = (cache->xhat.array().rowwise() * val(gamma).row(0).array()).matrix();
    y.rowwise() += val(beta).row(0);
    Ref out = make(std::move(y), {x, gamma, beta});
    set_pull(out, [out, x, gamma, beta, cache](Tape& t) {
      const auto& go = t.g(out);
      const Eigen::Index n = go.rows(), dd = go.cols();
      t.accum(beta, go.colwise().sum());
      t.accum(gamma, go.cwiseProduct(cache->xhat).colwise().sum());
      Mat<S> dxhat = (go.array().rowwise() * t.val(gamma).row(0).array()).matrix();
      Mat<S> dx(n, dd);
      for (Eigen::Index r = 0; r < n; ++r) {
        const S sum_d = dxhat.row(r).sum();
        const S sum_dx = dxhat.row(r).dot(cache->xhat.row(r));
        dx.row(r) = (cache->rstd[r] / static_cast<S>(dd)) *
                    (static_cast<S>(dd) * dxhat.row(r).array() - sum_d -
                     cache->xhat.row(r).array() * sum_dx)
                        .matrix();
      }
      t.accum(x, dx);
    });
    return out;
  }

  Ref l2_normalize_rows(Ref a, S eps) {
    const auto& x = val(a);
    auto inv_norm = std::make_shared<std::vector<S>>(x.rows());
    Mat<S> y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const S inv = S(1) / std::sqrt(x.row(r).squaredNorm() + eps);
      (*inv_norm)[r] = inv;
      y.row(r) = x.row(r) * inv;
    }
    Ref out = make(std::move(y), {a});
    set_pull(out, [out, a, inv_norm](Tape& t) {
      const auto& yv = t.val(out);
      const auto& go = t.g(out);
      Mat<S> dx(yv.rows(), yv.cols());
      for (Eigen::Index r = 0; r < yv.rows(); ++r) {
        const S dot = go.row(r).dot(yv.row(r));
        dx.row(r) = (*inv_norm)[r] * (go.row(r) - dot * yv.row(r));
      }
      t.accum(a, dx);
    });
    return out;
  }

  // ---- structure ----

  Ref slice_rows(Ref a, int begin, int count) {
    if (begin < 0 || count < 0 || begin + count > val(a).rows())
      throw std::invalid_argument("slice_rows: range out of bounds");
    Ref out = make(val(a).middleRows(begin, count), {a});
    set_pull(out, [out, a, begin, count](Tape& t) {
      t.accum_rows(a, begin, count, t.g(out));
    });
    return out;
  }

  Ref slice_cols(Ref a, int begin, int count) {
    if (begin < 0 || count < 0 || begin + count > val(a).cols())
      throw std::invalid_argument("slice_cols: range out of bounds");
    Ref out = make(val(a).middleCols(begin, count), {a});
    set_pull(out, [out, a, begin, count](Tape& t) {
      t.accum_cols(a, begin, count, t.g(out));
    });
    return out;
  }

  Ref concat_rows(const std::vector<Ref>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: nothing to concat");
    Eigen::Index rows = 0;
    const Eigen::Index cols = val(parts[0]).cols();
    for (Ref p : parts) {
      if (val(p).cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
      rows += val(p).rows();
    }
    Mat<S> y(rows, cols);
    Eigen::Index at = 0;
    for (Ref p : parts) {
      y.middleRows(at, val(p).rows()) = val(p);
      at += val(p).rows();
    }
    Ref out = make(std::move(y), parts);
    auto parts_copy = parts;
    set_pull(out, [out, parts_copy](Tape& t) {
      Eigen::Index at2 = 0;
      for (Ref p : parts_copy) {
        const Eigen::Index n = t.val(p).rows();
        t.accum(p, t.g(out).middleRows(at2, n));
        at2 += n;
      }
    });
    return out;
  }

  Ref concat_cols(const std::vector<Ref>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: nothing to concat");
    Eigen::Index cols = 0;
    const Eigen::Index rows = val(parts[0]).rows();
    for (Ref p : parts) {
      if (val(p).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
      cols += val(p).cols();
    }
    Mat<S> y(rows, cols);
    Eigen::Index at = 0;
    for (Ref p : parts) {
      y.middleCols(at, val(p).cols()) = val(p);
      at += val(p).cols();
    }
    Ref out = make(std::move(y), parts);
    auto parts_copy = parts;
    set_pull(out, [out, parts_copy](Tape& t) {
      Eigen::Index at2 = 0;
      for (Ref p : parts_copy) {
        const Eigen::Index n = t.val(p).cols();
        t.accum(p, t.g(out).middleCols(at2, n));
        at2 += n;
      }
    });
    return out;
  }

  Ref gather_rows(Ref a, std::vector<int> indices) {
    Mat<S> y(static_cast<Eigen::Index>(indices.size()), val(a).cols());
    for (size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] < 0 || indices[i] >= val(a).rows())
        throw std::invalid_argument("gather_rows: index out of range");
      y.row(static_cast<Eigen::Index>(i)) = val(a).row(indices[i]);
    }
    Ref out = make(std::move(y), {a});
    auto idx = std::make_shared<std::vector<int>>(std::move(indices));
    set_pull(out, [out, a, idx](Tape& t) {
      const auto& go = t.g(out);
      Mat<S> da = Mat<S>::Zero(t.val(a).rows(), t.val(a).cols());
      for (size_t i = 0; i < idx->size(); ++i)
        da.row((*idx)[i]) += go.row(static_cast<Eigen::Index>(i));
      t.accum(a, da);
    });
    return out;
  }

  // Copies `base`, then writes src.row(i) at row indices[i]. Gradient flows
  // only into src; base rows are treated as constants.
  Ref overlay_rows(const Mat<S>& base, Ref src, std::vector<int> indices) {
    if (static_cast<Eigen::Index>(indices.size()) != val(src).rows())
      throw std::invalid_argument("overlay_rows: index count != src rows");
    Mat<S> y = base;
    for (size_t i = 0; i < indices.size(); ++i)
      y.row(indices[i]) = val(src).row(static_cast<Eigen::Index>(i));
    Ref out = make(std::move(y), {src});
    auto idx = std::make_shared<std::vector<int>>(std::move(indices));
    set_pull(out, [out, src, idx](Tape& t) {
      const auto& go = t.g(out);
      Mat<S> ds(static_cast<Eigen::Index>(idx->size()), go.cols());
      for (size_t i = 0; i < idx->size(); ++i)
        ds.row(static_cast<Eigen::Index>(i)) = go.row((*idx)[i]);
      t.accum(src, ds);
    });
    return out;
  }

  // total_rows x C output: fill_row (1xC) everywhere except rows indices[i],
  // which take placed.row(i). Both sides receive gradient.
  Ref assemble_rows(Ref fill_row, Ref placed, std::vector<int> indices, int total_rows) {
    if (val(fill_row).rows() != 1 || val(fill_row).cols() != val(placed).cols())
      throw std::invalid_argument("assemble_rows: fill_row must be 1xC matching placed");
    if (static_cast<Eigen::Index>(indices.size()) != val(placed).rows())
      throw std::invalid_argument("assemble_rows: index count != placed rows");
    Mat<S> y = val(fill_row).row(0).colwise().replicate(total_rows);
    std::vector<std::uint8_t> taken(total_rows, 0);
    for (size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] < 0 || indices[i] >= total_rows)
        throw std::invalid_argument("assemble_rows: index out of range");
      y.row(indices[i]) = val(placed).row(static_cast<Eigen::Index>(i));
      taken[indices[i]] = 1;
    }
    Ref out = make(std::move(y), {fill_row, placed});
    auto idx = std::make_shared<std::vector<int>>(std::move(indices));
    auto taken_p = std::make_shared<std::vector<std::uint8_t>>(std::move(taken));
    set_pull(out, [out, fill_row, placed, idx, taken_p](Tape& t) {
      const auto& go = t.g(out);
      Mat<S> dplaced(static_cast<Eigen::Index>(idx->size()), go.cols());
      for (size_t i = 0; i < idx->size(); ++i)
        dplaced.row(static_cast<Eigen::Index>(i)) = go.row((*idx)[i]);
      t.accum(placed, dplaced);
      Mat<S> dfill = Mat<S>::Zero(1, go.cols());
      for (Eigen::Index r = 0; r < go.rows(); ++r)
        if (!(*taken_p)[r]) dfill.row(0) += go.row(r);
      t.accum(fill_row, dfill);
    });
    return out;
  }

  // Bijective flat reindex: out.data()[i] = a.data()[map[i]]. Used for
  // patch-grid <-> image layout conversion.
  Ref permute_flat(Ref a, std::shared_ptr<const std::vector<int>> map, int out_rows,
                   int out_cols) {
    if (static_cast<size_t>(out_rows) * out_cols != map->size())
      throw std::invalid_argument("permute_flat: map size mismatch");
    Mat<S> y(out_rows, out_cols);
    const auto& x = val(a);
    for (size_t i = 0; i < map->size(); ++i) y.data()[i] = x.data()[(*map)[i]];
    Ref out = make(std::move(y), {a});
    set_pull(out, [out, a, map](Tape& t) {
      const auto& go = t.g(out);
      Mat<S> da = Mat<S>::Zero(t.val(a).rows(), t.val(a).cols());
      for (size_t i = 0; i < map->size(); ++i) da.data()[(*map)[i]] += go.data()[i];
      t.accum(a, da);
    });
    return out;
  }

  // ---- reductions / losses ----

  Ref rowwise_sum(Ref a) {
    Ref out = make(val(a).rowwise().sum(), {a});
    set_pull(out, [out, a](Tape& t) {
      t.accum(a, t.g(out).col(0).rowwise().replicate(t.val(a).cols()));
    });
    return out;
  }

  Ref sum_all(Ref a) {
    Mat<S> y(1, 1);
    y(0, 0) = val(a).sum();
    Ref out = make(std::move(y), {a});
    set_pull(out, [out, a](Tape& t) {
      t.accum(a, Mat<S>::Constant(t.val(a).rows(), t.val(a).cols(), t.g(out)(0, 0)));
    });
    return out;
  }

  Ref mean_all(Ref a) {
    Mat<S> y(1, 1);
    y(0, 0) = val(a).mean();
    Ref out = make(std::move(y), {a});
    set_pull(out, [out, a](Tape& t) {
      const S k = t.g(out)(0, 0) / static_cast<S>(t.val(a).size());
      t.accum(a, Mat<S>::Constant(t.val(a).rows(), t.val(a).cols(), k));
    });
    return out;
  }

  // Elementwise sqrt; input must be nonnegative, gradient guarded at zero.
  Ref sqrt_(Ref a) {
    Ref out = make(val(a).array().sqrt().matrix(), {a});
    set_pull(out, [out, a](Tape& t) {
      const auto& yv = t.val(out);
      Mat<S> dx(yv.rows(), yv.cols());
      for (Eigen::Index i = 0; i < yv.size(); ++i) {
        const S y = yv.data()[i];
        dx.data()[i] = y > S(0) ? t.g(out).data()[i] / (S(2) * y) : S(0);
      }
      t.accum(a, dx);
    });
    return out;
  }

  // mean((a - b)^2) over all entries.
  Ref mse(Ref a, Ref b) {
    check_same_shape(a, b, "mse");
    Mat<S> y(1, 1);
    y(0, 0) = (val(a) - val(b)).squaredNorm() / static_cast<S>(val(a).size());
    Ref out = make(std::move(y), {a, b});
    set_pull(out, [out, a, b](Tape& t) {
      const S k = S(2) * t.g(out)(0, 0) / static_cast<S>(t.val(a).size());
      Mat<S> d = (t.val(a) - t.val(b)) * k;
      t.accum(a, d);
      t.accum(b, -d);
    });
    return out;
  }

  Ref mse_vs_const(Ref a, const Mat<S>& target) {
    return mse(a, constant(target));
  }

  // Mean categorical cross-entropy with integer labels, natural log.
  Ref cross_entropy_with_labels(Ref logits, std::vector<int> labels) {
    const auto& x = val(logits);
    if (static_cast<Eigen::Index>(labels.size()) != x.rows())
      throw std::invalid_argument("cross_entropy: one label per row required");
    auto probs = std::make_shared<Mat<S>>(x.rows(), x.cols());
    S total = S(0);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const S m = x.row(r).maxCoeff();
      Eigen::Array<S, 1, Eigen::Dynamic> e = (x.row(r).array() - m).exp();
      const S z = e.sum();
      probs->row(r) = (e / z).matrix();
      if (labels[r] < 0 || labels[r] >= x.cols())
        throw std::invalid_argument("cross_entropy: label out of range");
      total += -(x(r, labels[r]) - m - std::log(z));
    }
    Mat<S> y(1, 1);
    y(0, 0) = total / static_cast<S>(x.rows());
    Ref out = make(std::move(y), {logits});
    auto lab = std::make_shared<std::vector<int>>(std::move(labels));
    set_pull(out, [out, logits, probs, lab](Tape& t) {
      const S k = t.g(out)(0, 0) / static_cast<S>(probs->rows());
      Mat<S> d = *probs;
      for (Eigen::Index r = 0; r < d.rows(); ++r) d(r, (*lab)[r]) -= S(1);
      t.accum(logits, d * k);
    });
    return out;
  }

  // 3x3 stride-2 convolution with zero padding 1, frozen weights. Input and
  // output feature maps are (H*W) x C matrices. weight is (9*Cin) x Cout.
  Ref conv3x3_s2(Ref in, int h, int w, const Mat<S>& weight, const Mat<S>& bias, int& out_h,
                 int& out_w) {
    const int cin = static_cast<int>(val(in).cols());
    if (val(in).rows() != static_cast<Eigen::Index>(h) * w)
      throw std::invalid_argument("conv3x3_s2: input rows != h*w");
    if (weight.rows() != 9 * cin) throw std::invalid_argument("conv3x3_s2: weight shape");
    out_h = (h + 2 - 3) / 2 + 1;
    out_w = (w + 2 - 3) / 2 + 1;
    const int n_out = out_h * out_w;

    auto src_index = std::make_shared<std::vector<int>>(static_cast<size_t>(n_out) * 9, -1);
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox)
        for (int k = 0; k < 9; ++k) {
          const int iy = oy * 2 + k / 3 - 1;
          const int ix = ox * 2 + k % 3 - 1;
          if (iy >= 0 && iy < h && ix >= 0 && ix < w)
            (*src_index)[static_cast<size_t>(oy * out_w + ox) * 9 + k] = iy * w + ix;
        }

    Mat<S> col = Mat<S>::Zero(n_out, 9 * cin);
    const auto& x = val(in);
    for (int o = 0; o < n_out; ++o)
      for (int k = 0; k < 9; ++k) {
        const int src = (*src_index)[static_cast<size_t>(o) * 9 + k];
        if (src >= 0) col.block(o, k * cin, 1, cin) = x.row(src);
      }
    Mat<S> y = col * weight;
    y.rowwise() += bias.row(0);
    Ref out = make(std::move(y), {in});
    if (nodes_[out.id].needs_grad) {
      auto w_copy = std::make_shared<Mat<S>>(weight);
      set_pull(out, [out, in, src_index, w_copy, cin](Tape& t) {
        Mat<S> dcol = t.g(out) * w_copy->transpose();
        Mat<S> din = Mat<S>::Zero(t.val(in).rows(), t.val(in).cols());
        const int n = static_cast<int>(dcol.rows());
        for (int o = 0; o < n; ++o)
          for (int k = 0; k < 9; ++k) {
            const int src = (*src_index)[static_cast<size_t>(o) * 9 + k];
            if (src >= 0) din.row(src) += dcol.block(o, k * cin, 1, cin);
          }
        t.accum(in, din);
      });
    }
    return out;
  }

  // ---- backward ----

  void backward(Ref root) { backward_weighted({{root, S(1)}}); }

  // Seeds several scalar nodes with explicit adjoints, then runs one reverse
  // sweep. Used when a batch-level loss couples scalars across graphs built
  // on this tape.
  void backward_weighted(const std::vector<std::pair<Ref, S>>& seeds) {
    int max_id = -1;
    for (const auto& [r, adj] : seeds) {
      Node& n = nodes_.at(r.id);
      if (n.value.rows() != 1 || n.value.cols() != 1)
        throw std::invalid_argument("backward: seed nodes must be 1x1 scalars");
      if (!n.needs_grad) continue;
      ensure_grad(n);
      n.grad(0, 0) += adj;
      n.seeded = true;
      max_id = std::max(max_id, r.id);
    }
    for (int id = max_id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.seeded && n.pull) n.pull(*this);
    }
  }

 private:
  struct Node {
    Mat<S> value;
    Mat<S> grad;
    std::function<void(Tape&)> pull;
    bool needs_grad = false;
    bool seeded = false;
  };

  struct LnCache {
    Mat<S> xhat;
    std::vector<S> rstd;
  };

  static S phi_cdf(S x) {
    return S(0.5) * (S(1) + std::erf(x * S(0.7071067811865475244)));
  }
  static S phi_pdf(S x) {
    return S(0.3989422804014326779) * std::exp(S(-0.5) * x * x);
  }

  Ref make(Mat<S> value, const std::vector<Ref>& parents) {
    Node n;
    n.value = std::move(value);
    for (Ref p : parents) n.needs_grad = n.needs_grad || nodes_.at(p.id).needs_grad;
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
  }

  template <class F>
  void set_pull(Ref r, F&& f) {
    if (nodes_[r.id].needs_grad) nodes_[r.id].pull = std::forward<F>(f);
  }

  void ensure_grad(Node& n) {
    if (n.grad.size() == 0) n.grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
  }

  const Mat<S>& g(Ref r) { return nodes_[r.id].grad; }

  template <class Expr>
  void accum(Ref r, const Expr& grad_expr) {
    Node& n = nodes_[r.id];
    if (!n.needs_grad) return;
    if constexpr (std::is_same_v<Expr, Mat<S>>) {
      if (grad_expr.size() == 0) return;
    }
    ensure_grad(n);
    n.grad += grad_expr;
    n.seeded = true;
  }

  template <class Expr>
  void accum_rows(Ref r, int begin, int count, const Expr& grad_expr) {
    Node& n = nodes_[r.id];
    if (!n.needs_grad) return;
    ensure_grad(n);
    n.grad.middleRows(begin, count) += grad_expr;
    n.seeded = true;
  }

  template <class Expr>
  void accum_cols(Ref r, int begin, int count, const Expr& grad_expr) {
    Node& n = nodes_[r.id];
    if (!n.needs_grad) return;
    ensure_grad(n);
    n.grad.middleCols(begin, count) += grad_expr;
    n.seeded = true;
  }

  void check_same_shape(Ref a, Ref b, const char* op) const {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
      throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }

  std::vector<Node> nodes_;
};

}  // namespace retssl::nn
