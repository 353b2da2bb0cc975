#pragma once

#include <cmath>
#include <memory>

#include "core/blas.hpp"
#include "core/ops_elementwise.hpp"

namespace sologan {

// ---------------------------------------------------------------------------
// im2col / col2im (single sample, NCHW).
// ---------------------------------------------------------------------------

namespace detail {

// Valid output-column range [j0, j1) for which j*stride + offset lies in
// [0, extent).
inline void col_bounds(int64_t offset, int64_t stride, int64_t extent, int64_t out_extent,
                       int64_t& j0, int64_t& j1) {
  j0 = 0;
  if (offset < 0) j0 = (-offset + stride - 1) / stride;
  int64_t last = extent - 1 - offset;
  j1 = last < 0 ? 0 : std::min(out_extent, last / stride + 1);
  if (j1 < j0) j1 = j0;
}

}  // namespace detail

template <typename T>
void im2col(const T* x, int64_t C, int64_t H, int64_t W, int64_t k, int64_t stride,
            int64_t pad, int64_t oh, int64_t ow, T* cols) {
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t ki = 0; ki < k; ++ki) {
      for (int64_t kj = 0; kj < k; ++kj) {
        T* row = cols + ((c * k + ki) * k + kj) * oh * ow;
        int64_t off_j = kj - pad;
        int64_t j0, j1;
        detail::col_bounds(off_j, stride, W, ow, j0, j1);
        for (int64_t i = 0; i < oh; ++i) {
          int64_t src_i = i * stride - pad + ki;
          T* out_row = row + i * ow;
          if (src_i < 0 || src_i >= H) {
            std::fill_n(out_row, ow, T(0));
            continue;
          }
          const T* src = x + (c * H + src_i) * W + off_j;
          if (j0 > 0) std::fill_n(out_row, j0, T(0));
          if (stride == 1) {
            std::memcpy(out_row + j0, src + j0, static_cast<size_t>(j1 - j0) * sizeof(T));
          } else {
            for (int64_t j = j0; j < j1; ++j) out_row[j] = src[j * stride];
          }
          if (j1 < ow) std::fill_n(out_row + j1, ow - j1, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, int64_t C, int64_t H, int64_t W, int64_t k, int64_t stride,
            int64_t pad, int64_t oh, int64_t ow, T* x_accum) {
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t ki = 0; ki < k; ++ki) {
      for (int64_t kj = 0; kj < k; ++kj) {
        const T* row = cols + ((c * k + ki) * k + kj) * oh * ow;
        int64_t off_j = kj - pad;
        int64_t j0, j1;
        detail::col_bounds(off_j, stride, W, ow, j0, j1);
        for (int64_t i = 0; i < oh; ++i) {
          int64_t src_i = i * stride - pad + ki;
          if (src_i < 0 || src_i >= H) continue;
          T* dst = x_accum + (c * H + src_i) * W + off_j;
          const T* in_row = row + i * ow;
          if (stride == 1) {
            for (int64_t j = j0; j < j1; ++j) dst[j] += in_row[j];
          } else {
            for (int64_t j = j0; j < j1; ++j) dst[j * stride] += in_row[j];
          }
        }
      }
    }
  }
}

inline int64_t conv_out_size(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// ---------------------------------------------------------------------------
// conv2d: x [B,Cin,H,W] * w [Cout,Cin,k,k] (+ bias [Cout]) -> [B,Cout,oh,ow]
// ---------------------------------------------------------------------------

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int64_t stride,
              int64_t pad) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  require(xv.ndim() == 4 && wv.ndim() == 4, ErrorCode::shape_mismatch, "conv2d expects 4-d x, w");
  int64_t B = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  int64_t Cout = wv.dim(0), k = wv.dim(2);
  require(wv.dim(1) == Cin, ErrorCode::dimension_mismatch,
          "conv2d channel mismatch: input has " + std::to_string(Cin) + ", kernel expects " +
              std::to_string(wv.dim(1)));
  int64_t oh = conv_out_size(H, k, stride, pad);
  int64_t ow = conv_out_size(W, k, stride, pad);
  require(oh >= 1 && ow >= 1, ErrorCode::shape_mismatch,
          "conv2d output would be empty for input " + shape_str(xv.shape()));

  int64_t ck2 = Cin * k * k;
  bool track = x.requires_grad() || w.requires_grad() || (bias.valid() && bias.requires_grad());
  auto cols = std::make_shared<Tensor<T>>(Tensor<T>::uninit(Shape{B, ck2, oh * ow}));
  Tensor<T> out = Tensor<T>::uninit({B, Cout, oh, ow});
  for (int64_t b = 0; b < B; ++b) {
    T* colb = cols->data() + b * ck2 * oh * ow;
    im2col(xv.data() + b * Cin * H * W, Cin, H, W, k, stride, pad, oh, ow, colb);
    gemm(false, false, Cout, oh * ow, ck2, T(1), wv.data(), ck2, colb, oh * ow, T(0),
         out.data() + b * Cout * oh * ow, oh * ow);
  }
  if (bias.valid()) {
    const T* bv = bias.value().data();
    T* po = out.data();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < Cout; ++c) {
        T add = bv[c];
        T* p = po + (b * Cout + c) * oh * ow;
        for (int64_t i = 0; i < oh * ow; ++i) p[i] += add;
      }
  }
  if (!track) return Var<T>::leaf(std::move(out), false);

  std::vector<Var<T>> parents = {x, w};
  if (bias.valid()) parents.push_back(bias);
  return Var<T>::result(
      std::move(out), std::move(parents),
      [x, w, bias, cols, B, Cin, H, W, Cout, k, stride, pad, oh, ow, ck2](VarNode<T>& n) {
        const T* g = n.grad.data();
        if (bias.valid() && bias.requires_grad()) {
          Tensor<T>& gb = Var<T>::ensure_grad(*bias.node());
          for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < Cout; ++c) {
              const T* p = g + (b * Cout + c) * oh * ow;
              T acc = T(0);
              for (int64_t i = 0; i < oh * ow; ++i) acc += p[i];
              gb[c] += acc;
            }
        }
        if (w.requires_grad()) {
          Tensor<T>& gw = Var<T>::ensure_grad(*w.node());
          for (int64_t b = 0; b < B; ++b)
            gemm(false, true, Cout, ck2, oh * ow, T(1), g + b * Cout * oh * ow, oh * ow,
                 cols->data() + b * ck2 * oh * ow, oh * ow, T(1), gw.data(), ck2);
        }
        if (x.requires_grad()) {
          Tensor<T>& gx = Var<T>::ensure_grad(*x.node());
          Tensor<T> gcol = Tensor<T>::uninit({ck2, oh * ow});
          for (int64_t b = 0; b < B; ++b) {
            gemm(true, false, ck2, oh * ow, Cout, T(1), w.value().data(), ck2,
                 g + b * Cout * oh * ow, oh * ow, T(0), gcol.data(), oh * ow);
            col2im(gcol.data(), Cin, H, W, k, stride, pad, oh, ow,
                   gx.data() + b * Cin * H * W);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// conv_transpose2d: x [B,Cin,H,W] * w [Cin,Cout,k,k] -> [B,Cout,(H-1)s-2p+k,...]
// ---------------------------------------------------------------------------

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int64_t stride,
                        int64_t pad) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  int64_t B = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  require(wv.dim(0) == Cin, ErrorCode::dimension_mismatch, "conv_transpose2d channel mismatch");
  int64_t Cout = wv.dim(1), k = wv.dim(2);
  int64_t oh = (H - 1) * stride - 2 * pad + k;
  int64_t ow = (W - 1) * stride - 2 * pad + k;
  int64_t ck2 = Cout * k * k;

  Tensor<T> out({B, Cout, oh, ow});  // zeroed: col2im accumulates
  Tensor<T> cols = Tensor<T>::uninit({ck2, H * W});
  for (int64_t b = 0; b < B; ++b) {
    // cols = w_mat^T (ck2 x Cin) * x_mat (Cin x HW)
    gemm(true, false, ck2, H * W, Cin, T(1), wv.data(), ck2, xv.data() + b * Cin * H * W, H * W,
         T(0), cols.data(), H * W);
    col2im(cols.data(), Cout, oh, ow, k, stride, pad, H, W, out.data() + b * Cout * oh * ow);
  }
  if (bias.valid()) {
    const T* bv = bias.value().data();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < Cout; ++c) {
        T add = bv[c];
        T* p = out.data() + (b * Cout + c) * oh * ow;
        for (int64_t i = 0; i < oh * ow; ++i) p[i] += add;
      }
  }
  bool track = x.requires_grad() || w.requires_grad() || (bias.valid() && bias.requires_grad());
  if (!track) return Var<T>::leaf(std::move(out), false);

  std::vector<Var<T>> parents = {x, w};
  if (bias.valid()) parents.push_back(bias);
  return Var<T>::result(
      std::move(out), std::move(parents),
      [x, w, bias, B, Cin, H, W, Cout, k, stride, pad, oh, ow, ck2](VarNode<T>& n) {
        const T* g = n.grad.data();
        if (bias.valid() && bias.requires_grad()) {
          Tensor<T>& gb = Var<T>::ensure_grad(*bias.node());
          for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < Cout; ++c) {
              const T* p = g + (b * Cout + c) * oh * ow;
              T acc = T(0);
              for (int64_t i = 0; i < oh * ow; ++i) acc += p[i];
              gb[c] += acc;
            }
        }
        if (!x.requires_grad() && !w.requires_grad()) return;
        Tensor<T> gcol = Tensor<T>::uninit({ck2, H * W});
        for (int64_t b = 0; b < B; ++b) {
          im2col(g + b * Cout * oh * ow, Cout, oh, ow, k, stride, pad, H, W, gcol.data());
          if (x.requires_grad()) {
            Tensor<T>& gx = Var<T>::ensure_grad(*x.node());
            gemm(false, false, Cin, H * W, ck2, T(1), w.value().data(), ck2, gcol.data(), H * W,
                 T(1), gx.data() + b * Cin * H * W, H * W);
          }
          if (w.requires_grad()) {
            Tensor<T>& gw = Var<T>::ensure_grad(*w.node());
            gemm(false, true, Cin, ck2, H * W, T(1), x.value().data() + b * Cin * H * W, H * W,
                 gcol.data(), H * W, T(1), gw.data(), ck2);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Pooling and padding.
// ---------------------------------------------------------------------------

template <typename T>
Var<T> avg_pool2d(const Var<T>& x, int64_t k, int64_t stride) {
  const Tensor<T>& xv = x.value();
  int64_t B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  int64_t oh = (H - k) / stride + 1, ow = (W - k) / stride + 1;
  require(oh >= 1 && ow >= 1, ErrorCode::shape_mismatch,
          "avg_pool2d output would be empty for input " + shape_str(xv.shape()));
  Tensor<T> out = Tensor<T>::uninit({B, C, oh, ow});
  T inv = T(1) / static_cast<T>(k * k);
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* src = xv.data() + bc * H * W;
    T* dst = out.data() + bc * oh * ow;
    for (int64_t i = 0; i < oh; ++i)
      for (int64_t j = 0; j < ow; ++j) {
        T acc = T(0);
        for (int64_t ki = 0; ki < k; ++ki)
          for (int64_t kj = 0; kj < k; ++kj) acc += src[(i * stride + ki) * W + j * stride + kj];
        dst[i * ow + j] = acc * inv;
      }
  }
  return Var<T>::result(std::move(out), {x}, [x, B, C, H, W, k, stride, oh, ow, inv](VarNode<T>& n) {
    if (!x.requires_grad()) return;
    Tensor<T>& gx = Var<T>::ensure_grad(*x.node());
    const T* g = n.grad.data();
    for (int64_t bc = 0; bc < B * C; ++bc) {
      T* dst = gx.data() + bc * H * W;
      const T* src = g + bc * oh * ow;
      for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j) {
          T v = src[i * ow + j] * inv;
          for (int64_t ki = 0; ki < k; ++ki)
            for (int64_t kj = 0; kj < k; ++kj) dst[(i * stride + ki) * W + j * stride + kj] += v;
        }
    }
  });
}

inline int64_t reflect_index(int64_t i, int64_t n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

template <typename T>
Var<T> reflect_pad2d(const Var<T>& x, int64_t p) {
  const Tensor<T>& xv = x.value();
  int64_t B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  require(p < H && p < W, ErrorCode::shape_mismatch, "reflect pad larger than input extent");
  Tensor<T> out = Tensor<T>::uninit({B, C, H + 2 * p, W + 2 * p});
  int64_t oh = H + 2 * p, ow = W + 2 * p;
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* src = xv.data() + bc * H * W;
    T* dst = out.data() + bc * oh * ow;
    for (int64_t i = 0; i < oh; ++i) {
      int64_t si = reflect_index(i - p, H);
      for (int64_t j = 0; j < ow; ++j) dst[i * ow + j] = src[si * W + reflect_index(j - p, W)];
    }
  }
  return Var<T>::result(std::move(out), {x}, [x, B, C, H, W, p, oh, ow](VarNode<T>& n) {
    if (!x.requires_grad()) return;
    Tensor<T>& gx = Var<T>::ensure_grad(*x.node());
    const T* g = n.grad.data();
    for (int64_t bc = 0; bc < B * C; ++bc) {
      T* dst = gx.data() + bc * H * W;
      const T* src = g + bc * oh * ow;
      for (int64_t i = 0; i < oh; ++i) {
        int64_t si = reflect_index(i - p, H);
        for (int64_t j = 0; j < ow; ++j) dst[si * W + reflect_index(j - p, W)] += src[i * ow + j];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Dense algebra.
// ---------------------------------------------------------------------------

// x [B,in] * w^T with w [out,in] (+ bias [out]) -> [B,out]
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  require(xv.ndim() == 2 && wv.ndim() == 2, ErrorCode::shape_mismatch, "linear expects 2-d x, w");
  require(xv.dim(1) == wv.dim(1), ErrorCode::dimension_mismatch,
          "linear: input width " + std::to_string(xv.dim(1)) + " != weight fan-in " +
              std::to_string(wv.dim(1)));
  int64_t B = xv.dim(0), in = xv.dim(1), out_dim = wv.dim(0);
  Tensor<T> out = Tensor<T>::uninit({B, out_dim});
  gemm(false, true, B, out_dim, in, T(1), xv.data(), in, wv.data(), in, T(0), out.data(), out_dim);
  if (bias.valid()) {
    const T* bv = bias.value().data();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t o = 0; o < out_dim; ++o) out[b * out_dim + o] += bv[o];
  }
  std::vector<Var<T>> parents = {x, w};
  if (bias.valid()) parents.push_back(bias);
  return Var<T>::result(std::move(out), std::move(parents),
                        [x, w, bias, B, in, out_dim](VarNode<T>& n) {
                          const T* g = n.grad.data();
                          if (bias.valid() && bias.requires_grad()) {
                            Tensor<T>& gb = Var<T>::ensure_grad(*bias.node());
                            for (int64_t b = 0; b < B; ++b)
                              for (int64_t o = 0; o < out_dim; ++o) gb[o] += g[b * out_dim + o];
                          }
                          if (w.requires_grad()) {
                            Tensor<T>& gw = Var<T>::ensure_grad(*w.node());
                            gemm(true, false, out_dim, in, B, T(1), g, out_dim, x.value().data(),
                                 in, T(1), gw.data(), in);
                          }
                          if (x.requires_grad()) {
                            Tensor<T>& gx = Var<T>::ensure_grad(*x.node());
                            gemm(false, false, B, in, out_dim, T(1), g, out_dim, w.value().data(),
                                 in, T(1), gx.data(), in);
                          }
                        });
}

// Row gather: table [n,d], ids [B] -> [B,d]
template <typename T>
Var<T> embedding(const Var<T>& table, std::vector<int64_t> ids) {
  const Tensor<T>& tv = table.value();
  int64_t n = tv.dim(0), d = tv.dim(1);
  for (int64_t id : ids)
    require(id >= 0 && id < n, ErrorCode::invalid_label,
            "embedding id " + std::to_string(id) + " out of range [0," + std::to_string(n) + ")");
  int64_t B = static_cast<int64_t>(ids.size());
  Tensor<T> out = Tensor<T>::uninit({B, d});
  for (int64_t b = 0; b < B; ++b) std::copy_n(tv.data() + ids[b] * d, d, out.data() + b * d);
  return Var<T>::result(std::move(out), {table}, [table, ids = std::move(ids), d](VarNode<T>& n) {
    if (!table.requires_grad()) return;
    Tensor<T>& gt = Var<T>::ensure_grad(*table.node());
    const T* g = n.grad.data();
    for (size_t b = 0; b < ids.size(); ++b)
      for (int64_t j = 0; j < d; ++j) gt[ids[b] * d + j] += g[static_cast<int64_t>(b) * d + j];
  });
}

// Mean softmax cross-entropy of logits [B,n] against integer targets.
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, std::vector<int64_t> targets) {
  const Tensor<T>& lv = logits.value();
  require(lv.ndim() == 2, ErrorCode::shape_mismatch, "softmax_cross_entropy expects [B,n] logits");
  int64_t B = lv.dim(0), n = lv.dim(1);
  require(static_cast<int64_t>(targets.size()) == B, ErrorCode::dimension_mismatch,
          "softmax_cross_entropy: batch/target count mismatch");
  for (int64_t t : targets)
    require(t >= 0 && t < n, ErrorCode::invalid_label,
            "class label " + std::to_string(t) + " out of range [0," + std::to_string(n) + ")");
  T loss = T(0);
  for (int64_t b = 0; b < B; ++b) {
    const T* row = lv.data() + b * n;
    T mx = row[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    T lse = T(0);
    for (int64_t j = 0; j < n; ++j) lse += std::exp(row[j] - mx);
    loss += mx + std::log(lse) - row[targets[static_cast<size_t>(b)]];
  }
  loss /= static_cast<T>(B);
  return Var<T>::result(Tensor<T>::scalar(loss), {logits},
                        [logits, targets = std::move(targets), B, n](VarNode<T>& node) {
                          if (!logits.requires_grad()) return;
                          Tensor<T>& gl = Var<T>::ensure_grad(*logits.node());
                          T gscale = node.grad[0] / static_cast<T>(B);
                          const Tensor<T>& lv = logits.value();
                          for (int64_t b = 0; b < B; ++b) {
                            const T* row = lv.data() + b * n;
                            T mx = row[0];
                            for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
                            T denom = T(0);
                            for (int64_t j = 0; j < n; ++j) denom += std::exp(row[j] - mx);
                            for (int64_t j = 0; j < n; ++j) {
                              T p = std::exp(row[j] - mx) / denom;
                              T onehot = (j == targets[static_cast<size_t>(b)]) ? T(1) : T(0);
                              gl[b * n + j] += gscale * (p - onehot);
                            }
                          }
                        });
}

// ---------------------------------------------------------------------------
// Fused normalization ops. These appear dozens of times per generator pass,
// so they carry hand-written backwards instead of being composed from
// elementwise primitives.
// ---------------------------------------------------------------------------

// Per-sample, per-channel zero-mean unit-variance normalization over H*W.
template <typename T>
Var<T> instance_norm_op(const Var<T>& x, T eps) {
  const Tensor<T>& xv = x.value();
  require(xv.ndim() == 4, ErrorCode::shape_mismatch, "instance_norm expects [B,C,H,W]");
  int64_t bc = xv.dim(0) * xv.dim(1);
  int64_t hw = xv.dim(2) * xv.dim(3);
  require(hw > 1, ErrorCode::degenerate_input,
          "instance_norm: variance over a single spatial element is degenerate");
  Tensor<T> out = Tensor<T>::uninit(xv.shape());
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(bc));
  const T* px = xv.data();
  T* po = out.data();
  for (int64_t k = 0; k < bc; ++k) {
    const T* src = px + k * hw;
    T mean = T(0);
    for (int64_t i = 0; i < hw; ++i) mean += src[i];
    mean /= static_cast<T>(hw);
    T var = T(0);
    for (int64_t i = 0; i < hw; ++i) {
      T d = src[i] - mean;
      var += d * d;
    }
    var /= static_cast<T>(hw);
    T r = T(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<size_t>(k)] = r;
    T* dst = po + k * hw;
    for (int64_t i = 0; i < hw; ++i) dst[i] = (src[i] - mean) * r;
  }
  return Var<T>::result(std::move(out), {x}, [x, inv_std, bc, hw](VarNode<T>& n) {
    if (!x.requires_grad()) return;
    Tensor<T>& gx = Var<T>::ensure_grad(*x.node());
    const T* g = n.grad.data();
    const T* y = n.value.data();
    T* dst = gx.data();
    T inv_n = T(1) / static_cast<T>(hw);
    for (int64_t k = 0; k < bc; ++k) {
      const T* gk = g + k * hw;
      const T* yk = y + k * hw;
      T sum_g = T(0), sum_gy = T(0);
      for (int64_t i = 0; i < hw; ++i) {
        sum_g += gk[i];
        sum_gy += gk[i] * yk[i];
      }
      T r = (*inv_std)[static_cast<size_t>(k)];
      T mg = sum_g * inv_n, mgy = sum_gy * inv_n;
      T* dk = dst + k * hw;
      for (int64_t i = 0; i < hw; ++i) dk[i] += r * (gk[i] - mg - yk[i] * mgy);
    }
  });
}

// y[b,c,h,w] = x[b,c,h,w] * gamma[c] + beta[c] (+ bias[b,c] when given).
template <typename T>
Var<T> channel_affine(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                      const Var<T>& bias) {
  const Tensor<T>& xv = x.value();
  int64_t B = xv.dim(0), C = xv.dim(1);
  int64_t hw = xv.dim(2) * xv.dim(3);
  require(gamma.value().numel() == C && beta.value().numel() == C, ErrorCode::dimension_mismatch,
          "channel_affine: gamma/beta must have one entry per channel");
  if (bias.valid())
    require(bias.shape() == Shape{B, C}, ErrorCode::dimension_mismatch,
            "channel_affine: bias must be [B,C]");
  Tensor<T> out = Tensor<T>::uninit(xv.shape());
  const T* px = xv.data();
  const T* pg = gamma.value().data();
  const T* pb = beta.value().data();
  const T* pc = bias.valid() ? bias.value().data() : nullptr;
  T* po = out.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c) {
      T scale = pg[c];
      T shift = pb[c] + (pc ? pc[b * C + c] : T(0));
      const T* src = px + (b * C + c) * hw;
      T* dst = po + (b * C + c) * hw;
      for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] * scale + shift;
    }
  std::vector<Var<T>> parents = {x, gamma, beta};
  if (bias.valid()) parents.push_back(bias);
  return Var<T>::result(std::move(out), std::move(parents),
                        [x, gamma, beta, bias, B, C, hw](VarNode<T>& n) {
                          const T* g = n.grad.data();
                          const T* px = x.value().data();
                          const T* pg = gamma.value().data();
                          bool need_x = x.requires_grad();
                          bool need_gamma = gamma.requires_grad();
                          bool need_beta = beta.requires_grad();
                          bool need_bias = bias.valid() && bias.requires_grad();
                          T* gx = need_x ? Var<T>::ensure_grad(*x.node()).data() : nullptr;
                          T* gg = need_gamma ? Var<T>::ensure_grad(*gamma.node()).data() : nullptr;
                          T* gb = need_beta ? Var<T>::ensure_grad(*beta.node()).data() : nullptr;
                          T* gc = need_bias ? Var<T>::ensure_grad(*bias.node()).data() : nullptr;
                          for (int64_t b = 0; b < B; ++b)
                            for (int64_t c = 0; c < C; ++c) {
                              const T* gk = g + (b * C + c) * hw;
                              const T* xk = px + (b * C + c) * hw;
                              T sum_g = T(0), sum_gx = T(0);
                              for (int64_t i = 0; i < hw; ++i) {
                                sum_g += gk[i];
                                sum_gx += gk[i] * xk[i];
                              }
                              if (gx) {
                                T scale = pg[c];
                                T* dk = gx + (b * C + c) * hw;
                                for (int64_t i = 0; i < hw; ++i) dk[i] += gk[i] * scale;
                              }
                              if (gg) gg[c] += sum_gx;
                              if (gb) gb[c] += sum_g;
                              if (gc) gc[b * C + c] += sum_g;
                            }
                        });
}

// ---------------------------------------------------------------------------
// Spectral weight scaling: wbar = w / max(sigma, eps), sigma = u^T W_mat v with
// u, v held constant. Gradient follows the bilinear dependence of sigma on w.
// ---------------------------------------------------------------------------

template <typename T>
Var<T> spectral_scale(const Var<T>& w, const Tensor<T>& u, const Tensor<T>& v, T sigma_floor) {
  const Tensor<T>& wv = w.value();
  int64_t rows = wv.dim(0);
  int64_t cols = wv.numel() / rows;
  T sigma = T(0);
  for (int64_t i = 0; i < rows; ++i) {
    const T* wrow = wv.data() + i * cols;
    T acc = T(0);
    for (int64_t j = 0; j < cols; ++j) acc += wrow[j] * v[j];
    sigma += u[i] * acc;
  }
  bool clamped = !(sigma > sigma_floor);
  if (clamped) sigma = sigma_floor;
  T inv_sigma = T(1) / sigma;
  Tensor<T> out = Tensor<T>::uninit(wv.shape());
  const T* pw = wv.data();
  T* po = out.data();
  for (int64_t i = 0, e = wv.numel(); i < e; ++i) po[i] = pw[i] * inv_sigma;
  return Var<T>::result(std::move(out), {w},
                        [w, u, v, inv_sigma, clamped, rows, cols](VarNode<T>& n) {
                          if (!w.requires_grad()) return;
                          Tensor<T>& gw = Var<T>::ensure_grad(*w.node());
                          const T* g = n.grad.data();
                          const T* wbar = n.value.data();
                          if (clamped) {
                            for (int64_t i = 0, e = gw.numel(); i < e; ++i)
                              gw[i] += g[i] * inv_sigma;
                            return;
                          }
                          T inner = T(0);
                          for (int64_t i = 0, e = gw.numel(); i < e; ++i) inner += g[i] * wbar[i];
                          for (int64_t i = 0; i < rows; ++i)
                            for (int64_t j = 0; j < cols; ++j)
                              gw[i * cols + j] +=
                                  inv_sigma * (g[i * cols + j] - inner * u[i] * v[j]);
                        });
}

}  // namespace sologan
