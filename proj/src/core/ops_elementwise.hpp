#pragma once

#include <algorithm>
#include <cmath>

#include "core/autograd.hpp"

namespace sologan {

// ---------------------------------------------------------------------------
// Broadcast machinery (NumPy trailing-dimension rules).
// ---------------------------------------------------------------------------

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  Shape out(std::max(a.size(), b.size()));
  for (size_t i = 0; i < out.size(); ++i) {
    int64_t da = i < out.size() - a.size() ? 1 : a[i - (out.size() - a.size())];
    int64_t db = i < out.size() - b.size() ? 1 : b[i - (out.size() - b.size())];
    require(da == db || da == 1 || db == 1, ErrorCode::shape_mismatch,
            "shapes " + shape_str(a) + " and " + shape_str(b) + " do not broadcast");
    out[i] = std::max(da, db);
  }
  return out;
}

// Row-major strides of `shape` right-aligned against `big`, with 0 where the
// dimension broadcasts.
inline std::vector<int64_t> bcast_strides(const Shape& big, const Shape& shape) {
  std::vector<int64_t> strides(big.size(), 0);
  int64_t s = 1;
  for (size_t i = 0; i < shape.size(); ++i) {
    size_t di = shape.size() - 1 - i;
    size_t bi = big.size() - 1 - i;
    strides[bi] = (shape[di] == 1 && big[bi] != 1) ? 0 : s;
    s *= shape[di];
  }
  return strides;
}

// Walks `big` in row-major order calling f(out_index, small_index). The inner
// loop is hoisted so contiguous runs stay tight.
template <typename F>
void bcast_walk(const Shape& big, const std::vector<int64_t>& small_strides, F&& f) {
  int nd = static_cast<int>(big.size());
  int64_t total = shape_numel(big);
  if (total == 0) return;
  if (nd == 0) {
    f(int64_t(0), int64_t(0));
    return;
  }
  int64_t inner = big[nd - 1];
  int64_t inner_stride = small_strides[nd - 1];
  std::vector<int64_t> counter(nd, 0);
  int64_t is = 0;
  for (int64_t ib = 0; ib < total; ib += inner) {
    if (inner_stride == 1) {
      for (int64_t j = 0; j < inner; ++j) f(ib + j, is + j);
    } else {  // broadcast along the innermost dim
      for (int64_t j = 0; j < inner; ++j) f(ib + j, is);
    }
    // odometer over the outer dims
    for (int d = nd - 2; d >= 0; --d) {
      is += small_strides[d];
      if (++counter[d] < big[d]) break;
      counter[d] = 0;
      is -= small_strides[d] * big[d];
    }
  }
}

// dst (of shape `to`, broadcastable against src.shape()) += sum-reduce of src.
template <typename T>
void add_reduce_to(Tensor<T>& dst, const Shape& to, const Tensor<T>& src) {
  if (to == src.shape()) {
    T* d = dst.data();
    const T* s = src.data();
    for (int64_t i = 0, e = src.numel(); i < e; ++i) d[i] += s[i];
    return;
  }
  auto strides = bcast_strides(src.shape(), to);
  T* d = dst.data();
  const T* s = src.data();
  bcast_walk(src.shape(), strides, [&](int64_t ib, int64_t is) { d[is] += s[ib]; });
}

// ---------------------------------------------------------------------------
// Binary elementwise ops with broadcasting.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T, typename FwdF>
Tensor<T> bcast_apply(const Tensor<T>& a, const Tensor<T>& b, FwdF&& f) {
  if (a.shape() == b.shape()) {
    Tensor<T> out = Tensor<T>::uninit(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (int64_t i = 0, e = a.numel(); i < e; ++i) po[i] = f(pa[i], pb[i]);
    return out;
  }
  Shape os = broadcast_shape(a.shape(), b.shape());
  Tensor<T> out = Tensor<T>::uninit(os);
  auto sa = bcast_strides(os, a.shape());
  auto sb = bcast_strides(os, b.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  // walk with two small strides: do it in two passes? One fused pass instead:
  int nd = static_cast<int>(os.size());
  int64_t total = shape_numel(os);
  if (nd == 0) {
    po[0] = f(pa[0], pb[0]);
    return out;
  }
  int64_t inner = os[nd - 1];
  std::vector<int64_t> counter(nd, 0);
  int64_t ia = 0, ib = 0;
  int64_t ias = sa[nd - 1], ibs = sb[nd - 1];
  for (int64_t o = 0; o < total; o += inner) {
    for (int64_t j = 0; j < inner; ++j) po[o + j] = f(pa[ia + j * ias], pb[ib + j * ibs]);
    for (int d = nd - 2; d >= 0; --d) {
      ia += sa[d];
      ib += sb[d];
      if (++counter[d] < os[d]) break;
      counter[d] = 0;
      ia -= sa[d] * os[d];
      ib -= sb[d] * os[d];
    }
  }
  return out;
}

}  // namespace detail

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = detail::bcast_apply(a.value(), b.value(), [](T x, T y) { return x + y; });
  return Var<T>::result(std::move(out), {a, b}, [a, b](VarNode<T>& n) {
    if (a.requires_grad()) add_reduce_to(Var<T>::ensure_grad(*a.node()), a.shape(), n.grad);
    if (b.requires_grad()) add_reduce_to(Var<T>::ensure_grad(*b.node()), b.shape(), n.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = detail::bcast_apply(a.value(), b.value(), [](T x, T y) { return x - y; });
  return Var<T>::result(std::move(out), {a, b}, [a, b](VarNode<T>& n) {
    if (a.requires_grad()) add_reduce_to(Var<T>::ensure_grad(*a.node()), a.shape(), n.grad);
    if (b.requires_grad()) {
      Tensor<T> neg = Tensor<T>::uninit(n.grad.shape());
      const T* g = n.grad.data();
      T* p = neg.data();
      for (int64_t i = 0, e = neg.numel(); i < e; ++i) p[i] = -g[i];
      add_reduce_to(Var<T>::ensure_grad(*b.node()), b.shape(), neg);
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = detail::bcast_apply(a.value(), b.value(), [](T x, T y) { return x * y; });
  return Var<T>::result(std::move(out), {a, b}, [a, b](VarNode<T>& n) {
    if (a.requires_grad()) {
      Tensor<T> ga = detail::bcast_apply(n.grad, b.value(), [](T g, T y) { return g * y; });
      add_reduce_to(Var<T>::ensure_grad(*a.node()), a.shape(), ga);
    }
    if (b.requires_grad()) {
      Tensor<T> gb = detail::bcast_apply(n.grad, a.value(), [](T g, T x) { return g * x; });
      add_reduce_to(Var<T>::ensure_grad(*b.node()), b.shape(), gb);
    }
  });
}

template <typename T>
Var<T> divide(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = detail::bcast_apply(a.value(), b.value(), [](T x, T y) { return x / y; });
  return Var<T>::result(std::move(out), {a, b}, [a, b](VarNode<T>& n) {
    if (a.requires_grad()) {
      Tensor<T> ga = detail::bcast_apply(n.grad, b.value(), [](T g, T y) { return g / y; });
      add_reduce_to(Var<T>::ensure_grad(*a.node()), a.shape(), ga);
    }
    if (b.requires_grad()) {
      Tensor<T> q = detail::bcast_apply(a.value(), b.value(), [](T x, T y) { return -x / (y * y); });
      Tensor<T> gb = detail::bcast_apply(n.grad, q, [](T g, T dq) { return g * dq; });
      add_reduce_to(Var<T>::ensure_grad(*b.node()), b.shape(), gb);
    }
  });
}

// ---------------------------------------------------------------------------
// Unary / scalar ops.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T, typename FwdF, typename BwdF>
Var<T> unary_op(const Var<T>& a, FwdF&& fwd, BwdF&& bwd_from_in_out) {
  const Tensor<T>& x = a.value();
  Tensor<T> out = Tensor<T>::uninit(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (int64_t i = 0, e = x.numel(); i < e; ++i) po[i] = fwd(px[i]);
  return Var<T>::result(std::move(out), {a}, [a, bwd = std::move(bwd_from_in_out)](VarNode<T>& n) {
    if (!a.requires_grad()) return;
    Tensor<T>& ga = Var<T>::ensure_grad(*a.node());
    const T* g = n.grad.data();
    const T* xin = a.value().data();
    const T* yout = n.value.data();
    T* pg = ga.data();
    for (int64_t i = 0, e = ga.numel(); i < e; ++i) pg[i] += g[i] * bwd(xin[i], yout[i]);
  });
}

}  // namespace detail

template <typename T>
Var<T> neg(const Var<T>& a) {
  return detail::unary_op(a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return detail::unary_op(a, [](T x) { return x > T(0) ? x : T(0); },
                          [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  return detail::unary_op(a, [slope](T x) { return x > T(0) ? x : slope * x; },
                          [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <typename T>
Var<T> tanh_act(const Var<T>& a) {
  return detail::unary_op(a, [](T x) { return std::tanh(x); },
                          [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> abs_val(const Var<T>& a) {
  return detail::unary_op(a, [](T x) { return std::abs(x); },
                          [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  return detail::unary_op(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

// 1 / sqrt(x + eps)
template <typename T>
Var<T> rsqrt_eps(const Var<T>& a, T eps) {
  return detail::unary_op(a, [eps](T x) { return T(1) / std::sqrt(x + eps); },
                          [](T, T y) { return T(-0.5) * y * y * y; });
}

template <typename T>
Var<T> clamp_min(const Var<T>& a, T lo) {
  return detail::unary_op(a, [lo](T x) { return x < lo ? lo : x; },
                          [lo](T x, T) { return x < lo ? T(0) : T(1); });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& a, T s) {
  return detail::unary_op(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return detail::unary_op(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

// ---------------------------------------------------------------------------
// Reductions, reshape, concat.
// ---------------------------------------------------------------------------

namespace detail {

inline Shape reduced_shape(const Shape& in, const std::vector<int>& axes, bool keepdim) {
  std::vector<bool> red(in.size(), false);
  for (int a : axes) red[static_cast<size_t>(a)] = true;
  Shape out;
  for (size_t i = 0; i < in.size(); ++i) {
    if (red[i]) {
      if (keepdim) out.push_back(1);
    } else {
      out.push_back(in[i]);
    }
  }
  return out;
}

}  // namespace detail

template <typename T>
Var<T> reduce_sum(const Var<T>& a, const std::vector<int>& axes, bool keepdim) {
  const Tensor<T>& x = a.value();
  Shape keep = detail::reduced_shape(x.shape(), axes, true);
  Tensor<T> out(keep);
  add_reduce_to(out, keep, x);
  Shape final_shape = detail::reduced_shape(x.shape(), axes, keepdim);
  out = out.reshaped(final_shape);
  return Var<T>::result(std::move(out), {a}, [a, keep](VarNode<T>& n) {
    if (!a.requires_grad()) return;
    Tensor<T>& ga = Var<T>::ensure_grad(*a.node());
    auto strides = bcast_strides(a.shape(), keep);
    T* d = ga.data();
    const T* g = n.grad.data();
    bcast_walk(a.shape(), strides, [&](int64_t ib, int64_t is) { d[ib] += g[is]; });
  });
}

template <typename T>
Var<T> reduce_mean(const Var<T>& a, const std::vector<int>& axes, bool keepdim) {
  int64_t count = 1;
  for (int ax : axes) count *= a.shape()[static_cast<size_t>(ax)];
  return mul_scalar(reduce_sum(a, axes, keepdim), T(1) / static_cast<T>(count));
}

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  const Tensor<T>& x = a.value();
  T acc = T(0);
  const T* px = x.data();
  for (int64_t i = 0, e = x.numel(); i < e; ++i) acc += px[i];
  return Var<T>::result(Tensor<T>::scalar(acc), {a}, [a](VarNode<T>& n) {
    if (!a.requires_grad()) return;
    Tensor<T>& ga = Var<T>::ensure_grad(*a.node());
    T g = n.grad[0];
    T* d = ga.data();
    for (int64_t i = 0, e = ga.numel(); i < e; ++i) d[i] += g;
  });
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
  return mul_scalar(sum_all(a), T(1) / static_cast<T>(a.value().numel()));
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  return Var<T>::result(std::move(out), {a}, [a](VarNode<T>& n) {
    if (!a.requires_grad()) return;
    Var<T>::accumulate_grad(*a.node(), n.grad.reshaped(a.shape()));
  });
}

// Concatenation along axis 1 of two rank-2 tensors [B, Da] ++ [B, Db].
template <typename T>
Var<T> concat_cols(const Var<T>& a, const Var<T>& b) {
  const Tensor<T>& xa = a.value();
  const Tensor<T>& xb = b.value();
  require(xa.ndim() == 2 && xb.ndim() == 2 && xa.dim(0) == xb.dim(0),
          ErrorCode::shape_mismatch, "concat_cols expects [B,Da],[B,Db]");
  int64_t rows = xa.dim(0), da = xa.dim(1), db = xb.dim(1);
  Tensor<T> out = Tensor<T>::uninit({rows, da + db});
  for (int64_t r = 0; r < rows; ++r) {
    std::copy_n(xa.data() + r * da, da, out.data() + r * (da + db));
    std::copy_n(xb.data() + r * db, db, out.data() + r * (da + db) + da);
  }
  return Var<T>::result(std::move(out), {a, b}, [a, b, rows, da, db](VarNode<T>& n) {
    const T* g = n.grad.data();
    if (a.requires_grad()) {
      Tensor<T>& ga = Var<T>::ensure_grad(*a.node());
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < da; ++j) ga[r * da + j] += g[r * (da + db) + j];
    }
    if (b.requires_grad()) {
      Tensor<T>& gb = Var<T>::ensure_grad(*b.node());
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < db; ++j) gb[r * db + j] += g[r * (da + db) + da + j];
    }
  });
}

template <typename T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) {
  return add(a, b);
}
template <typename T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) {
  return sub(a, b);
}
template <typename T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) {
  return mul(a, b);
}

}  // namespace sologan
