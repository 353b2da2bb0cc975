#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "core/ops_nn.hpp"
#include "core/rng.hpp"

namespace sologan {

// Global train/eval switch. Training mode runs spectral power iterations and
// updates the u/v estimates; eval mode treats them as frozen buffers so that
// forward passes are pure functions of the stored state.
bool training_mode();
void set_training_mode(bool on);

struct TrainingModeGuard {
  explicit TrainingModeGuard(bool on) : prev_(training_mode()) { set_training_mode(on); }
  ~TrainingModeGuard() { set_training_mode(prev_); }
  bool prev_;
};

template <typename T>
struct ParamBag {
  std::vector<std::pair<std::string, Var<T>>> params;
  std::vector<std::pair<std::string, Tensor<T>*>> buffers;

  void add_param(const std::string& name, const Var<T>& v) { params.emplace_back(name, v); }
  void add_buffer(const std::string& name, Tensor<T>* t) { buffers.emplace_back(name, t); }

  std::vector<Var<T>> param_vars() const {
    std::vector<Var<T>> out;
    out.reserve(params.size());
    for (auto& [name, v] : params) out.push_back(v);
    return out;
  }

  int64_t count_trainable() const {
    int64_t n = 0;
    for (auto& [name, v] : params) n += v.value().numel();
    return n;
  }
};

// ---------------------------------------------------------------------------
// One-hot encoding of domain labels.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> one_hot(int64_t label, int64_t domain_count) {
  require(domain_count >= 1, ErrorCode::invalid_argument, "one_hot: domain count must be >= 1");
  require(label >= 0 && label < domain_count, ErrorCode::invalid_label,
          "domain label " + std::to_string(label) + " out of range [0," +
              std::to_string(domain_count) + ")");
  Tensor<T> out({domain_count});
  out[label] = T(1);
  return out;
}

template <typename T>
Tensor<T> one_hot_batch(const std::vector<int64_t>& labels, int64_t domain_count) {
  Tensor<T> out({static_cast<int64_t>(labels.size()), domain_count});
  for (size_t b = 0; b < labels.size(); ++b) {
    Tensor<T> row = one_hot<T>(labels[b], domain_count);
    std::copy_n(row.data(), domain_count, out.data() + static_cast<int64_t>(b) * domain_count);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spectral normalization.
// ---------------------------------------------------------------------------

template <typename T>
struct SpectralState {
  Tensor<T> weight;  // flattened as (dim0) x (rest)
  Tensor<T> u;       // [dim0], unit norm
  int power_iterations = 1;
};

namespace detail {

template <typename T>
void normalize_vec(std::vector<T>& v) {
  T nrm = T(0);
  for (T x : v) nrm += x * x;
  nrm = std::sqrt(nrm);
  if (nrm < T(1e-12)) nrm = T(1e-12);
  for (T& x : v) x /= nrm;
}

// Runs `iters` rounds of v = norm(W^T u); u = norm(W v) and returns
// sigma = u^T W v. u (and v when given) are written back.
template <typename T>
T power_iterate(const Tensor<T>& w, Tensor<T>& u, int iters, Tensor<T>* v_out) {
  int64_t rows = w.dim(0);
  int64_t cols = w.numel() / rows;
  std::vector<T> uv(u.data(), u.data() + rows);
  std::vector<T> vv(static_cast<size_t>(cols), T(0));
  const T* pw = w.data();
  for (int it = 0; it < iters; ++it) {
    std::fill(vv.begin(), vv.end(), T(0));
    for (int64_t i = 0; i < rows; ++i) {
      T ui = uv[static_cast<size_t>(i)];
      const T* row = pw + i * cols;
      for (int64_t j = 0; j < cols; ++j) vv[static_cast<size_t>(j)] += ui * row[j];
    }
    normalize_vec(vv);
    for (int64_t i = 0; i < rows; ++i) {
      const T* row = pw + i * cols;
      T acc = T(0);
      for (int64_t j = 0; j < cols; ++j) acc += row[j] * vv[static_cast<size_t>(j)];
      uv[static_cast<size_t>(i)] = acc;
    }
    normalize_vec(uv);
  }
  T sigma = T(0);
  for (int64_t i = 0; i < rows; ++i) {
    const T* row = pw + i * cols;
    T acc = T(0);
    for (int64_t j = 0; j < cols; ++j) acc += row[j] * vv[static_cast<size_t>(j)];
    sigma += uv[static_cast<size_t>(i)] * acc;
  }
  std::copy(uv.begin(), uv.end(), u.data());
  if (v_out) {
    if (v_out->numel() != cols) *v_out = Tensor<T>({cols});
    std::copy(vv.begin(), vv.end(), v_out->data());
  }
  return sigma;
}

}  // namespace detail

inline constexpr double kSigmaFloor = 1e-12;

// Standalone spectral normalization: returns weight / sigma_hat and updates
// the left singular-vector estimate held in the state.
template <typename T>
Tensor<T> spectral_normalize(SpectralState<T>& state) {
  require(state.power_iterations >= 1, ErrorCode::invalid_argument,
          "spectral_normalize: power_iterations must be >= 1");
  require(state.u.numel() == state.weight.dim(0), ErrorCode::dimension_mismatch,
          "spectral_normalize: u length must equal the weight's leading dimension");
  T sigma = detail::power_iterate(state.weight, state.u, state.power_iterations,
                                  static_cast<Tensor<T>*>(nullptr));
  if (!(sigma > T(kSigmaFloor))) sigma = T(kSigmaFloor);
  Tensor<T> out(state.weight.shape());
  const T* pw = state.weight.data();
  T* po = out.data();
  for (int64_t i = 0, e = out.numel(); i < e; ++i) po[i] = pw[i] / sigma;
  return out;
}

// Per-layer spectral wrapper with (u, v) buffers and a per-generation cache of
// the normalized weight node, so each optimization step runs one power
// iteration and reuses the same graph node across every forward in the step.
template <typename T>
struct SpectralWrap {
  Tensor<T> u, v;
  mutable uint64_t cached_gen = 0;
  mutable bool cached_training = false;
  mutable Var<T> cached_wbar;

  void init(const Tensor<T>& w, Rng& rng) {
    int64_t rows = w.dim(0);
    u = Tensor<T>({rows});
    for (int64_t i = 0; i < rows; ++i) u[i] = static_cast<T>(rng.normal());
    std::vector<T> tmp(u.data(), u.data() + rows);
    detail::normalize_vec(tmp);
    std::copy(tmp.begin(), tmp.end(), u.data());
    detail::power_iterate(w, u, 1, &v);
    cached_gen = 0;
  }

  Var<T> normalized(const Var<T>& w) const {
    bool train = training_mode();
    if (cached_wbar.valid() && cached_gen == param_generation() && cached_training == train)
      return cached_wbar;
    auto* self = const_cast<SpectralWrap*>(this);
    T sigma_unused;
    if (train) {
      sigma_unused = detail::power_iterate(w.value(), self->u, 1, &self->v);
    }
    (void)sigma_unused;
    cached_wbar = spectral_scale(w, u, v, T(kSigmaFloor));
    cached_gen = param_generation();
    cached_training = train;
    return cached_wbar;
  }

  void collect(const std::string& prefix, ParamBag<T>& bag) {
    bag.add_buffer(prefix + ".u", &u);
    bag.add_buffer(prefix + ".v", &v);
  }
};

// ---------------------------------------------------------------------------
// Initialization helpers.
// ---------------------------------------------------------------------------

template <typename T>
void xavier_uniform_fill(Tensor<T>& w, Rng& rng) {
  int64_t receptive = 1;
  for (int i = 2; i < w.ndim(); ++i) receptive *= w.dim(i);
  int64_t fan_in = (w.ndim() > 1 ? w.dim(1) : w.dim(0)) * receptive;
  int64_t fan_out = w.dim(0) * receptive;
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (int64_t i = 0, e = w.numel(); i < e; ++i)
    w[i] = static_cast<T>(rng.uniform(-bound, bound));
}

// ---------------------------------------------------------------------------
// Layers.
// ---------------------------------------------------------------------------

template <typename T>
struct Conv2d {
  Var<T> weight, bias;
  SpectralWrap<T> sn;
  int64_t stride = 1, pad = 0;
  bool reflect = false;
  bool spectral = true;

  Conv2d() = default;
  Conv2d(int64_t in_ch, int64_t out_ch, int64_t k, int64_t stride_, int64_t pad_,
         bool reflect_ = false, bool spectral_ = true)
      : stride(stride_), pad(pad_), reflect(reflect_), spectral(spectral_) {
    weight = Var<T>::leaf(Tensor<T>({out_ch, in_ch, k, k}), true);
    bias = Var<T>::leaf(Tensor<T>({out_ch}), true);
  }

  void init(Rng& rng) {
    xavier_uniform_fill(weight.value(), rng);
    bias.value().fill(T(0));
    if (spectral) sn.init(weight.value(), rng);
  }

  Var<T> forward(const Var<T>& x) const {
    Var<T> w = spectral ? sn.normalized(weight) : weight;
    if (reflect && pad > 0) return conv2d(reflect_pad2d(x, pad), w, bias, stride, int64_t(0));
    return conv2d(x, w, bias, stride, pad);
  }

  void collect(const std::string& prefix, ParamBag<T>& bag) {
    bag.add_param(prefix + ".weight", weight);
    bag.add_param(prefix + ".bias", bias);
    if (spectral) sn.collect(prefix, bag);
  }
};

template <typename T>
struct ConvTranspose2d {
  Var<T> weight, bias;  // weight [in, out, k, k]
  SpectralWrap<T> sn;
  int64_t stride = 2, pad = 1;
  bool spectral = true;

  ConvTranspose2d() = default;
  ConvTranspose2d(int64_t in_ch, int64_t out_ch, int64_t k, int64_t stride_, int64_t pad_,
                  bool spectral_ = true)
      : stride(stride_), pad(pad_), spectral(spectral_) {
    weight = Var<T>::leaf(Tensor<T>({in_ch, out_ch, k, k}), true);
    bias = Var<T>::leaf(Tensor<T>({out_ch}), true);
  }

  void init(Rng& rng) {
    xavier_uniform_fill(weight.value(), rng);
    bias.value().fill(T(0));
    if (spectral) sn.init(weight.value(), rng);
  }

  Var<T> forward(const Var<T>& x) const {
    Var<T> w = spectral ? sn.normalized(weight) : weight;
    return conv_transpose2d(x, w, bias, stride, pad);
  }

  void collect(const std::string& prefix, ParamBag<T>& bag) {
    bag.add_param(prefix + ".weight", weight);
    bag.add_param(prefix + ".bias", bias);
    if (spectral) sn.collect(prefix, bag);
  }
};

template <typename T>
struct Linear {
  Var<T> weight, bias;  // weight [out, in]
  SpectralWrap<T> sn;
  bool spectral = true;

  Linear() = default;
  Linear(int64_t in_dim, int64_t out_dim, bool spectral_ = true) : spectral(spectral_) {
    weight = Var<T>::leaf(Tensor<T>({out_dim, in_dim}), true);
    bias = Var<T>::leaf(Tensor<T>({out_dim}), true);
  }

  void init(Rng& rng) {
    xavier_uniform_fill(weight.value(), rng);
    bias.value().fill(T(0));
    if (spectral) sn.init(weight.value(), rng);
  }

  Var<T> forward(const Var<T>& x) const {
    Var<T> w = spectral ? sn.normalized(weight) : weight;
    return linear(x, w, bias);
  }

  void collect(const std::string& prefix, ParamBag<T>& bag) {
    bag.add_param(prefix + ".weight", weight);
    bag.add_param(prefix + ".bias", bias);
    if (spectral) sn.collect(prefix, bag);
  }
};

template <typename T>
struct Embedding {
  Var<T> table;  // [n, dim]
  SpectralWrap<T> sn;
  bool spectral = true;

  Embedding() = default;
  Embedding(int64_t n, int64_t dim, bool spectral_ = true) : spectral(spectral_) {
    table = Var<T>::leaf(Tensor<T>({n, dim}), true);
  }

  void init(Rng& rng) {
    xavier_uniform_fill(table.value(), rng);
    if (spectral) sn.init(table.value(), rng);
  }

  Var<T> forward(const std::vector<int64_t>& ids) const {
    Var<T> t = spectral ? sn.normalized(table) : table;
    return embedding(t, ids);
  }

  void collect(const std::string& prefix, ParamBag<T>& bag) {
    bag.add_param(prefix + ".weight", table);
    if (spectral) sn.collect(prefix, bag);
  }
};

inline constexpr double kInstanceNormEps = 1e-5;

// Zero-mean unit-variance normalization over each sample's spatial extent.
template <typename T>
Var<T> instance_normalize(const Var<T>& x, T eps = T(kInstanceNormEps)) {
  return instance_norm_op(x, eps);
}

template <typename T>
struct InstanceNorm2d {
  Var<T> gamma, beta;  // [C]
  int64_t channels = 0;

  InstanceNorm2d() = default;
  explicit InstanceNorm2d(int64_t c) : channels(c) {
    gamma = Var<T>::leaf(Tensor<T>({c}, T(1)), true);
    beta = Var<T>::leaf(Tensor<T>({c}), true);
  }

  void init(Rng&) {
    gamma.value().fill(T(1));
    beta.value().fill(T(0));
  }

  Var<T> forward(const Var<T>& x) const {
    return channel_affine(instance_normalize(x), gamma, beta, Var<T>());
  }

  void collect(const std::string& prefix, ParamBag<T>& bag) {
    bag.add_param(prefix + ".gamma", gamma);
    bag.add_param(prefix + ".beta", beta);
  }
};

// Central biasing instance normalization: the instance-normalized map gets a
// learned per-channel affine plus a bounded per-channel bias computed from the
// condition vector, y = IN(x) * gamma + beta + tanh(W cond + b).
template <typename T>
struct Cbin {
  Var<T> gamma, beta;
  Linear<T> bias_map;
  int64_t channels = 0, cond_dim = 0;

  Cbin() = default;
  Cbin(int64_t c, int64_t cond_dim_, bool spectral = true)
      : bias_map(cond_dim_, c, spectral), channels(c), cond_dim(cond_dim_) {
    gamma = Var<T>::leaf(Tensor<T>({c}, T(1)), true);
    beta = Var<T>::leaf(Tensor<T>({c}), true);
  }

  void init(Rng& rng) {
    gamma.value().fill(T(1));
    beta.value().fill(T(0));
    bias_map.init(rng);
  }

  Var<T> forward(const Var<T>& x, const Var<T>& cond) const {
    require(cond.valid(), ErrorCode::config, "CBIN requires a condition vector");
    require(cond.shape().size() == 2 && cond.shape()[1] == cond_dim, ErrorCode::dimension_mismatch,
            "CBIN condition length " +
                std::to_string(cond.shape().size() == 2 ? cond.shape()[1] : -1) +
                " does not match bias-map input " + std::to_string(cond_dim));
    require(cond.shape()[0] == x.shape()[0], ErrorCode::dimension_mismatch,
            "CBIN condition batch does not match input batch");
    Var<T> cbias = tanh_act(bias_map.forward(cond));  // [B,C], bounded to (-1,1)
    return channel_affine(instance_normalize(x), gamma, beta, cbias);
  }

  void collect(const std::string& prefix, ParamBag<T>& bag) {
    bag.add_param(prefix + ".gamma", gamma);
    bag.add_param(prefix + ".beta", beta);
    bias_map.collect(prefix + ".bias_map", bag);
  }
};

// ---------------------------------------------------------------------------
// Residual blocks (R / CD / C variants).
// ---------------------------------------------------------------------------

// R: two conv3x3 + IN + ReLU stages with an identity skip; shape-preserving.
template <typename T>
struct RResBlock {
  Conv2d<T> conv1, conv2;
  InstanceNorm2d<T> norm1, norm2;

  RResBlock() = default;
  RResBlock(int64_t channels, bool spectral = true)
      : conv1(channels, channels, 3, 1, 1, false, spectral),
        conv2(channels, channels, 3, 1, 1, false, spectral),
        norm1(channels),
        norm2(channels) {}

  void init(Rng& rng) {
    conv1.init(rng);
    norm1.init(rng);
    conv2.init(rng);
    norm2.init(rng);
  }

  Var<T> forward(const Var<T>& x) const {
    Var<T> h = relu(norm1.forward(conv1.forward(x)));
    h = relu(norm2.forward(conv2.forward(h)));
    return add(x, h);
  }

  void collect(const std::string& prefix, ParamBag<T>& bag) {
    conv1.collect(prefix + ".conv1", bag);
    norm1.collect(prefix + ".norm1", bag);
    conv2.collect(prefix + ".conv2", bag);
    norm2.collect(prefix + ".norm2", bag);
  }
};

// CD: conditional conv path, average-pool downsampling on both branches, and a
// 1x1 projection on the skip when the channel count changes.
template <typename T>
struct CdResBlock {
  Conv2d<T> conv1, conv2;
  Cbin<T> norm1, norm2;
  std::optional<Conv2d<T>> skip;

  CdResBlock() = default;
  CdResBlock(int64_t in_ch, int64_t out_ch, int64_t cond_dim, bool spectral = true)
      : conv1(in_ch, out_ch, 3, 1, 1, false, spectral),
        conv2(out_ch, out_ch, 3, 1, 1, false, spectral),
        norm1(out_ch, cond_dim, spectral),
        norm2(out_ch, cond_dim, spectral) {
    if (in_ch != out_ch) skip.emplace(in_ch, out_ch, 1, 1, 0, false, spectral);
  }

  void init(Rng& rng) {
    conv1.init(rng);
    norm1.init(rng);
    conv2.init(rng);
    norm2.init(rng);
    if (skip) skip->init(rng);
  }

  Var<T> forward(const Var<T>& x, const Var<T>& cond) const {
    require(cond.valid(), ErrorCode::config, "CD-ResBlock requires a condition vector");
    Var<T> h = relu(norm1.forward(conv1.forward(x), cond));
    h = relu(norm2.forward(conv2.forward(h), cond));
    h = avg_pool2d(h, 2, 2);
    Var<T> s = skip ? skip->forward(x) : x;
    return add(h, avg_pool2d(s, 2, 2));
  }

  void collect(const std::string& prefix, ParamBag<T>& bag) {
    conv1.collect(prefix + ".conv1", bag);
    norm1.collect(prefix + ".norm1", bag);
    conv2.collect(prefix + ".conv2", bag);
    norm2.collect(prefix + ".norm2", bag);
    if (skip) skip->collect(prefix + ".skip", bag);
  }
};

// C: two conv3x3 + CBIN + ReLU stages with an identity skip; shape-preserving.
template <typename T>
struct CResBlock {
  Conv2d<T> conv1, conv2;
  Cbin<T> norm1, norm2;

  CResBlock() = default;
  CResBlock(int64_t channels, int64_t cond_dim, bool spectral = true)
      : conv1(channels, channels, 3, 1, 1, false, spectral),
        conv2(channels, channels, 3, 1, 1, false, spectral),
        norm1(channels, cond_dim, spectral),
        norm2(channels, cond_dim, spectral) {}

  void init(Rng& rng) {
    conv1.init(rng);
    norm1.init(rng);
    conv2.init(rng);
    norm2.init(rng);
  }

  Var<T> forward(const Var<T>& x, const Var<T>& cond) const {
    require(cond.valid(), ErrorCode::config, "C-ResBlock requires a condition vector");
    Var<T> h = relu(norm1.forward(conv1.forward(x), cond));
    h = relu(norm2.forward(conv2.forward(h), cond));
    return add(x, h);
  }

  void collect(const std::string& prefix, ParamBag<T>& bag) {
    conv1.collect(prefix + ".conv1", bag);
    norm1.collect(prefix + ".norm1", bag);
    conv2.collect(prefix + ".conv2", bag);
    norm2.collect(prefix + ".norm2", bag);
  }
};

}  // namespace sologan
