#pragma once

#include "nn/layers.hpp"

namespace sologan {

struct NetworkConfig {
  int64_t domain_count = 2;
  int64_t image_size = 256;
  int64_t base_channels = 64;
  int64_t style_dim = 8;

  void validate() const {
    require(domain_count >= 2, ErrorCode::config, "domain_count must be >= 2");
    require(image_size % 16 == 0 && image_size >= 32, ErrorCode::config,
            "image_size must be a multiple of 16 and at least 32");
    require(base_channels >= 1, ErrorCode::config, "base_channels must be positive");
    require(style_dim >= 1, ErrorCode::config, "style_dim must be positive");
  }
};

// ---------------------------------------------------------------------------
// Content encoder: shared across all domains, unconditional.
// ---------------------------------------------------------------------------

template <typename T>
struct ContentEncoder {
  Conv2d<T> stem, down1, down2;
  InstanceNorm2d<T> norm_stem, norm1, norm2;
  std::vector<RResBlock<T>> blocks;

  ContentEncoder() = default;
  explicit ContentEncoder(const NetworkConfig& cfg) {
    int64_t b = cfg.base_channels;
    stem = Conv2d<T>(3, b, 7, 1, 3, /*reflect=*/true);
    norm_stem = InstanceNorm2d<T>(b);
    down1 = Conv2d<T>(b, 2 * b, 4, 2, 1);
    norm1 = InstanceNorm2d<T>(2 * b);
    down2 = Conv2d<T>(2 * b, 4 * b, 4, 2, 1);
    norm2 = InstanceNorm2d<T>(4 * b);
    for (int i = 0; i < 4; ++i) blocks.emplace_back(4 * b);
  }

  void init(Rng& rng) {
    stem.init(rng);
    norm_stem.init(rng);
    down1.init(rng);
    norm1.init(rng);
    down2.init(rng);
    norm2.init(rng);
    for (auto& blk : blocks) blk.init(rng);
  }

  Var<T> forward(const Var<T>& x) const {
    const Shape& s = x.shape();
    require(s.size() == 4 && s[1] == 3, ErrorCode::shape_mismatch,
            "content encoder expects [B,3,H,W], got " + shape_str(s));
    require(s[2] % 4 == 0 && s[3] % 4 == 0, ErrorCode::shape_mismatch,
            "content encoder needs spatial dims divisible by 4, got " + shape_str(s));
    Var<T> h = relu(norm_stem.forward(stem.forward(x)));
    h = relu(norm1.forward(down1.forward(h)));
    h = relu(norm2.forward(down2.forward(h)));
    for (const auto& blk : blocks) h = blk.forward(h);
    return h;
  }

  void collect(const std::string& prefix, ParamBag<T>& bag) {
    stem.collect(prefix + ".stem", bag);
    norm_stem.collect(prefix + ".norm_stem", bag);
    down1.collect(prefix + ".down1", bag);
    norm1.collect(prefix + ".norm1", bag);
    down2.collect(prefix + ".down2", bag);
    norm2.collect(prefix + ".norm2", bag);
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(prefix + ".res" + std::to_string(i), bag);
  }
};

// ---------------------------------------------------------------------------
// Style encoder: conditioned on the one-hot domain label through CBIN.
// ---------------------------------------------------------------------------

template <typename T>
struct StyleEncoder {
  Conv2d<T> stem;
  CdResBlock<T> cd1, cd2, cd3;
  Cbin<T> tail_norm;
  Linear<T> fc;
  int64_t domain_count = 0;

  StyleEncoder() = default;
  explicit StyleEncoder(const NetworkConfig& cfg) : domain_count(cfg.domain_count) {
    int64_t b = cfg.base_channels;
    int64_t n = cfg.domain_count;
    stem = Conv2d<T>(3, b, 4, 2, 1);
    cd1 = CdResBlock<T>(b, 2 * b, n);
    cd2 = CdResBlock<T>(2 * b, 4 * b, n);
    cd3 = CdResBlock<T>(4 * b, 4 * b, n);
    tail_norm = Cbin<T>(4 * b, n);
    fc = Linear<T>(4 * b, cfg.style_dim);
  }

  void init(Rng& rng) {
    stem.init(rng);
    cd1.init(rng);
    cd2.init(rng);
    cd3.init(rng);
    tail_norm.init(rng);
    fc.init(rng);
  }

  Var<T> forward(const Var<T>& x, const std::vector<int64_t>& labels) const {
    require(x.shape()[0] == static_cast<int64_t>(labels.size()), ErrorCode::dimension_mismatch,
            "style encoder: one label per batch sample required");
    Var<T> cond = Var<T>::leaf(one_hot_batch<T>(labels, domain_count), false);
    Var<T> h = stem.forward(x);
    h = cd1.forward(h, cond);
    h = cd2.forward(h, cond);
    h = cd3.forward(h, cond);
    h = relu(tail_norm.forward(h, cond));
    h = reduce_mean(h, {2, 3}, false);  // global average pooling -> [B, 4b]
    return fc.forward(h);
  }

  void collect(const std::string& prefix, ParamBag<T>& bag) {
    stem.collect(prefix + ".stem", bag);
    cd1.collect(prefix + ".cd1", bag);
    cd2.collect(prefix + ".cd2", bag);
    cd3.collect(prefix + ".cd3", bag);
    tail_norm.collect(prefix + ".tail_norm", bag);
    fc.collect(prefix + ".fc", bag);
  }
};

// ---------------------------------------------------------------------------
// Generator: conditioned on one_hot(target) ++ style through CBIN.
// ---------------------------------------------------------------------------

template <typename T>
struct Generator {
  Conv2d<T> stem;
  Cbin<T> stem_norm;
  std::vector<CResBlock<T>> blocks;
  Cbin<T> post_norm;
  ConvTranspose2d<T> up1, up2;
  Cbin<T> up1_norm, up2_norm;
  Conv2d<T> head;
  int64_t domain_count = 0, style_dim = 0;

  Generator() = default;
  explicit Generator(const NetworkConfig& cfg)
      : domain_count(cfg.domain_count), style_dim(cfg.style_dim) {
    int64_t b = cfg.base_channels;
    int64_t cond_dim = cfg.domain_count + cfg.style_dim;
    stem = Conv2d<T>(4 * b, 4 * b, 3, 1, 1);
    stem_norm = Cbin<T>(4 * b, cond_dim);
    for (int i = 0; i < 5; ++i) blocks.emplace_back(4 * b, cond_dim);
    post_norm = Cbin<T>(4 * b, cond_dim);
    up1 = ConvTranspose2d<T>(4 * b, 2 * b, 4, 2, 1);
    up1_norm = Cbin<T>(2 * b, cond_dim);
    up2 = ConvTranspose2d<T>(2 * b, b, 4, 2, 1);
    up2_norm = Cbin<T>(b, cond_dim);
    head = Conv2d<T>(b, 3, 7, 1, 3, /*reflect=*/true);
  }

  void init(Rng& rng) {
    stem.init(rng);
    stem_norm.init(rng);
    for (auto& blk : blocks) blk.init(rng);
    post_norm.init(rng);
    up1.init(rng);
    up1_norm.init(rng);
    up2.init(rng);
    up2_norm.init(rng);
    head.init(rng);
  }

  Var<T> forward(const Var<T>& content, const Var<T>& style,
                 const std::vector<int64_t>& target_labels) const {
    require(style.shape().size() == 2 && style.shape()[1] == style_dim,
            ErrorCode::dimension_mismatch,
            "generator: style code must be [B," + std::to_string(style_dim) + "], got " +
                shape_str(style.shape()));
    require(content.shape()[0] == static_cast<int64_t>(target_labels.size()) &&
                content.shape()[0] == style.shape()[0],
            ErrorCode::dimension_mismatch, "generator: batch size mismatch");
    Var<T> label_vec = Var<T>::leaf(one_hot_batch<T>(target_labels, domain_count), false);
    Var<T> cond = concat_cols(label_vec, style);
    Var<T> h = relu(stem_norm.forward(stem.forward(content), cond));
    for (const auto& blk : blocks) h = blk.forward(h, cond);
    h = relu(post_norm.forward(h, cond));
    h = relu(up1_norm.forward(up1.forward(h), cond));
    h = relu(up2_norm.forward(up2.forward(h), cond));
    return tanh_act(head.forward(h));
  }

  void collect(const std::string& prefix, ParamBag<T>& bag) {
    stem.collect(prefix + ".stem", bag);
    stem_norm.collect(prefix + ".stem_norm", bag);
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(prefix + ".res" + std::to_string(i), bag);
    post_norm.collect(prefix + ".post_norm", bag);
    up1.collect(prefix + ".up1", bag);
    up1_norm.collect(prefix + ".up1_norm", bag);
    up2.collect(prefix + ".up2", bag);
    up2_norm.collect(prefix + ".up2_norm", bag);
    head.collect(prefix + ".head", bag);
  }
};

// ---------------------------------------------------------------------------
// Projection-with-classification discriminator.
// ---------------------------------------------------------------------------

template <typename T>
struct DiscriminatorVerdict {
  Var<T> dis;  // [B] realness score
  Var<T> cls;  // [B, n] domain logits
  Var<T> h;    // [B, 8b] pooled shared feature
  Var<T> d;    // [B] unconditional score component
};

template <typename T>
struct Discriminator {
  Conv2d<T> conv1, conv2, conv3, conv4;
  Linear<T> fc;
  Embedding<T> embed;
  Conv2d<T> cls_conv1, cls_conv2;
  int64_t domain_count = 0;
  static constexpr T kLReluSlope = T(0.2);

  Discriminator() = default;
  explicit Discriminator(const NetworkConfig& cfg) : domain_count(cfg.domain_count) {
    int64_t b = cfg.base_channels;
    int64_t n = cfg.domain_count;
    conv1 = Conv2d<T>(3, b, 4, 2, 1);
    conv2 = Conv2d<T>(b, 2 * b, 4, 2, 1);
    conv3 = Conv2d<T>(2 * b, 4 * b, 4, 2, 1);
    conv4 = Conv2d<T>(4 * b, 8 * b, 4, 2, 1);
    fc = Linear<T>(8 * b, 1);
    embed = Embedding<T>(n, 8 * b);
    cls_conv1 = Conv2d<T>(8 * b, 16 * b, 4, 2, 1);
    // The Cn head keeps K4/S1/P0 from the reference layout; at small image
    // sizes the kernel is clamped to the remaining spatial extent.
    int64_t extent = cfg.image_size / 32;
    cls_conv2 = Conv2d<T>(16 * b, n, std::min<int64_t>(4, extent), 1, 0);
  }

  void init(Rng& rng) {
    conv1.init(rng);
    conv2.init(rng);
    conv3.init(rng);
    conv4.init(rng);
    fc.init(rng);
    embed.init(rng);
    cls_conv1.init(rng);
    cls_conv2.init(rng);
  }

  DiscriminatorVerdict<T> forward(const Var<T>& x, const std::vector<int64_t>& labels) const {
    const Shape& s = x.shape();
    require(s.size() == 4 && s[1] == 3, ErrorCode::shape_mismatch,
            "discriminator expects [B,3,H,W], got " + shape_str(s));
    require(s[2] % 16 == 0 && s[3] % 16 == 0, ErrorCode::shape_mismatch,
            "discriminator needs spatial dims divisible by 16, got " + shape_str(s));
    require(s[0] == static_cast<int64_t>(labels.size()), ErrorCode::dimension_mismatch,
            "discriminator: one label per batch sample required");
    for (int64_t y : labels)
      require(y >= 0 && y < domain_count, ErrorCode::invalid_label,
              "domain label " + std::to_string(y) + " out of range [0," +
                  std::to_string(domain_count) + ")");

    Var<T> f = leaky_relu(conv1.forward(x), kLReluSlope);
    f = leaky_relu(conv2.forward(f), kLReluSlope);
    f = leaky_relu(conv3.forward(f), kLReluSlope);
    f = leaky_relu(conv4.forward(f), kLReluSlope);  // shared feature map F

    DiscriminatorVerdict<T> v;
    v.h = reduce_mean(f, {2, 3}, false);                    // [B, 8b]
    v.d = reshape(fc.forward(v.h), {x.shape()[0]});         // [B]
    Var<T> e = embed.forward(labels);                       // [B, 8b]
    v.dis = add(reduce_sum(mul(e, v.h), {1}, false), v.d);  // Embed(y)·h + d

    Var<T> c = leaky_relu(cls_conv1.forward(f), kLReluSlope);
    c = cls_conv2.forward(c);
    v.cls = reduce_mean(c, {2, 3}, false);  // [B, n]
    return v;
  }

  void collect(const std::string& prefix, ParamBag<T>& bag) {
    conv1.collect(prefix + ".conv1", bag);
    conv2.collect(prefix + ".conv2", bag);
    conv3.collect(prefix + ".conv3", bag);
    conv4.collect(prefix + ".conv4", bag);
    fc.collect(prefix + ".fc", bag);
    embed.collect(prefix + ".embed", bag);
    cls_conv1.collect(prefix + ".cls_conv1", bag);
    cls_conv2.collect(prefix + ".cls_conv2", bag);
  }
};

// ---------------------------------------------------------------------------
// Model bundle.
// ---------------------------------------------------------------------------

template <typename T>
struct SologanModel {
  NetworkConfig config;
  ContentEncoder<T> content_encoder;
  StyleEncoder<T> style_encoder;
  Generator<T> generator;
  Discriminator<T> discriminator;

  SologanModel() = default;
  explicit SologanModel(const NetworkConfig& cfg)
      : config(cfg),
        content_encoder(cfg),
        style_encoder(cfg),
        generator(cfg),
        discriminator(cfg) {
    cfg.validate();
  }

  void init(uint64_t seed) {
    Rng rng(seed);
    content_encoder.init(rng);
    style_encoder.init(rng);
    generator.init(rng);
    discriminator.init(rng);
    bump_param_generation();
  }

  void collect(ParamBag<T>& bag) {
    content_encoder.collect("content_encoder", bag);
    style_encoder.collect("style_encoder", bag);
    generator.collect("generator", bag);
    discriminator.collect("discriminator", bag);
  }

  ParamBag<T> ge_params() {
    ParamBag<T> bag;
    content_encoder.collect("content_encoder", bag);
    style_encoder.collect("style_encoder", bag);
    generator.collect("generator", bag);
    return bag;
  }

  ParamBag<T> d_params() {
    ParamBag<T> bag;
    discriminator.collect("discriminator", bag);
    return bag;
  }
};

template <typename T>
int64_t count_parameters(ParamBag<T>& bag) {
  return bag.count_trainable();
}

}  // namespace sologan
