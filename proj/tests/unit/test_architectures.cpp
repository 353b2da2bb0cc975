#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "model/networks.hpp"
#include "test_util.hpp"

using namespace sologan;
using namespace sologan::test;

namespace {

NetworkConfig toy_config(int64_t n = 2, int64_t image = 32, int64_t base = 4) {
  NetworkConfig cfg;
  cfg.domain_count = n;
  cfg.image_size = image;
  cfg.base_channels = base;
  return cfg;
}

template <typename T>
Var<T> random_image(const Shape& shape, Rng& rng) {
  return Var<T>::leaf(random_tensor<T>(shape, rng, -0.9, 0.9), false);
}

}  // namespace

TEST_CASE("content encoder shape contract at full scale") {
  NetworkConfig cfg;  // defaults: 256x256, base 64
  ContentEncoder<float> enc(cfg);
  Rng rng(1);
  enc.init(rng);
  auto x = random_image<float>({1, 3, 256, 256}, rng);
  Var<float> c = enc.forward(x);
  CHECK(c.shape() == Shape{1, 256, 64, 64});

  auto x64 = random_image<float>({1, 3, 64, 64}, rng);
  CHECK(enc.forward(x64).shape() == Shape{1, 256, 16, 16});
}

TEST_CASE("content encoder rejects non-divisible spatial sizes") {
  ContentEncoder<float> enc(toy_config());
  Rng rng(2);
  enc.init(rng);
  auto bad = random_image<float>({1, 3, 30, 30}, rng);
  try {
    enc.forward(bad);
    FAIL("expected shape error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::shape_mismatch);
  }
}

TEST_CASE("content codes share shape and scale across domains at init") {
  NetworkConfig cfg = toy_config(2, 64, 8);
  ContentEncoder<float> enc(cfg);
  Rng rng(3);
  enc.init(rng);
  auto xa = random_image<float>({1, 3, 64, 64}, rng);
  auto xb = random_image<float>({1, 3, 64, 64}, rng);
  Tensor<float> ca = enc.forward(xa).value();
  Tensor<float> cb = enc.forward(xb).value();
  CHECK(ca.shape() == cb.shape());
  auto mean_of = [](const Tensor<float>& t) {
    double acc = 0;
    for (int64_t i = 0; i < t.numel(); ++i) acc += t[i];
    return acc / static_cast<double>(t.numel());
  };
  // The relu'd residual branches shift the code mean to roughly +2 at init
  // (two non-negative additions per block); both domains must land on the
  // same scale.
  double ma = mean_of(ca), mb = mean_of(cb);
  CHECK(std::isfinite(ma));
  CHECK(std::isfinite(mb));
  CHECK(std::abs(ma) < 4.0);
  CHECK(std::abs(mb) < 4.0);
  CHECK(std::abs(ma - mb) < 0.5 * std::max(std::abs(ma), std::abs(mb)) + 0.1);
}

TEST_CASE("style encoder emits 8-vectors") {
  NetworkConfig cfg;  // 256x256 defaults
  StyleEncoder<float> enc(cfg);
  Rng rng(4);
  enc.init(rng);
  auto x = random_image<float>({1, 3, 256, 256}, rng);
  CHECK(enc.forward(x, {0}).shape() == Shape{1, 8});
}

TEST_CASE("style encoder: batch broadcasting and label conditioning") {
  NetworkConfig cfg = toy_config(2, 64, 8);
  StyleEncoder<float> enc(cfg);
  Rng rng(5);
  enc.init(rng);
  auto batch = random_image<float>({4, 3, 64, 64}, rng);
  CHECK(enc.forward(batch, {0, 1, 0, 1}).shape() == Shape{4, 8});

  auto x = random_image<float>({1, 3, 64, 64}, rng);
  Tensor<float> s0 = enc.forward(x, {0}).value();
  Tensor<float> s1 = enc.forward(x, {1}).value();
  double gap = 0;
  for (int64_t i = 0; i < 8; ++i) gap += std::abs(s0[i] - s1[i]);
  CHECK(gap > 0);  // conditioning reaches the output at random init

  CHECK_THROWS_AS(enc.forward(x, {7}), Error);
}

TEST_CASE("generator shape contract, stochastic outputs, tanh bound") {
  NetworkConfig cfg;  // defaults, n=2
  Generator<float> gen(cfg);
  Rng rng(6);
  gen.init(rng);
  auto c = Var<float>::leaf(random_tensor<float>({1, 256, 64, 64}, rng), false);
  auto z1 = Var<float>::leaf(random_tensor<float>({1, 8}, rng), false);
  auto z2 = Var<float>::leaf(random_tensor<float>({1, 8}, rng), false);
  Var<float> out1 = gen.forward(c, z1, {1});
  CHECK(out1.shape() == Shape{1, 3, 256, 256});
  for (int64_t i = 0; i < out1.value().numel(); ++i) {
    CHECK(out1.value()[i] > -1.0f);
    CHECK(out1.value()[i] < 1.0f);
  }
  Var<float> out2 = gen.forward(c, z2, {1});
  double gap = 0;
  for (int64_t i = 0; i < out1.value().numel(); ++i)
    gap += std::abs(out1.value()[i] - out2.value()[i]);
  CHECK(gap / static_cast<double>(out1.value().numel()) > 0);
}

TEST_CASE("generator rejects a style code of the wrong length") {
  NetworkConfig cfg = toy_config(2, 32, 4);
  Generator<float> gen(cfg);
  Rng rng(7);
  gen.init(rng);
  auto c = Var<float>::leaf(random_tensor<float>({1, 16, 8, 8}, rng), false);
  auto bad = Var<float>::leaf(random_tensor<float>({1, 5}, rng), false);
  try {
    gen.forward(c, bad, {1});
    FAIL("expected dimension error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::dimension_mismatch);
  }
}

TEST_CASE("shape round trip: encode then generate restores the input size") {
  for (int64_t image : {64, 128, 256}) {
    NetworkConfig cfg = toy_config(2, image, 4);
    ContentEncoder<float> enc(cfg);
    StyleEncoder<float> senc(cfg);
    Generator<float> gen(cfg);
    Rng rng(8);
    enc.init(rng);
    senc.init(rng);
    gen.init(rng);
    auto x = random_image<float>({1, 3, image, image}, rng);
    Var<float> c = enc.forward(x);
    CHECK(c.shape() == Shape{1, 16, image / 4, image / 4});
    Var<float> s = senc.forward(x, {0});
    Var<float> y = gen.forward(c, s, {1});
    CHECK(y.shape() == x.shape());
  }
}

TEST_CASE("discriminator verdict shapes and projection decomposition") {
  NetworkConfig cfg;
  cfg.domain_count = 3;
  Discriminator<double> dis(cfg);
  Rng rng(9);
  dis.init(rng);
  auto x = random_image<double>({1, 3, 256, 256}, rng);
  DiscriminatorVerdict<double> v = dis.forward(x, {2});
  CHECK(v.dis.shape() == Shape{1});
  CHECK(v.cls.shape() == Shape{1, 3});
  CHECK(v.h.shape() == Shape{1, 512});

  // dis == embed(y) . h + d reassembled from the exposed pieces
  TrainingModeGuard guard(false);
  Var<double> e = dis.embed.forward({2});
  double recomposed = v.d.value()[0];
  for (int64_t i = 0; i < 512; ++i) recomposed += e.value()[i] * v.h.value()[i];
  CHECK(std::abs(recomposed - v.dis.value()[0]) < 1e-6);
}

TEST_CASE("discriminator with zero embedding reduces to the unconditional score") {
  NetworkConfig cfg = toy_config(3, 32, 4);
  Discriminator<float> dis(cfg);
  Rng rng(10);
  dis.init(rng);
  dis.embed.table.value().fill(0.0f);
  dis.embed.spectral = false;  // zero table would otherwise be rescaled
  auto x = random_image<float>({2, 3, 32, 32}, rng);
  DiscriminatorVerdict<float> v = dis.forward(x, {0, 2});
  for (int64_t b = 0; b < 2; ++b)
    CHECK(v.dis.value()[b] == doctest::Approx(v.d.value()[b]).epsilon(1e-6));
}

TEST_CASE("discriminator validates input and labels") {
  NetworkConfig cfg = toy_config(2, 32, 4);
  Discriminator<float> dis(cfg);
  Rng rng(11);
  dis.init(rng);
  auto bad = random_image<float>({1, 3, 30, 30}, rng);
  CHECK_THROWS_AS(dis.forward(bad, {0}), Error);
  auto x = random_image<float>({1, 3, 32, 32}, rng);
  try {
    dis.forward(x, {5});
    FAIL("expected invalid-label error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::invalid_label);
  }
}

TEST_CASE("parameter count: encoder plus generator lands on the reference scale") {
  NetworkConfig cfg;  // image 256, base 64, style 8
  cfg.domain_count = 2;
  SologanModel<float> model(cfg);
  ParamBag<float> ge = model.ge_params();
  int64_t count = count_parameters(ge);
  MESSAGE("E+G parameter count: ", count);
  CHECK(count >= static_cast<int64_t>(13.99e6 * 0.9));
  CHECK(count <= static_cast<int64_t>(13.99e6 * 1.1));
}

TEST_CASE("parameter count: additivity and empty bag") {
  NetworkConfig cfg = toy_config(2, 64, 8);
  SologanModel<float> model(cfg);
  ParamBag<float> ec, es, gen, all;
  model.content_encoder.collect("content_encoder", ec);
  model.style_encoder.collect("style_encoder", es);
  model.generator.collect("generator", gen);
  ParamBag<float> ge = model.ge_params();
  CHECK(count_parameters(ec) + count_parameters(es) + count_parameters(gen) ==
        count_parameters(ge));
  ParamBag<float> empty;
  CHECK(count_parameters(empty) == 0);
}

TEST_CASE("parameter count of E+G is independent of image size") {
  NetworkConfig small = toy_config(2, 64, 8);
  NetworkConfig large = toy_config(2, 256, 8);
  SologanModel<float> a(small), b(large);
  ParamBag<float> pa = a.ge_params(), pb = b.ge_params();
  CHECK(count_parameters(pa) == count_parameters(pb));
}

namespace {

// Applies the domain relabeling y -> perm[y] to every label-conditioned
// parameter: one-hot columns of the CBIN bias maps, embedding rows, and the
// classifier head channels, together with their spectral buffers.
void permute_cbin(Cbin<double>& cbin, const std::vector<int64_t>& perm) {
  int64_t n = static_cast<int64_t>(perm.size());
  Tensor<double>& w = cbin.bias_map.weight.value();
  int64_t rows = w.dim(0), cols = w.dim(1);
  Tensor<double> neww = w;
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < n; ++j) neww[r * cols + perm[j]] = w[r * cols + j];
  w = neww;
  Tensor<double>& v = cbin.bias_map.sn.v;
  Tensor<double> newv = v;
  for (int64_t j = 0; j < n; ++j) newv[perm[j]] = v[j];
  v = newv;
}

void permute_rows(Tensor<double>& t, const std::vector<int64_t>& perm) {
  int64_t cols = t.numel() / t.dim(0);
  Tensor<double> fresh = t;
  for (int64_t r = 0; r < t.dim(0); ++r)
    std::copy_n(t.data() + r * cols, cols, fresh.data() + perm[r] * cols);
  t = fresh;
}

void permute_vec(Tensor<double>& t, const std::vector<int64_t>& perm) {
  Tensor<double> fresh = t;
  for (int64_t i = 0; i < t.numel(); ++i) fresh[perm[i]] = t[i];
  t = fresh;
}

}  // namespace

TEST_CASE("domain relabeling equivariance") {
  const std::vector<int64_t> perm = {2, 0, 1};  // y -> perm[y]
  NetworkConfig cfg = toy_config(3, 32, 4);
  SologanModel<double> model(cfg);
  model.init(77);

  Rng rng(12);
  auto x = random_image<double>({1, 3, 32, 32}, rng);
  auto z = Var<double>::leaf(random_tensor<double>({1, 8}, rng), false);
  TrainingModeGuard guard(false);

  Tensor<double> s_before = model.style_encoder.forward(x, {1}).value();
  Tensor<double> c_before = model.content_encoder.forward(x).value();
  Tensor<double> g_before =
      model.generator.forward(Var<double>::leaf(c_before, false), z, {2}).value();
  DiscriminatorVerdict<double> v_before = model.discriminator.forward(x, {1});
  Tensor<double> dis_before = v_before.dis.value();
  Tensor<double> cls_before = v_before.cls.value();

  // relabel
  permute_cbin(model.style_encoder.cd1.norm1, perm);
  permute_cbin(model.style_encoder.cd1.norm2, perm);
  permute_cbin(model.style_encoder.cd2.norm1, perm);
  permute_cbin(model.style_encoder.cd2.norm2, perm);
  permute_cbin(model.style_encoder.cd3.norm1, perm);
  permute_cbin(model.style_encoder.cd3.norm2, perm);
  permute_cbin(model.style_encoder.tail_norm, perm);
  permute_cbin(model.generator.stem_norm, perm);
  for (auto& blk : model.generator.blocks) {
    permute_cbin(blk.norm1, perm);
    permute_cbin(blk.norm2, perm);
  }
  permute_cbin(model.generator.post_norm, perm);
  permute_cbin(model.generator.up1_norm, perm);
  permute_cbin(model.generator.up2_norm, perm);
  permute_rows(model.discriminator.embed.table.value(), perm);
  permute_vec(model.discriminator.embed.sn.u, perm);
  permute_rows(model.discriminator.cls_conv2.weight.value(), perm);
  permute_vec(model.discriminator.cls_conv2.bias.value(), perm);
  permute_vec(model.discriminator.cls_conv2.sn.u, perm);
  bump_param_generation();

  Tensor<double> s_after = model.style_encoder.forward(x, {perm[1]}).value();
  for (int64_t i = 0; i < 8; ++i)
    CHECK(s_after[i] == doctest::Approx(s_before[i]).epsilon(1e-10));

  Tensor<double> g_after =
      model.generator.forward(Var<double>::leaf(c_before, false), z, {perm[2]}).value();
  for (int64_t i = 0; i < g_after.numel(); ++i)
    CHECK(g_after[i] == doctest::Approx(g_before[i]).epsilon(1e-10));

  DiscriminatorVerdict<double> v_after = model.discriminator.forward(x, {perm[1]});
  CHECK(v_after.dis.value()[0] == doctest::Approx(dis_before[0]).epsilon(1e-10));
  for (int64_t j = 0; j < 3; ++j)
    CHECK(v_after.cls.value()[perm[j]] == doctest::Approx(cls_before[j]).epsilon(1e-10));
}

TEST_CASE("gradients reach every trainable parameter") {
  NetworkConfig cfg = toy_config(2, 32, 4);
  SologanModel<float> model(cfg);
  model.init(55);
  Rng rng(13);
  TrainingModeGuard guard(true);

  auto x = random_image<float>({2, 3, 32, 32}, rng);
  std::vector<int64_t> labels = {0, 1};
  std::vector<int64_t> targets = {1, 0};
  Var<float> c = model.content_encoder.forward(x);
  Var<float> s = model.style_encoder.forward(x, labels);
  Var<float> x_hat = model.generator.forward(c, s, targets);
  DiscriminatorVerdict<float> v = model.discriminator.forward(x_hat, targets);
  Var<float> loss = add(add(sum_all(v.dis), sum_all(v.cls)), sum_all(x_hat));
  loss.backward();

  ParamBag<float> bag;
  model.collect(bag);
  for (auto& [name, var] : bag.params) {
    INFO("parameter: ", name);
    CHECK(!var.grad().empty());
  }
}
