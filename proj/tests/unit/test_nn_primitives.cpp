#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>

#include "nn/layers.hpp"
#include "test_util.hpp"

using namespace sologan;
using namespace sologan::test;

namespace {

// Dense SVD oracle for the spectral tests.
double top_singular_value(const Tensor<double>& w) {
  int64_t rows = w.dim(0);
  int64_t cols = w.numel() / rows;
  Eigen::MatrixXd m(rows, cols);
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) m(i, j) = w[i * cols + j];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

template <typename T>
void zero_params(ParamBag<T>& bag) {
  for (auto& [name, var] : bag.params) const_cast<Var<T>&>(var).value().fill(T(0));
}

}  // namespace

TEST_CASE("one_hot encodes labels") {
  Tensor<double> v = one_hot<double>(2, 3);
  CHECK(v.shape() == Shape{3});
  CHECK(v[0] == 0);
  CHECK(v[1] == 0);
  CHECK(v[2] == 1);

  Tensor<double> single = one_hot<double>(0, 1);
  CHECK(single.shape() == Shape{1});
  CHECK(single[0] == 1);

  Tensor<double> four = one_hot<double>(1, 4);
  CHECK(four[0] == 0);
  CHECK(four[1] == 1);
  CHECK(four[2] == 0);
  CHECK(four[3] == 0);
}

TEST_CASE("one_hot rejects out-of-range labels naming y and n") {
  try {
    one_hot<float>(5, 3);
    FAIL("expected invalid-label error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::invalid_label);
    CHECK(std::string(e.what()).find("5") != std::string::npos);
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
  CHECK_THROWS_AS(one_hot<float>(-1, 3), Error);
}

TEST_CASE("one_hot bijection: argmax inverts encoding") {
  for (int64_t n = 1; n <= 8; ++n) {
    for (int64_t y = 0; y < n; ++y) {
      Tensor<double> v = one_hot<double>(y, n);
      int64_t argmax = 0;
      double total = 0;
      for (int64_t i = 0; i < n; ++i) {
        total += v[i];
        if (v[i] > v[argmax]) argmax = i;
      }
      CHECK(argmax == y);
      CHECK(total == 1.0);
    }
  }
}

TEST_CASE("cbin with zero bias map and identity affine equals instance norm") {
  Rng rng(21);
  Cbin<double> cbin(4, 3, /*spectral=*/false);
  cbin.init(rng);
  ParamBag<double> bag;
  cbin.bias_map.collect("bm", bag);
  zero_params(bag);

  auto x = Var<double>::leaf(random_tensor<double>({2, 4, 5, 5}, rng), false);
  auto cond = Var<double>::leaf(random_tensor<double>({2, 3}, rng), false);
  Tensor<double> got = cbin.forward(x, cond).value();
  Tensor<double> want = instance_normalize(x).value();
  for (int64_t i = 0; i < got.numel(); ++i)
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("cbin zero-variance channel collapses to shift plus condition bias") {
  Rng rng(22);
  Cbin<double> cbin(2, 2, false);
  cbin.init(rng);
  cbin.beta.value()[0] = 0.7;
  cbin.beta.value()[1] = -0.2;

  Tensor<double> xv({1, 2, 4, 4});
  for (int64_t i = 0; i < 16; ++i) xv[i] = 3.25;   // constant channel 0
  for (int64_t i = 16; i < 32; ++i) xv[i] = -1.5;  // constant channel 1
  auto x = Var<double>::leaf(xv, false);
  auto cond = Var<double>::leaf(random_tensor<double>({1, 2}, rng), false);

  // condition bias oracle: tanh(W cond + b)
  Tensor<double> expected_bias({2});
  for (int64_t c = 0; c < 2; ++c) {
    double acc = cbin.bias_map.bias.value()[c];
    for (int64_t j = 0; j < 2; ++j)
      acc += cbin.bias_map.weight.value()[c * 2 + j] * cond.value()[j];
    expected_bias[c] = std::tanh(acc);
  }
  Tensor<double> out = cbin.forward(x, cond).value();
  for (int64_t c = 0; c < 2; ++c)
    for (int64_t i = 0; i < 16; ++i)
      CHECK(out[c * 16 + i] ==
            doctest::Approx(cbin.beta.value()[c] + expected_bias[c]).epsilon(1e-9));
}

TEST_CASE("cbin per-channel spatial mean equals shift plus condition bias") {
  Rng rng(23);
  Cbin<double> cbin(4, 3, false);
  cbin.init(rng);
  for (int64_t c = 0; c < 4; ++c) cbin.beta.value()[c] = rng.uniform(-0.5, 0.5);

  auto x = Var<double>::leaf(random_tensor<double>({1, 4, 5, 5}, rng), false);
  auto cond = Var<double>::leaf(random_tensor<double>({1, 3}, rng), false);
  Tensor<double> out = cbin.forward(x, cond).value();

  // reference loop oracle
  for (int64_t c = 0; c < 4; ++c) {
    double bias = cbin.bias_map.bias.value()[c];
    for (int64_t j = 0; j < 3; ++j)
      bias += cbin.bias_map.weight.value()[c * 3 + j] * cond.value()[j];
    bias = std::tanh(bias);
    double mean = 0;
    for (int64_t i = 0; i < 25; ++i) mean += out[c * 25 + i];
    mean /= 25.0;
    CHECK(mean == doctest::Approx(cbin.beta.value()[c] + bias).epsilon(1e-5));
  }
}

TEST_CASE("cbin differing conditions differ by a spatially uniform constant") {
  Rng rng(24);
  Cbin<double> cbin(3, 5, false);
  cbin.init(rng);
  auto x = Var<double>::leaf(random_tensor<double>({2, 3, 6, 6}, rng), false);
  auto ca = Var<double>::leaf(random_tensor<double>({2, 5}, rng), false);
  auto cb = Var<double>::leaf(random_tensor<double>({2, 5}, rng), false);
  Tensor<double> ya = cbin.forward(x, ca).value();
  Tensor<double> yb = cbin.forward(x, cb).value();
  for (int64_t bc = 0; bc < 6; ++bc) {
    double delta = ya[bc * 36] - yb[bc * 36];
    for (int64_t i = 1; i < 36; ++i)
      CHECK(ya[bc * 36 + i] - yb[bc * 36 + i] == doctest::Approx(delta).epsilon(1e-10));
  }
}

TEST_CASE("cbin errors: condition length mismatch and degenerate spatial extent") {
  Rng rng(25);
  Cbin<float> cbin(4, 3, false);
  cbin.init(rng);
  auto x = Var<float>::leaf(random_tensor<float>({1, 4, 4, 4}, rng), false);
  auto bad_cond = Var<float>::leaf(random_tensor<float>({1, 5}, rng), false);
  try {
    cbin.forward(x, bad_cond);
    FAIL("expected dimension error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::dimension_mismatch);
  }
  auto tiny = Var<float>::leaf(random_tensor<float>({1, 4, 1, 1}, rng), false);
  auto cond = Var<float>::leaf(random_tensor<float>({1, 3}, rng), false);
  try {
    cbin.forward(tiny, cond);
    FAIL("expected degenerate-variance error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::degenerate_input);
  }
}

TEST_CASE("cbin gradient check against central finite differences") {
  Rng rng(26);
  Cbin<double> cbin(3, 4, false);
  cbin.init(rng);
  auto x = Var<double>::leaf(random_tensor<double>({2, 3, 4, 4}, rng), true);
  auto cond = Var<double>::leaf(random_tensor<double>({2, 4}, rng), false);

  auto fn = [&]() { return mean_all(square(cbin.forward(x, cond))).value().item(); };
  x.zero_grad();
  cbin.gamma.zero_grad();
  cbin.beta.zero_grad();
  cbin.bias_map.weight.zero_grad();
  cbin.bias_map.bias.zero_grad();
  mean_all(square(cbin.forward(x, cond))).backward();
  CHECK(max_grad_rel_err<double>(fn, x, 24, 1e-6) < 1e-4);
  CHECK(max_grad_rel_err<double>(fn, cbin.gamma, 3, 1e-6) < 1e-4);
  CHECK(max_grad_rel_err<double>(fn, cbin.beta, 3, 1e-6) < 1e-4);
  CHECK(max_grad_rel_err<double>(fn, cbin.bias_map.weight, 12, 1e-6) < 1e-4);
  CHECK(max_grad_rel_err<double>(fn, cbin.bias_map.bias, 3, 1e-6) < 1e-4);
}

TEST_CASE("spectral_normalize: diagonal oracle") {
  SpectralState<double> state;
  state.weight = Tensor<double>::from_data({2, 2}, {3, 0, 0, 1});
  state.u = Tensor<double>::from_data({2}, {0.8, 0.6});
  state.power_iterations = 5;
  Tensor<double> wbar = spectral_normalize(state);
  CHECK(wbar[0] == doctest::Approx(1.0).epsilon(1e-2));
  CHECK(wbar[3] == doctest::Approx(1.0 / 3.0).epsilon(1e-2));
  CHECK(std::abs(top_singular_value(wbar) - 1.0) < 1e-2);
}

TEST_CASE("spectral_normalize: identity stays identity") {
  SpectralState<double> state;
  state.weight = Tensor<double>::from_data({2, 2}, {1, 0, 0, 1});
  state.u = Tensor<double>::from_data({2}, {1.0, 0.0});
  state.power_iterations = 5;
  Tensor<double> wbar = spectral_normalize(state);
  for (int64_t i = 0; i < 4; ++i)
    CHECK(wbar[i] == doctest::Approx(state.weight[i]).epsilon(1e-9));
}

TEST_CASE("spectral_normalize: random matrix against dense SVD oracle") {
  Rng rng(27);
  SpectralState<double> state;
  state.weight = random_tensor<double>({8, 8}, rng);
  state.u = Tensor<double>({8});
  for (int64_t i = 0; i < 8; ++i) state.u[i] = rng.normal();
  double nrm = 0;
  for (int64_t i = 0; i < 8; ++i) nrm += state.u[i] * state.u[i];
  for (int64_t i = 0; i < 8; ++i) state.u[i] /= std::sqrt(nrm);
  state.power_iterations = 20;
  Tensor<double> wbar = spectral_normalize(state);
  CHECK(std::abs(top_singular_value(wbar) - 1.0) < 1e-3);
}

TEST_CASE("spectral_normalize: all-zero weight is returned unchanged") {
  SpectralState<float> state;
  state.weight = Tensor<float>({3, 3});
  state.u = Tensor<float>::from_data({3}, {1.f, 0.f, 0.f});
  state.power_iterations = 5;
  Tensor<float> wbar = spectral_normalize(state);
  for (int64_t i = 0; i < 9; ++i) CHECK(wbar[i] == 0.f);
}

TEST_CASE("spectral_normalize: convergence band and monotone estimate") {
  Rng rng(28);
  SpectralState<double> state;
  state.weight = random_tensor<double>({6, 10}, rng);
  state.u = Tensor<double>({6});
  for (int64_t i = 0; i < 6; ++i) state.u[i] = rng.normal();
  double nrm = 0;
  for (int64_t i = 0; i < 6; ++i) nrm += state.u[i] * state.u[i];
  for (int64_t i = 0; i < 6; ++i) state.u[i] /= std::sqrt(nrm);
  state.power_iterations = 5;

  Tensor<double> wbar = spectral_normalize(state);
  double sigma = top_singular_value(wbar);
  CHECK(sigma >= 0.99);
  CHECK(sigma <= 1.01);

  // repeated calls on a frozen weight: the normalized top singular value
  // approaches 1 from above and never increases beyond tolerance
  state.power_iterations = 1;
  double prev = top_singular_value(spectral_normalize(state));
  for (int i = 0; i < 10; ++i) {
    double cur = top_singular_value(spectral_normalize(state));
    CHECK(cur <= prev + 1e-4);
    prev = cur;
  }
  CHECK(prev == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("spectral_normalize input validation") {
  SpectralState<float> state;
  state.weight = Tensor<float>({4, 4}, 0.5f);
  state.u = Tensor<float>({3});  // wrong length
  state.power_iterations = 1;
  CHECK_THROWS_AS(spectral_normalize(state), Error);
  state.u = Tensor<float>({4}, 0.5f);
  state.power_iterations = 0;
  CHECK_THROWS_AS(spectral_normalize(state), Error);
}

TEST_CASE("R-ResBlock with zero conv weights is the identity") {
  Rng rng(29);
  RResBlock<float> block(8, /*spectral=*/false);
  block.init(rng);
  ParamBag<float> bag;
  block.conv1.collect("c1", bag);
  block.conv2.collect("c2", bag);
  zero_params(bag);
  auto x = Var<float>::leaf(random_tensor<float>({2, 8, 6, 6}, rng), false);
  Tensor<float> out = block.forward(x).value();
  for (int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == x.value()[i]);
}

TEST_CASE("CD-ResBlock halves spatial dims") {
  Rng rng(30);
  CdResBlock<float> block(64, 128, 3);
  block.init(rng);
  auto x = Var<float>::leaf(random_tensor<float>({1, 64, 32, 32}, rng), false);
  auto cond = Var<float>::leaf(one_hot_batch<float>({1}, 3), false);
  Var<float> out = block.forward(x, cond);
  CHECK(out.shape() == Shape{1, 128, 16, 16});
}

TEST_CASE("C-ResBlock preserves shape at generator scale") {
  Rng rng(31);
  CResBlock<float> block(256, 2 + 8);
  block.init(rng);
  auto x = Var<float>::leaf(random_tensor<float>({1, 256, 64, 64}, rng), false);
  auto cond = Var<float>::leaf(random_tensor<float>({1, 10}, rng), false);
  Var<float> out = block.forward(x, cond);
  CHECK(out.shape() == Shape{1, 256, 64, 64});
}

TEST_CASE("conditional blocks reject a missing condition") {
  Rng rng(32);
  CdResBlock<float> cd(4, 8, 2);
  cd.init(rng);
  CResBlock<float> c(4, 2);
  c.init(rng);
  auto x = Var<float>::leaf(random_tensor<float>({1, 4, 8, 8}, rng), false);
  Var<float> missing;
  try {
    cd.forward(x, missing);
    FAIL("expected configuration error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::config);
  }
  try {
    c.forward(x, missing);
    FAIL("expected configuration error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::config);
  }
}

TEST_CASE("spectral layer keeps normalized weight near unit norm during training") {
  Rng rng(33);
  Conv2d<double> conv(4, 6, 3, 1, 1, false, /*spectral=*/true);
  conv.init(rng);
  TrainingModeGuard guard(true);
  auto x = Var<double>::leaf(random_tensor<double>({1, 4, 5, 5}, rng), false);
  for (int i = 0; i < 30; ++i) {
    conv.forward(x);
    bump_param_generation();  // forces a fresh power iteration per pass
  }
  TrainingModeGuard eval(false);
  bump_param_generation();
  Var<double> wbar = conv.sn.normalized(conv.weight);
  CHECK(top_singular_value(wbar.value()) == doctest::Approx(1.0).epsilon(1e-3));
}
