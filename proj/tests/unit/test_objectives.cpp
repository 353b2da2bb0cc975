#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "model/losses.hpp"
#include "test_util.hpp"

using namespace sologan;
using namespace sologan::test;

namespace {

template <typename T>
Var<T> scalar_batch(std::vector<T> vals) {
  int64_t n = static_cast<int64_t>(vals.size());
  return Var<T>::leaf(Tensor<T>::from_data({n}, std::move(vals)), false);
}

}  // namespace

TEST_CASE("adversarial discriminator loss values") {
  CHECK(adv_loss_d(scalar_batch<double>({0}), scalar_batch<double>({1})).value().item() ==
        doctest::Approx(0.0));
  CHECK(adv_loss_d(scalar_batch<double>({0.5}), scalar_batch<double>({0.5})).value().item() ==
        doctest::Approx(0.5));
  CHECK(adv_loss_d(scalar_batch<double>({1}), scalar_batch<double>({0})).value().item() ==
        doctest::Approx(2.0));
}

TEST_CASE("adversarial generator loss values") {
  CHECK(adv_loss_g(scalar_batch<double>({1})).value().item() == doctest::Approx(0.0));
  CHECK(adv_loss_g(scalar_batch<double>({0})).value().item() == doctest::Approx(1.0));
  CHECK(adv_loss_g(scalar_batch<double>({0.5})).value().item() == doctest::Approx(0.25));
}

TEST_CASE("classification loss values") {
  auto saturated = Var<double>::leaf(Tensor<double>::from_data({1, 2}, {100, 0}), false);
  CHECK(cls_loss(saturated, {0}).value().item() == doctest::Approx(0.0).epsilon(1e-12));

  auto uniform = Var<double>::leaf(Tensor<double>({1, 3}), false);
  CHECK(cls_loss(uniform, {1}).value().item() == doctest::Approx(std::log(3.0)));

  auto two = Var<double>::leaf(Tensor<double>::from_data({1, 2}, {0, 1}), false);
  CHECK(cls_loss(two, {0}).value().item() == doctest::Approx(std::log(1.0 + std::exp(1.0))));

  try {
    cls_loss(uniform, {3});
    FAIL("expected invalid-label error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::invalid_label);
  }
}

TEST_CASE("cycle and image reconstruction L1 values") {
  Rng rng(41);
  auto x = Var<double>::leaf(random_tensor<double>({1, 3, 4, 4}, rng), false);
  CHECK(cycle_loss(x, x).value().item() == doctest::Approx(0.0));

  auto lo = Var<double>::leaf(Tensor<double>({1, 3, 4, 4}, -1.0), false);
  auto hi = Var<double>::leaf(Tensor<double>({1, 3, 4, 4}, 1.0), false);
  CHECK(cycle_loss(lo, hi).value().item() == doctest::Approx(2.0));
  CHECK(img_rec_loss(lo, hi).value().item() == doctest::Approx(2.0));

  // direct loop oracle on a random pair
  auto a = Var<double>::leaf(random_tensor<double>({2, 3, 5, 5}, rng), false);
  auto b = Var<double>::leaf(random_tensor<double>({2, 3, 5, 5}, rng), false);
  double oracle = 0;
  for (int64_t i = 0; i < a.value().numel(); ++i)
    oracle += std::abs(a.value()[i] - b.value()[i]);
  oracle /= static_cast<double>(a.value().numel());
  CHECK(cycle_loss(a, b).value().item() == doctest::Approx(oracle).epsilon(1e-7));
  CHECK(img_rec_loss(a, b).value().item() == doctest::Approx(oracle).epsilon(1e-7));

  auto wrong = Var<double>::leaf(Tensor<double>({1, 3, 2, 2}), false);
  CHECK_THROWS_AS(cycle_loss(x, wrong), Error);
}

TEST_CASE("latent reconstruction terms") {
  Rng rng(42);
  auto z = Var<double>::leaf(random_tensor<double>({1, 8}, rng), false);
  auto c = Var<double>::leaf(random_tensor<double>({1, 16, 4, 4}, rng), false);
  auto [ls0, lc0] = latent_rec_loss(z, z, c, c);
  CHECK(ls0.value().item() == doctest::Approx(0.0));
  CHECK(lc0.value().item() == doctest::Approx(0.0));

  auto zeros = Var<double>::leaf(Tensor<double>({1, 8}), false);
  auto ones = Var<double>::leaf(Tensor<double>({1, 8}, 1.0), false);
  auto [ls1, lc1] = latent_rec_loss(zeros, ones, c, c);
  CHECK(ls1.value().item() == doctest::Approx(1.0));

  auto s_hat = Var<double>::leaf(random_tensor<double>({1, 8}, rng), false);
  auto c_hat = Var<double>::leaf(random_tensor<double>({1, 16, 4, 4}, rng), false);
  double so = 0, co = 0;
  for (int64_t i = 0; i < 8; ++i) so += std::abs(z.value()[i] - s_hat.value()[i]);
  so /= 8.0;
  for (int64_t i = 0; i < c.value().numel(); ++i) co += std::abs(c.value()[i] - c_hat.value()[i]);
  co /= static_cast<double>(c.value().numel());
  auto [ls, lc] = latent_rec_loss(z, s_hat, c, c_hat);
  CHECK(ls.value().item() == doctest::Approx(so).epsilon(1e-7));
  CHECK(lc.value().item() == doctest::Approx(co).epsilon(1e-7));

  auto bad = Var<double>::leaf(Tensor<double>({1, 5}), false);
  CHECK_THROWS_AS(latent_rec_loss(z, bad, c, c_hat), Error);
}

TEST_CASE("full objectives combine with the published weights") {
  auto part = [](double v) { return Var<double>::leaf(Tensor<double>::scalar(v), false); };
  GeLossParts<double> zero{part(0), part(0), part(0), part(0), part(0)};
  CHECK(total_ge_loss(zero).value().item() == doctest::Approx(0.0));

  GeLossParts<double> ones{part(1), part(1), part(1), part(1), part(1)};
  CHECK(total_ge_loss(ones).value().item() == doctest::Approx(23.0));

  DLossParts<double> d{part(0.5), part(std::log(3.0))};
  CHECK(total_d_loss(d).value().item() == doctest::Approx(0.5 + std::log(3.0)));
}

TEST_CASE("total_ge_loss is linear in each part with exact weights") {
  auto part = [](double v) { return Var<double>::leaf(Tensor<double>::scalar(v), false); };
  Rng rng(43);
  std::vector<double> vals = {rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform(),
                              rng.uniform()};
  auto build = [&](const std::vector<double>& v) {
    GeLossParts<double> p{part(v[0]), part(v[1]), part(v[2]), part(v[3]), part(v[4])};
    return total_ge_loss(p).value().item();
  };
  double t0 = build(vals);
  const double expected_weights[5] = {1.0, 1.0, 10.0, 10.0, 1.0};
  const double delta = 0.3125;  // exactly representable
  for (int i = 0; i < 5; ++i) {
    std::vector<double> bumped = vals;
    bumped[static_cast<size_t>(i)] += delta;
    CHECK(build(bumped) - t0 ==
          doctest::Approx(expected_weights[i] * delta).epsilon(1e-12));
  }
}

TEST_CASE("losses are non-negative on random inputs") {
  Rng rng(44);
  for (int trial = 0; trial < 20; ++trial) {
    auto df = scalar_batch<double>({rng.uniform(-3, 3), rng.uniform(-3, 3)});
    auto dr = scalar_batch<double>({rng.uniform(-3, 3), rng.uniform(-3, 3)});
    CHECK(adv_loss_d(df, dr).value().item() >= 0.0);
    CHECK(adv_loss_g(df).value().item() >= 0.0);
    auto a = Var<double>::leaf(random_tensor<double>({1, 3, 4, 4}, rng), false);
    auto b = Var<double>::leaf(random_tensor<double>({1, 3, 4, 4}, rng), false);
    CHECK(cycle_loss(a, b).value().item() >= 0.0);
    auto logits = Var<double>::leaf(random_tensor<double>({2, 4}, rng, -5, 5), false);
    CHECK(cls_loss(logits, {1, 3}).value().item() >= 0.0);
  }
}

TEST_CASE("L1 loss is symmetric and satisfies the triangle inequality") {
  Rng rng(45);
  for (int trial = 0; trial < 10; ++trial) {
    auto a = Var<double>::leaf(random_tensor<double>({1, 3, 6, 6}, rng), false);
    auto b = Var<double>::leaf(random_tensor<double>({1, 3, 6, 6}, rng), false);
    auto c = Var<double>::leaf(random_tensor<double>({1, 3, 6, 6}, rng), false);
    double ab = l1_loss(a, b).value().item();
    double ba = l1_loss(b, a).value().item();
    double ac = l1_loss(a, c).value().item();
    double cb = l1_loss(c, b).value().item();
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    CHECK(ab <= ac + cb + 1e-6);
  }
}

TEST_CASE("discriminator adversarial loss is stationary at dis_real = 1") {
  // finite-difference sign change of d L_adv^D / d dis_real around 1
  auto at = [](double dr) {
    return adv_loss_d(scalar_batch<double>({0.3}), scalar_batch<double>({dr})).value().item();
  };
  double h = 1e-4;
  double left_slope = (at(1.0) - at(1.0 - h)) / h;
  double right_slope = (at(1.0 + h) - at(1.0)) / h;
  CHECK(left_slope < 0.0);
  CHECK(right_slope > 0.0);
}

TEST_CASE("gradient of the total objective w.r.t. a 4x4 generator output") {
  // x_hat enters every L_GE term through simple real-op heads; central
  // finite differences must match the analytic gradient at 64-bit.
  Rng rng(46);
  auto x_hat = Var<double>::leaf(random_tensor<double>({1, 3, 4, 4}, rng, -0.5, 0.5), true);
  auto x_ref = Var<double>::leaf(random_tensor<double>({1, 3, 4, 4}, rng), false);
  auto x_ref2 = Var<double>::leaf(random_tensor<double>({1, 3, 4, 4}, rng), false);
  auto w_cls = Var<double>::leaf(random_tensor<double>({3, 48}, rng), false);
  auto w_sty = Var<double>::leaf(random_tensor<double>({8, 48}, rng), false);
  auto z_ref = Var<double>::leaf(random_tensor<double>({1, 8}, rng), false);
  Var<double> none;

  auto build = [&]() {
    Var<double> flat = reshape(x_hat, {1, 48});
    GeLossParts<double> p;
    p.adv_g = adv_loss_g(reduce_mean(flat, {1}, false));          // toy realness head
    p.cls_t = cls_loss(linear(flat, w_cls, none), {1});           // toy classifier head
    p.cyc = cycle_loss(x_ref, x_hat);
    p.rec_img = img_rec_loss(x_ref2, x_hat);
    auto [ls, lc] = latent_rec_loss(z_ref, linear(flat, w_sty, none), x_ref, x_hat);
    p.rec_latent = add(ls, lc);
    return total_ge_loss(p);
  };
  auto fn = [&]() { return build().value().item(); };
  x_hat.zero_grad();
  build().backward();
  CHECK(max_grad_rel_err<double>(fn, x_hat, 48, 1e-6) < 1e-4);
}
