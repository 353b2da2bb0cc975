#pragma once

#include "core/ops_nn.hpp"

namespace sologan {

// Loss weights of the full objectives; adversarial weight is fixed at 1.
template <typename T>
struct LossWeights {
  T cls = T(1);
  T cyc = T(10);
  T rec_img = T(10);
  T rec_latent = T(1);
};

// Least-squares adversarial loss, discriminator side:
// mean(D(fake)^2) + mean((1 - D(real))^2).
template <typename T>
Var<T> adv_loss_d(const Var<T>& dis_fake, const Var<T>& dis_real) {
  return add(mean_all(square(dis_fake)), mean_all(square(add_scalar(neg(dis_real), T(1)))));
}

// Generator side: mean((1 - D(fake))^2).
template <typename T>
Var<T> adv_loss_g(const Var<T>& dis_fake) {
  return mean_all(square(add_scalar(neg(dis_fake), T(1))));
}

// Mean negative log-softmax of the target domain.
template <typename T>
Var<T> cls_loss(const Var<T>& logits, const std::vector<int64_t>& targets) {
  require(logits.shape().size() == 2 && logits.shape()[1] >= 2, ErrorCode::dimension_mismatch,
          "cls_loss expects [B,n] logits with n >= 2");
  return softmax_cross_entropy(logits, targets);
}

// Mean absolute difference over all elements; used for the cycle, image
// reconstruction, and latent reconstruction terms.
template <typename T>
Var<T> l1_loss(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), ErrorCode::shape_mismatch,
          "L1 loss shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  return mean_all(abs_val(sub(a, b)));
}

template <typename T>
Var<T> cycle_loss(const Var<T>& x, const Var<T>& x_cyc) {
  return l1_loss(x, x_cyc);
}

template <typename T>
Var<T> img_rec_loss(const Var<T>& x, const Var<T>& x_self) {
  return l1_loss(x, x_self);
}

// Style and content latent reconstruction terms, returned separately.
template <typename T>
std::pair<Var<T>, Var<T>> latent_rec_loss(const Var<T>& z, const Var<T>& s_hat, const Var<T>& c,
                                          const Var<T>& c_hat) {
  require(z.shape() == s_hat.shape(), ErrorCode::dimension_mismatch,
          "latent style term: " + shape_str(z.shape()) + " vs " + shape_str(s_hat.shape()));
  require(c.shape() == c_hat.shape(), ErrorCode::dimension_mismatch,
          "latent content term: " + shape_str(c.shape()) + " vs " + shape_str(c_hat.shape()));
  return {l1_loss(z, s_hat), l1_loss(c, c_hat)};
}

template <typename T>
struct GeLossParts {
  Var<T> adv_g, cls_t, cyc, rec_img, rec_latent;
};

template <typename T>
struct DLossParts {
  Var<T> adv_d, cls_r;
};

// L_GE = L_adv^G + w.cls * L_cls^t + w.cyc * L_cyc + w.rec_img * L_rec^img
//      + w.rec_latent * L_rec^latent
template <typename T>
Var<T> total_ge_loss(const GeLossParts<T>& p, const LossWeights<T>& w = {}) {
  Var<T> total = add(p.adv_g, mul_scalar(p.cls_t, w.cls));
  total = add(total, mul_scalar(p.cyc, w.cyc));
  total = add(total, mul_scalar(p.rec_img, w.rec_img));
  return add(total, mul_scalar(p.rec_latent, w.rec_latent));
}

// L_D = L_adv^D + w.cls * L_cls^r
template <typename T>
Var<T> total_d_loss(const DLossParts<T>& p, const LossWeights<T>& w = {}) {
  return add(p.adv_d, mul_scalar(p.cls_r, w.cls));
}

}  // namespace sologan
