#pragma once

#include <cmath>
#include <limits>

#include "deeplle/check.hpp"
#include "deeplle/tape.hpp"
#include "deeplle/tensor.hpp"

namespace deeplle::quality {

struct LossWeights {
  double lambda1 = 0.1;      // first-derivative term
  double lambda2 = 0.0001;   // ssim term
  double huber_delta = 0.01;
};

// 11x11 Gaussian, sigma 1.5, stabilizers for unit dynamic range.
struct SsimConfig {
  int64_t window = 11;
  double sigma = 1.5;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
};

template <typename T>
Tensor<T> gaussian_window(int64_t size, double sigma) {
  DLLE_CHECK(size >= 1 && sigma > 0, "gaussian_window: bad parameters");
  Tensor<double> w({1, 1, size, size});
  const double c = (size - 1) / 2.0;
  double total = 0;
  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x) {
      const double d2 = (y - c) * (y - c) + (x - c) * (x - c);
      const double v = std::exp(-d2 / (2 * sigma * sigma));
      w.at(y * size + x) = v;
      total += v;
    }
  for (int64_t i = 0; i < w.numel(); ++i) w.at(i) /= total;
  return w.template cast<T>();
}

template <typename T>
typename Tape<T>::Var huber_loss(Tape<T>& tape, typename Tape<T>::Var a,
                                 typename Tape<T>::Var b, T delta) {
  return tape.huber(a, b, delta);
}

// Mean L1 difference of forward-difference gradients over both axes, pooled
// over all valid positions. Degenerate extents contribute nothing.
template <typename T>
typename Tape<T>::Var gradient_loss(Tape<T>& tape, typename Tape<T>::Var a,
                                    typename Tape<T>::Var b) {
  using Var = typename Tape<T>::Var;
  const Tensor<T>& x = tape.value(a);
  const Tensor<T>& y = tape.value(b);
  DLLE_CHECK(x.same_shape(y), "gradient_loss: shape mismatch ", shape_str(x.shape()), " vs ",
             shape_str(y.shape()));
  DLLE_CHECK(x.rank() == 4, "gradient_loss expects NCHW, got ", shape_str(x.shape()));
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t cx = (W >= 2) ? B * C * H * (W - 1) : 0;
  const int64_t cy = (H >= 2) ? B * C * (H - 1) * W : 0;
  if (cx + cy == 0) return tape.constant(Tensor<T>::scalar(T(0)));
  Var acc;
  bool have = false;
  if (cx > 0) {
    acc = tape.sum(tape.abs_val(tape.sub(tape.diff_x(a), tape.diff_x(b))));
    have = true;
  }
  if (cy > 0) {
    Var ty = tape.sum(tape.abs_val(tape.sub(tape.diff_y(a), tape.diff_y(b))));
    acc = have ? tape.add(acc, ty) : ty;
  }
  return tape.affine(acc, T(1) / static_cast<T>(cx + cy), T(0));
}

// Mean local SSIM over valid window positions of two single-channel maps.
template <typename T>
typename Tape<T>::Var ssim(Tape<T>& tape, typename Tape<T>::Var ya, typename Tape<T>::Var yb,
                           const SsimConfig& cfg = {}) {
  const Tensor<T>& x = tape.value(ya);
  const Tensor<T>& y = tape.value(yb);
  DLLE_CHECK(x.same_shape(y), "ssim: shape mismatch ", shape_str(x.shape()), " vs ",
             shape_str(y.shape()));
  DLLE_CHECK(x.rank() == 4 && x.dim(1) == 1, "ssim expects Nx1xHxW luma, got ",
             shape_str(x.shape()));
  DLLE_CHECK(x.dim(2) >= cfg.window && x.dim(3) >= cfg.window,
             "ssim: image ", shape_str(x.shape()), " smaller than ", cfg.window, "x", cfg.window,
             " window");
  auto w = tape.constant(gaussian_window<T>(cfg.window, cfg.sigma));
  auto zero_bias = tape.constant(Tensor<T>({1}));
  auto conv = [&](typename Tape<T>::Var v) { return tape.conv2d(v, w, zero_bias, 1, 0); };

  auto mu_a = conv(ya);
  auto mu_b = conv(yb);
  auto var_a = tape.sub(conv(tape.mul(ya, ya)), tape.mul(mu_a, mu_a));
  auto var_b = tape.sub(conv(tape.mul(yb, yb)), tape.mul(mu_b, mu_b));
  auto cov = tape.sub(conv(tape.mul(ya, yb)), tape.mul(mu_a, mu_b));

  auto lum = tape.affine(tape.mul(mu_a, mu_b), T(2), static_cast<T>(cfg.c1));
  auto lum_den = tape.affine(tape.add(tape.mul(mu_a, mu_a), tape.mul(mu_b, mu_b)), T(1),
                             static_cast<T>(cfg.c1));
  auto str = tape.affine(cov, T(2), static_cast<T>(cfg.c2));
  auto str_den = tape.affine(tape.add(var_a, var_b), T(1), static_cast<T>(cfg.c2));
  auto ssim_map = tape.divide(tape.mul(lum, str), tape.mul(lum_den, str_den));
  return tape.mean(ssim_map);
}

// Y channel of BT.601 full-range YCbCr from a [0,1] RGB batch.
template <typename T>
typename Tape<T>::Var luma(Tape<T>& tape, typename Tape<T>::Var rgb) {
  return tape.select_channel(tape.rgb_to_ycbcr(rgb), 0);
}

template <typename T>
struct CompositeTerms {
  typename Tape<T>::Var total, huber, grad, ssim;
};

// huber + lambda1 * grad - lambda2 * ssim(luma, luma); inputs in [0,1].
template <typename T>
CompositeTerms<T> composite_loss_terms(Tape<T>& tape, typename Tape<T>::Var refs,
                                       typename Tape<T>::Var recon, const LossWeights& w,
                                       const SsimConfig& scfg = {}) {
  const Tensor<T>& r = tape.value(refs);
  DLLE_CHECK(r.rank() == 4 && r.dim(1) == 3, "composite_loss expects Nx3xHxW, got ",
             shape_str(r.shape()));
  CompositeTerms<T> out;
  out.huber = tape.huber(recon, refs, static_cast<T>(w.huber_delta));
  out.grad = gradient_loss(tape, recon, refs);
  out.ssim = ssim(tape, luma(tape, refs), luma(tape, recon), scfg);
  auto total = tape.add(out.huber, tape.affine(out.grad, static_cast<T>(w.lambda1), T(0)));
  out.total = tape.add(total, tape.affine(out.ssim, static_cast<T>(-w.lambda2), T(0)));
  return out;
}

template <typename T>
typename Tape<T>::Var composite_loss(Tape<T>& tape, typename Tape<T>::Var refs,
                                     typename Tape<T>::Var recon, const LossWeights& w,
                                     const SsimConfig& scfg = {}) {
  return composite_loss_terms(tape, refs, recon, w, scfg).total;
}

// ---- evaluation-side metrics (no gradients) ----

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0) {
  DLLE_CHECK(a.same_shape(b), "psnr: shape mismatch ", shape_str(a.shape()), " vs ",
             shape_str(b.shape()));
  double mse = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a.at(i)) - static_cast<double>(b.at(i));
    mse += d * d;
  }
  mse /= static_cast<double>(a.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

// SSIM of the luma channels of two [0,1] RGB frames, computed in double.
template <typename T>
double ssim_luma(const Tensor<T>& a_rgb, const Tensor<T>& b_rgb, const SsimConfig& cfg = {}) {
  Tape<double> tape;
  auto a = tape.constant(a_rgb.template cast<double>());
  auto b = tape.constant(b_rgb.template cast<double>());
  return tape.value(ssim(tape, luma(tape, a), luma(tape, b), cfg)).at(0);
}

// SSIM of two single-channel maps, computed in double.
template <typename T>
double ssim_value(const Tensor<T>& ya, const Tensor<T>& yb, const SsimConfig& cfg = {}) {
  Tape<double> tape;
  auto a = tape.constant(ya.template cast<double>());
  auto b = tape.constant(yb.template cast<double>());
  return tape.value(ssim(tape, a, b, cfg)).at(0);
}

}  // namespace deeplle::quality
