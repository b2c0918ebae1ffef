#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "deeplle/check.hpp"
#include "deeplle/rng.hpp"
#include "deeplle/tensor.hpp"
#include "deeplle/threading.hpp"

namespace deeplle {

enum class RunMode { kFit, kInference };

namespace detail {

template <typename T>
using EigenRowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// C = A(M,K) * B(K,N), row-major buffers. accumulate adds into C.
template <typename T>
void gemm(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
  Eigen::Map<const EigenRowMajor<T>> A(a, m, k);
  Eigen::Map<const EigenRowMajor<T>> B(b, k, n);
  Eigen::Map<EigenRowMajor<T>> C(c, m, n);
  if (accumulate)
    C.noalias() += A * B;
  else
    C.noalias() = A * B;
}

template <typename T>
void gemm_bt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
  // C(M,N) = A(M,K) * B(N,K)^T
  Eigen::Map<const EigenRowMajor<T>> A(a, m, k);
  Eigen::Map<const EigenRowMajor<T>> B(b, n, k);
  Eigen::Map<EigenRowMajor<T>> C(c, m, n);
  if (accumulate)
    C.noalias() += A * B.transpose();
  else
    C.noalias() = A * B.transpose();
}

template <typename T>
void gemm_at(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
  // C(M,N) = A(K,M)^T * B(K,N)
  Eigen::Map<const EigenRowMajor<T>> A(a, k, m);
  Eigen::Map<const EigenRowMajor<T>> B(b, k, n);
  Eigen::Map<EigenRowMajor<T>> C(c, m, n);
  if (accumulate)
    C.noalias() += A.transpose() * B;
  else
    C.noalias() = A.transpose() * B;
}

struct ConvDims {
  int64_t batch, cin, h, w;
  int64_t cout, kh, kw;
  int64_t stride, pad;
  int64_t oh, ow;
  int64_t patch() const { return cin * kh * kw; }
  int64_t opix() const { return oh * ow; }
};

template <typename T>
void im2col(const T* img, const ConvDims& d, T* col) {
  // col is (cin*kh*kw) x (oh*ow), row-major
  for (int64_t i = 0; i < d.cin; ++i) {
    const T* plane = img + i * d.h * d.w;
    for (int64_t ky = 0; ky < d.kh; ++ky) {
      for (int64_t kx = 0; kx < d.kw; ++kx) {
        T* row = col + ((i * d.kh + ky) * d.kw + kx) * d.opix();
        for (int64_t oy = 0; oy < d.oh; ++oy) {
          const int64_t iy = oy * d.stride - d.pad + ky;
          T* out = row + oy * d.ow;
          if (iy < 0 || iy >= d.h) {
            for (int64_t ox = 0; ox < d.ow; ++ox) out[ox] = T(0);
            continue;
          }
          const T* src = plane + iy * d.w;
          for (int64_t ox = 0; ox < d.ow; ++ox) {
            const int64_t ix = ox * d.stride - d.pad + kx;
            out[ox] = (ix >= 0 && ix < d.w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvDims& d, T* img) {
  for (int64_t i = 0; i < d.cin; ++i) {
    T* plane = img + i * d.h * d.w;
    for (int64_t ky = 0; ky < d.kh; ++ky) {
      for (int64_t kx = 0; kx < d.kw; ++kx) {
        const T* row = col + ((i * d.kh + ky) * d.kw + kx) * d.opix();
        for (int64_t oy = 0; oy < d.oh; ++oy) {
          const int64_t iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.h) continue;
          T* dst = plane + iy * d.w;
          const T* src = row + oy * d.ow;
          for (int64_t ox = 0; ox < d.ow; ++ox) {
            const int64_t ix = ox * d.stride - d.pad + kx;
            if (ix >= 0 && ix < d.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// Catmull-Rom cubic, a = -0.5.
inline double cubic_weight(double t) {
  t = std::abs(t);
  if (t <= 1.0) return (1.5 * t - 2.5) * t * t + 1.0;
  if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
  return 0.0;
}

struct CubicTaps {
  std::vector<int64_t> idx;  // 4 per output position, edge-clamped
  std::vector<double> w;     // 4 per output position
};

inline CubicTaps cubic_taps(int64_t in_n, int64_t factor) {
  CubicTaps taps;
  const int64_t out_n = in_n * factor;
  taps.idx.resize(static_cast<size_t>(out_n) * 4);
  taps.w.resize(static_cast<size_t>(out_n) * 4);
  for (int64_t o = 0; o < out_n; ++o) {
    const double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    const int64_t base = static_cast<int64_t>(std::floor(src));
    const double frac = src - static_cast<double>(base);
    for (int64_t k = 0; k < 4; ++k) {
      int64_t i = base - 1 + k;
      if (i < 0) i = 0;
      if (i >= in_n) i = in_n - 1;
      taps.idx[o * 4 + k] = i;
      taps.w[o * 4 + k] = cubic_weight(frac - static_cast<double>(k - 1));
    }
  }
  return taps;
}

}  // namespace detail

// Reverse-mode differentiation tape. Nodes are appended in execution order,
// so insertion order is a topological order. One tape per logical thread.
template <typename T>
class Tape {
 public:
  struct Var {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- leaves ----

  Var constant(Tensor<T> value) { return push(std::move(value), false, {}, nullptr); }

  // Tracked leaf; gradients come back in registration order.
  Var parameter(Tensor<T> value) {
    Var v = push(std::move(value), true, {}, nullptr);
    params_.push_back(v.id);
    return v;
  }

  size_t num_params() const { return params_.size(); }
  size_t num_nodes() const { return nodes_.size(); }

  const Tensor<T>& value(Var v) const { return node(v).value; }
  const Shape& shape(Var v) const { return node(v).value.shape(); }

  // ---- elementwise arithmetic ----

  Var add(Var a, Var b) { return binary_ew(a, b, "add",
      [](T x, T y) { return x + y; },
      [](T, T, T g, T& ga, T& gb) { ga += g; gb += g; }); }

  Var sub(Var a, Var b) { return binary_ew(a, b, "sub",
      [](T x, T y) { return x - y; },
      [](T, T, T g, T& ga, T& gb) { ga += g; gb -= g; }); }

  Var mul(Var a, Var b) { return binary_ew(a, b, "mul",
      [](T x, T y) { return x * y; },
      [](T x, T y, T g, T& ga, T& gb) { ga += g * y; gb += g * x; }); }

  Var divide(Var a, Var b) { return binary_ew(a, b, "div",
      [](T x, T y) { return x / y; },
      [](T x, T y, T g, T& ga, T& gb) { ga += g / y; gb -= g * x / (y * y); }); }

  // scale * x + shift
  Var affine(Var a, T scale, T shift) {
    const Tensor<T>& x = value(a);
    Tensor<T> out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out.at(i) = scale * x.at(i) + shift;
    return push(std::move(out), node(a).needs_grad, {a.id},
                [aid = a.id, scale](Tape& t, int32_t self) {
                  t.accumulate_scaled(aid, t.nodes_[self].grad, scale);
                });
  }

  Var abs_val(Var a) { return unary_ew(a, "abs",
      [](T x) { return x < T(0) ? -x : x; },
      [](T x, T) { return x < T(0) ? T(-1) : (x > T(0) ? T(1) : T(0)); }); }

  // ---- activations ----

  // Subgradient at 0 takes the positive branch (derivative 1).
  Var leaky_relu(Var a, T slope) { return unary_ew(a, "leaky_relu",
      [slope](T x) { return x >= T(0) ? x : slope * x; },
      [slope](T x, T) { return x >= T(0) ? T(1) : slope; }); }

  Var relu(Var a) { return leaky_relu(a, T(0)); }

  Var tanh_act(Var a) { return unary_ew(a, "tanh",
      [](T x) { return std::tanh(x); },
      [](T, T y) { return T(1) - y * y; }); }

  Var elu(Var a, T alpha = T(1)) { return unary_ew(a, "elu",
      [alpha](T x) { return x >= T(0) ? x : alpha * (std::exp(x) - T(1)); },
      [alpha](T x, T y) { return x >= T(0) ? T(1) : y + alpha; }); }

  Var selu(Var a) {
    const T lam = T(1.0507009873554804934193349852946L);
    const T alpha = T(1.6732632423543772848170429916717L);
    return unary_ew(a, "selu",
        [lam, alpha](T x) { return x >= T(0) ? lam * x : lam * alpha * (std::exp(x) - T(1)); },
        [lam, alpha](T x, T y) { return x >= T(0) ? lam : y + lam * alpha; });
  }

  // ---- dropout ----

  // Inverted scaling: survivors scaled by 1/(1-p) at fit time, identity at
  // inference. Mask drawn from rng at node creation.
  Var dropout(Var a, double p, RunMode mode, Rng& rng) {
    DLLE_CHECK(p >= 0.0 && p < 1.0, "dropout: probability must be in [0,1), got ", p);
    if (mode == RunMode::kInference || p == 0.0) return a;
    const Tensor<T>& x = value(a);
    Tensor<T> mask(x.shape());
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    for (int64_t i = 0; i < mask.numel(); ++i)
      mask.at(i) = (rng.uniform01() >= p) ? keep_scale : T(0);
    Tensor<T> out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out.at(i) = x.at(i) * mask.at(i);
    return push(std::move(out), node(a).needs_grad, {a.id},
                [aid = a.id, m = std::move(mask)](Tape& t, int32_t self) {
                  if (!t.nodes_[aid].needs_grad) return;
                  Tensor<T>& ga = t.grad_buffer(aid);
                  const Tensor<T>& g = t.nodes_[self].grad;
                  for (int64_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i) * m.at(i);
                });
  }

  // ---- structure ----

  Var reshape(Var a, Shape new_shape) {
    Tensor<T> out = value(a).reshaped(std::move(new_shape));
    return push(std::move(out), node(a).needs_grad, {a.id},
                [aid = a.id](Tape& t, int32_t self) {
                  t.accumulate_scaled(aid, t.nodes_[self].grad, T(1));
                });
  }

  Var flatten_rows(Var a) {
    const Shape& s = shape(a);
    DLLE_CHECK(s.size() >= 2, "flatten_rows needs rank >= 2, got ", shape_str(s));
    int64_t rows = s[0];
    return reshape(a, {rows, value(a).numel() / rows});
  }

  Var select_channel(Var a, int64_t c) {
    const Tensor<T>& x = value(a);
    DLLE_CHECK(x.rank() == 4, "select_channel expects NCHW, got ", shape_str(x.shape()));
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    DLLE_CHECK(c >= 0 && c < C, "select_channel: channel ", c, " out of range [0,", C, ")");
    Tensor<T> out({B, 1, H, W});
    const int64_t hw = H * W;
    for (int64_t n = 0; n < B; ++n)
      std::copy_n(x.data() + (n * C + c) * hw, hw, out.data() + n * hw);
    return push(std::move(out), node(a).needs_grad, {a.id},
                [aid = a.id, c, C, hw](Tape& t, int32_t self) {
                  if (!t.nodes_[aid].needs_grad) return;
                  Tensor<T>& ga = t.grad_buffer(aid);
                  const Tensor<T>& g = t.nodes_[self].grad;
                  const int64_t B2 = g.dim(0);
                  for (int64_t n = 0; n < B2; ++n) {
                    const T* src = g.data() + n * hw;
                    T* dst = ga.data() + (n * C + c) * hw;
                    for (int64_t i = 0; i < hw; ++i) dst[i] += src[i];
                  }
                });
  }

  // BT.601 full-range, inputs in [0,1]. Linear map plus Cb/Cr offset 0.5.
  Var rgb_to_ycbcr(Var a) {
    const Tensor<T>& x = value(a);
    DLLE_CHECK(x.rank() == 4 && x.dim(1) == 3, "rgb_to_ycbcr expects Nx3xHxW, got ",
               shape_str(x.shape()));
    const int64_t B = x.dim(0), H = x.dim(2), W = x.dim(3), hw = H * W;
    Tensor<T> out(x.shape());
    for (int64_t n = 0; n < B; ++n) {
      const T* r = x.data() + (n * 3 + 0) * hw;
      const T* g = x.data() + (n * 3 + 1) * hw;
      const T* b = x.data() + (n * 3 + 2) * hw;
      T* y = out.data() + (n * 3 + 0) * hw;
      T* cb = out.data() + (n * 3 + 1) * hw;
      T* cr = out.data() + (n * 3 + 2) * hw;
      for (int64_t i = 0; i < hw; ++i) {
        y[i] = T(0.299) * r[i] + T(0.587) * g[i] + T(0.114) * b[i];
        cb[i] = T(0.5) - T(0.168736) * r[i] - T(0.331264) * g[i] + T(0.5) * b[i];
        cr[i] = T(0.5) + T(0.5) * r[i] - T(0.418688) * g[i] - T(0.081312) * b[i];
      }
    }
    return push(std::move(out), node(a).needs_grad, {a.id},
                [aid = a.id, B, hw](Tape& t, int32_t self) {
                  if (!t.nodes_[aid].needs_grad) return;
                  Tensor<T>& ga = t.grad_buffer(aid);
                  const Tensor<T>& go = t.nodes_[self].grad;
                  for (int64_t n = 0; n < B; ++n) {
                    const T* gy = go.data() + (n * 3 + 0) * hw;
                    const T* gcb = go.data() + (n * 3 + 1) * hw;
                    const T* gcr = go.data() + (n * 3 + 2) * hw;
                    T* gr = ga.data() + (n * 3 + 0) * hw;
                    T* gg = ga.data() + (n * 3 + 1) * hw;
                    T* gb = ga.data() + (n * 3 + 2) * hw;
                    for (int64_t i = 0; i < hw; ++i) {
                      gr[i] += T(0.299) * gy[i] - T(0.168736) * gcb[i] + T(0.5) * gcr[i];
                      gg[i] += T(0.587) * gy[i] - T(0.331264) * gcb[i] - T(0.418688) * gcr[i];
                      gb[i] += T(0.114) * gy[i] + T(0.5) * gcb[i] - T(0.081312) * gcr[i];
                    }
                  }
                });
  }

  // ---- linear algebra ----

  Var matmul(Var a, Var b) {
    const Tensor<T>& A = value(a);
    const Tensor<T>& B = value(b);
    DLLE_CHECK(A.rank() == 2 && B.rank() == 2, "matmul expects 2-d operands, got ",
               shape_str(A.shape()), " x ", shape_str(B.shape()));
    DLLE_CHECK(A.dim(1) == B.dim(0), "matmul inner extents differ: ", shape_str(A.shape()),
               " x ", shape_str(B.shape()));
    const int64_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor<T> out({m, n});
    detail::gemm(A.data(), B.data(), out.data(), m, k, n, false);
    bool ng = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(out), ng, {a.id, b.id},
                [aid = a.id, bid = b.id, m, k, n](Tape& t, int32_t self) {
                  const Tensor<T>& g = t.nodes_[self].grad;
                  if (t.nodes_[aid].needs_grad) {
                    Tensor<T>& ga = t.grad_buffer(aid);
                    detail::gemm_bt(g.data(), t.nodes_[bid].value.data(), ga.data(), m, n, k, true);
                  }
                  if (t.nodes_[bid].needs_grad) {
                    Tensor<T>& gb = t.grad_buffer(bid);
                    detail::gemm_at(t.nodes_[aid].value.data(), g.data(), gb.data(), k, m, n, true);
                  }
                });
  }

  // Cross-correlation, zero padding, floor output sizing. input NCHW,
  // kernels OIHW, bias O.
  Var conv2d(Var input, Var kernels, Var bias, int64_t stride, int64_t pad) {
    const Tensor<T>& x = value(input);
    const Tensor<T>& k = value(kernels);
    const Tensor<T>& b = value(bias);
    DLLE_CHECK(stride >= 1, "conv2d: stride must be positive, got ", stride);
    DLLE_CHECK(pad >= 0, "conv2d: padding must be nonnegative, got ", pad);
    DLLE_CHECK(x.rank() == 4, "conv2d input must be NCHW, got ", shape_str(x.shape()));
    DLLE_CHECK(k.rank() == 4, "conv2d kernels must be OIHW, got ", shape_str(k.shape()));
    DLLE_CHECK(x.dim(1) == k.dim(1), "conv2d: input channels ", x.dim(1),
               " != kernel input channels ", k.dim(1));
    DLLE_CHECK(b.rank() == 1 && b.dim(0) == k.dim(0), "conv2d: bias shape ",
               shape_str(b.shape()), " must be (", k.dim(0), ")");
    detail::ConvDims d;
    d.batch = x.dim(0); d.cin = x.dim(1); d.h = x.dim(2); d.w = x.dim(3);
    d.cout = k.dim(0); d.kh = k.dim(2); d.kw = k.dim(3);
    d.stride = stride; d.pad = pad;
    d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
    d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
    DLLE_CHECK(d.h + 2 * pad >= d.kh && d.w + 2 * pad >= d.kw && d.oh >= 1 && d.ow >= 1,
               "conv2d: nonpositive output extent for input ", shape_str(x.shape()),
               " kernel ", shape_str(k.shape()), " stride ", stride, " pad ", pad);

    Tensor<T> out({d.batch, d.cout, d.oh, d.ow});
    parallel_for(d.batch, [&](int64_t n) {
      std::vector<T> col(static_cast<size_t>(d.patch()) * d.opix());
      detail::im2col(x.data() + n * d.cin * d.h * d.w, d, col.data());
      T* out_n = out.data() + n * d.cout * d.opix();
      detail::gemm(k.data(), col.data(), out_n, d.cout, d.patch(), d.opix(), false);
      for (int64_t o = 0; o < d.cout; ++o) {
        const T bo = b.at(o);
        T* row = out_n + o * d.opix();
        for (int64_t i = 0; i < d.opix(); ++i) row[i] += bo;
      }
    });
    bool ng = node(input).needs_grad || node(kernels).needs_grad || node(bias).needs_grad;
    return push(std::move(out), ng, {input.id, kernels.id, bias.id},
                [xid = input.id, kid = kernels.id, bid = bias.id, d](Tape& t, int32_t self) {
                  t.conv2d_backward(xid, kid, bid, d, t.nodes_[self].grad);
                });
  }

  // Integer-factor bicubic upsampling (Catmull-Rom a=-0.5, edge clamped).
  // Linear in the input; backward is the transposed stencil.
  Var upsample_bicubic(Var a, int64_t factor) {
    DLLE_CHECK(factor >= 1, "upsample_bicubic: factor must be >= 1, got ", factor);
    const Tensor<T>& x = value(a);
    DLLE_CHECK(x.rank() == 4, "upsample_bicubic expects NCHW, got ", shape_str(x.shape()));
    if (factor == 1) return a;
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const detail::CubicTaps tx = detail::cubic_taps(W, factor);
    const detail::CubicTaps ty = detail::cubic_taps(H, factor);
    const int64_t OW = W * factor, OH = H * factor;
    Tensor<T> out({B, C, OH, OW});
    std::vector<T> tmp(static_cast<size_t>(H) * OW);
    for (int64_t nc = 0; nc < B * C; ++nc) {
      const T* src = x.data() + nc * H * W;
      // width pass
      for (int64_t y = 0; y < H; ++y) {
        const T* in_row = src + y * W;
        T* mid = tmp.data() + y * OW;
        for (int64_t ox = 0; ox < OW; ++ox) {
          double acc = 0;
          for (int64_t kk = 0; kk < 4; ++kk)
            acc += tx.w[ox * 4 + kk] * static_cast<double>(in_row[tx.idx[ox * 4 + kk]]);
          mid[ox] = static_cast<T>(acc);
        }
      }
      // height pass
      T* dst = out.data() + nc * OH * OW;
      for (int64_t oy = 0; oy < OH; ++oy) {
        T* out_row = dst + oy * OW;
        const int64_t* iy = &ty.idx[oy * 4];
        const double* wy = &ty.w[oy * 4];
        for (int64_t ox = 0; ox < OW; ++ox) {
          double acc = 0;
          for (int64_t kk = 0; kk < 4; ++kk)
            acc += wy[kk] * static_cast<double>(tmp[iy[kk] * OW + ox]);
          out_row[ox] = static_cast<T>(acc);
        }
      }
    }
    return push(std::move(out), node(a).needs_grad, {a.id},
                [aid = a.id, tx, ty, B, C, H, W, OH, OW](Tape& t, int32_t self) {
                  if (!t.nodes_[aid].needs_grad) return;
                  Tensor<T>& ga = t.grad_buffer(aid);
                  const Tensor<T>& g = t.nodes_[self].grad;
                  std::vector<double> tmp(static_cast<size_t>(H) * OW);
                  for (int64_t nc = 0; nc < B * C; ++nc) {
                    std::fill(tmp.begin(), tmp.end(), 0.0);
                    const T* gsrc = g.data() + nc * OH * OW;
                    // transpose of height pass
                    for (int64_t oy = 0; oy < OH; ++oy) {
                      const int64_t* iy = &ty.idx[oy * 4];
                      const double* wy = &ty.w[oy * 4];
                      const T* grow = gsrc + oy * OW;
                      for (int64_t kk = 0; kk < 4; ++kk) {
                        double* trow = tmp.data() + iy[kk] * OW;
                        const double wk = wy[kk];
                        for (int64_t ox = 0; ox < OW; ++ox) trow[ox] += wk * grow[ox];
                      }
                    }
                    // transpose of width pass
                    T* gdst = ga.data() + nc * H * W;
                    for (int64_t y = 0; y < H; ++y) {
                      const double* trow = tmp.data() + y * OW;
                      T* grow = gdst + y * W;
                      for (int64_t ox = 0; ox < OW; ++ox) {
                        const double gv = trow[ox];
                        for (int64_t kk = 0; kk < 4; ++kk)
                          grow[tx.idx[ox * 4 + kk]] += static_cast<T>(tx.w[ox * 4 + kk] * gv);
                      }
                    }
                  }
                });
  }

  // ---- spatial forward differences (valid region) ----

  Var diff_x(Var a) {
    const Tensor<T>& x = value(a);
    DLLE_CHECK(x.rank() == 4, "diff_x expects NCHW, got ", shape_str(x.shape()));
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    DLLE_CHECK(W >= 2, "diff_x needs width >= 2, got ", W);
    Tensor<T> out({B, C, H, W - 1});
    for (int64_t p = 0; p < B * C * H; ++p) {
      const T* src = x.data() + p * W;
      T* dst = out.data() + p * (W - 1);
      for (int64_t i = 0; i < W - 1; ++i) dst[i] = src[i + 1] - src[i];
    }
    return push(std::move(out), node(a).needs_grad, {a.id},
                [aid = a.id, B, C, H, W](Tape& t, int32_t self) {
                  if (!t.nodes_[aid].needs_grad) return;
                  Tensor<T>& ga = t.grad_buffer(aid);
                  const Tensor<T>& g = t.nodes_[self].grad;
                  for (int64_t p = 0; p < B * C * H; ++p) {
                    const T* gs = g.data() + p * (W - 1);
                    T* gd = ga.data() + p * W;
                    for (int64_t i = 0; i < W - 1; ++i) {
                      gd[i + 1] += gs[i];
                      gd[i] -= gs[i];
                    }
                  }
                });
  }

  Var diff_y(Var a) {
    const Tensor<T>& x = value(a);
    DLLE_CHECK(x.rank() == 4, "diff_y expects NCHW, got ", shape_str(x.shape()));
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    DLLE_CHECK(H >= 2, "diff_y needs height >= 2, got ", H);
    Tensor<T> out({B, C, H - 1, W});
    for (int64_t p = 0; p < B * C; ++p) {
      const T* src = x.data() + p * H * W;
      T* dst = out.data() + p * (H - 1) * W;
      for (int64_t y = 0; y < H - 1; ++y)
        for (int64_t i = 0; i < W; ++i) dst[y * W + i] = src[(y + 1) * W + i] - src[y * W + i];
    }
    return push(std::move(out), node(a).needs_grad, {a.id},
                [aid = a.id, B, C, H, W](Tape& t, int32_t self) {
                  if (!t.nodes_[aid].needs_grad) return;
                  Tensor<T>& ga = t.grad_buffer(aid);
                  const Tensor<T>& g = t.nodes_[self].grad;
                  for (int64_t p = 0; p < B * C; ++p) {
                    const T* gs = g.data() + p * (H - 1) * W;
                    T* gd = ga.data() + p * H * W;
                    for (int64_t y = 0; y < H - 1; ++y)
                      for (int64_t i = 0; i < W; ++i) {
                        gd[(y + 1) * W + i] += gs[y * W + i];
                        gd[y * W + i] -= gs[y * W + i];
                      }
                  }
                });
  }

  // ---- reductions ----

  Var sum(Var a) {
    const Tensor<T>& x = value(a);
    double acc = 0;
    for (int64_t i = 0; i < x.numel(); ++i) acc += static_cast<double>(x.at(i));
    return push(Tensor<T>::scalar(static_cast<T>(acc)), node(a).needs_grad, {a.id},
                [aid = a.id](Tape& t, int32_t self) {
                  if (!t.nodes_[aid].needs_grad) return;
                  Tensor<T>& ga = t.grad_buffer(aid);
                  const T g = t.nodes_[self].grad.at(0);
                  for (int64_t i = 0; i < ga.numel(); ++i) ga.at(i) += g;
                });
  }

  Var mean(Var a) {
    const int64_t n = value(a).numel();
    return affine(sum(a), T(1) / static_cast<T>(n), T(0));
  }

  // Mean elementwise Huber between two same-shape tensors: 0.5 d^2 inside
  // |d| <= delta, delta(|d| - delta/2) outside.
  Var huber(Var a, Var b, T delta) {
    const Tensor<T>& x = value(a);
    const Tensor<T>& y = value(b);
    DLLE_CHECK(delta > T(0), "huber: delta must be positive, got ", delta);
    DLLE_CHECK(x.same_shape(y), "huber: shape mismatch ", shape_str(x.shape()), " vs ",
               shape_str(y.shape()));
    const int64_t n = x.numel();
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(x.at(i)) - static_cast<double>(y.at(i));
      const double ad = std::abs(d);
      const double dd = static_cast<double>(delta);
      acc += (ad <= dd) ? 0.5 * d * d : dd * (ad - 0.5 * dd);
    }
    acc /= static_cast<double>(n);
    bool ng = node(a).needs_grad || node(b).needs_grad;
    return push(Tensor<T>::scalar(static_cast<T>(acc)), ng, {a.id, b.id},
                [aid = a.id, bid = b.id, delta, n](Tape& t, int32_t self) {
                  const T g = t.nodes_[self].grad.at(0);
                  const Tensor<T>& x = t.nodes_[aid].value;
                  const Tensor<T>& y = t.nodes_[bid].value;
                  const bool na = t.nodes_[aid].needs_grad;
                  const bool nb = t.nodes_[bid].needs_grad;
                  Tensor<T>* ga = na ? &t.grad_buffer(aid) : nullptr;
                  Tensor<T>* gb = nb ? &t.grad_buffer(bid) : nullptr;
                  const T inv_n = T(1) / static_cast<T>(n);
                  for (int64_t i = 0; i < n; ++i) {
                    const T d = x.at(i) - y.at(i);
                    T w;
                    if (d > delta) w = delta;
                    else if (d < -delta) w = -delta;
                    else w = d;
                    w *= g * inv_n;
                    if (ga) ga->at(i) += w;
                    if (gb) gb->at(i) -= w;
                  }
                });
  }

  // ---- autodiff driver ----

  // Gradients for every registered parameter, in registration order.
  // Parameters the loss never touches get zeros.
  std::vector<Tensor<T>> backward(Var loss) {
    DLLE_CHECK(loss.valid() && loss.id < static_cast<int32_t>(nodes_.size()),
               "backward: loss is not on this tape");
    DLLE_CHECK(value(loss).numel() == 1, "backward: loss must be scalar, got shape ",
               shape_str(value(loss).shape()));
    DLLE_CHECK(!consumed_, "backward: tape already consumed; reset before reuse");
    consumed_ = true;
    grad_buffer(loss.id).at(0) = T(1);
    for (int32_t i = loss.id; i >= 0; --i) {
      Node& nd = nodes_[i];
      if (!nd.needs_grad || !nd.backward || nd.grad.empty()) continue;
      nd.backward(*this, i);
    }
    std::vector<Tensor<T>> grads;
    grads.reserve(params_.size());
    for (int32_t pid : params_) {
      Node& nd = nodes_[pid];
      if (nd.grad.empty())
        grads.emplace_back(nd.value.shape());
      else
        grads.push_back(std::move(nd.grad));
    }
    return grads;
  }

  void reset() {
    nodes_.clear();
    params_.clear();
    consumed_ = false;
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first contribution
    std::vector<int32_t> parents;
    std::function<void(Tape&, int32_t)> backward;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<int32_t> params_;
  bool consumed_ = false;

  const Node& node(Var v) const {
    DLLE_CHECK(v.valid() && v.id < static_cast<int32_t>(nodes_.size()), "invalid tape var");
    return nodes_[v.id];
  }
  Node& node(Var v) { return const_cast<Node&>(static_cast<const Tape*>(this)->node(v)); }

  Var push(Tensor<T> value, bool needs_grad, std::vector<int32_t> parents,
           std::function<void(Tape&, int32_t)> backward) {
    Node nd;
    nd.value = std::move(value);
    nd.parents = std::move(parents);
    nd.needs_grad = needs_grad;
    if (needs_grad) nd.backward = std::move(backward);
    nodes_.push_back(std::move(nd));
    return Var{static_cast<int32_t>(nodes_.size() - 1)};
  }

  Tensor<T>& grad_buffer(int32_t id) {
    Node& nd = nodes_[id];
    if (nd.grad.empty()) nd.grad = Tensor<T>(nd.value.shape());
    return nd.grad;
  }

  void accumulate_scaled(int32_t target, const Tensor<T>& g, T scale) {
    if (!nodes_[target].needs_grad) return;
    Tensor<T>& dst = grad_buffer(target);
    for (int64_t i = 0; i < g.numel(); ++i) dst.at(i) += scale * g.at(i);
  }

  template <typename FwdFn, typename BwdFn>
  Var unary_ew(Var a, const char* name, FwdFn fwd, BwdFn dfd) {
    (void)name;
    const Tensor<T>& x = value(a);
    Tensor<T> out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out.at(i) = fwd(x.at(i));
    return push(std::move(out), node(a).needs_grad, {a.id},
                [aid = a.id, dfd](Tape& t, int32_t self) {
                  if (!t.nodes_[aid].needs_grad) return;
                  Tensor<T>& ga = t.grad_buffer(aid);
                  const Tensor<T>& g = t.nodes_[self].grad;
                  const Tensor<T>& x = t.nodes_[aid].value;
                  const Tensor<T>& y = t.nodes_[self].value;
                  for (int64_t i = 0; i < g.numel(); ++i)
                    ga.at(i) += g.at(i) * dfd(x.at(i), y.at(i));
                });
  }

  template <typename FwdFn, typename BwdFn>
  Var binary_ew(Var a, Var b, const char* name, FwdFn fwd, BwdFn bwd) {
    const Tensor<T>& x = value(a);
    const Tensor<T>& y = value(b);
    DLLE_CHECK(x.same_shape(y), name, ": shape mismatch ", shape_str(x.shape()), " vs ",
               shape_str(y.shape()));
    Tensor<T> out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out.at(i) = fwd(x.at(i), y.at(i));
    bool ng = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(out), ng, {a.id, b.id},
                [aid = a.id, bid = b.id, bwd](Tape& t, int32_t self) {
                  const Tensor<T>& g = t.nodes_[self].grad;
                  const Tensor<T>& x = t.nodes_[aid].value;
                  const Tensor<T>& y = t.nodes_[bid].value;
                  const bool na = t.nodes_[aid].needs_grad;
                  const bool nb = t.nodes_[bid].needs_grad;
                  Tensor<T>* ga = na ? &t.grad_buffer(aid) : nullptr;
                  Tensor<T>* gb = nb ? &t.grad_buffer(bid) : nullptr;
                  T dead_a = 0, dead_b = 0;
                  for (int64_t i = 0; i < g.numel(); ++i) {
                    T& ra = ga ? ga->at(i) : dead_a;
                    T& rb = gb ? gb->at(i) : dead_b;
                    bwd(x.at(i), y.at(i), g.at(i), ra, rb);
                  }
                });
  }

  void conv2d_backward(int32_t xid, int32_t kid, int32_t bid, const detail::ConvDims& d,
                       const Tensor<T>& gout) {
    const Tensor<T>& x = nodes_[xid].value;
    const Tensor<T>& k = nodes_[kid].value;
    const bool need_x = nodes_[xid].needs_grad;
    const bool need_k = nodes_[kid].needs_grad;
    const bool need_b = nodes_[bid].needs_grad;
    if (need_b) {
      Tensor<T>& gb = grad_buffer(bid);
      for (int64_t n = 0; n < d.batch; ++n)
        for (int64_t o = 0; o < d.cout; ++o) {
          const T* row = gout.data() + (n * d.cout + o) * d.opix();
          double acc = 0;
          for (int64_t i = 0; i < d.opix(); ++i) acc += static_cast<double>(row[i]);
          gb.at(o) += static_cast<T>(acc);
        }
    }
    if (!need_x && !need_k) return;
    std::vector<T> col(static_cast<size_t>(d.patch()) * d.opix());
    std::vector<T> gcol(need_x ? col.size() : 0);
    for (int64_t n = 0; n < d.batch; ++n) {
      const T* gout_n = gout.data() + n * d.cout * d.opix();
      if (need_k) {
        detail::im2col(x.data() + n * d.cin * d.h * d.w, d, col.data());
        Tensor<T>& gk = grad_buffer(kid);
        detail::gemm_bt(gout_n, col.data(), gk.data(), d.cout, d.opix(), d.patch(), true);
      }
      if (need_x) {
        Tensor<T>& gx = grad_buffer(xid);
        detail::gemm_at(k.data(), gout_n, gcol.data(), d.patch(), d.cout, d.opix(), false);
        detail::col2im_add(gcol.data(), d, gx.data() + n * d.cin * d.h * d.w);
      }
    }
  }
};

}  // namespace deeplle
