#pragma once

#include <cstddef>
#include <cstdint>

#include "contour_adapt/errors.hpp"

namespace ca::kern {

// Geometry of a 2-d cross-correlation, NCHW layout, zero padding.
// Weights are [cout][cin][kh][kw].
struct ConvGeom {
  int n = 1;
  int cin = 1, h = 1, w = 1;
  int cout = 1, kh = 1, kw = 1;
  int sh = 1, sw = 1;
  int ph = 0, pw = 0;
  int oh = 0, ow = 0;  // derived

  static ConvGeom make(int n, int cin, int h, int w, int cout, int kh, int kw,
                       int sh, int sw, int ph, int pw);
};

// SIMD lane the float kernels dispatch to. Resolved once per process: the
// best lane the CPU supports, overridable with CONTOUR_ADAPT_KERNELS
// (auto|scalar|avx2) or force_isa(). Double kernels always run scalar; they
// exist for the 64-bit gradient-checking path, not for speed.
enum class Isa { Scalar, Avx2 };

Isa active_isa();
const char* isa_name(Isa isa);
bool cpu_has_avx2();
void force_isa(Isa isa);  // throws ContractError if unsupported by the CPU
void reset_isa();         // back to auto/env resolution

// ---- elementwise ----
template <class T> void fill(T* y, T v, std::size_t n);
template <class T> void add(const T* a, const T* b, T* y, std::size_t n);
template <class T> void mul(const T* a, const T* b, T* y, std::size_t n);
template <class T> void scale(const T* x, T alpha, T* y, std::size_t n);
template <class T> void axpy(T alpha, const T* x, T* y, std::size_t n);           // y += alpha*x
template <class T> void madd(const T* a, const T* b, T* y, std::size_t n);        // y += a*b
template <class T> void scale_shift(const T* x, T a, T b, T* y, std::size_t n);   // y = a*x + b
template <class T> void relu_fwd(const T* x, T* y, std::size_t n);
template <class T> void relu_bwd(const T* x, const T* gy, T* gx, std::size_t n);  // gx += gy*(x>0)
template <class T> void sigmoid_fwd(const T* x, T* y, std::size_t n);
template <class T> void sigmoid_bwd(const T* y, const T* gy, T* gx, std::size_t n);

// ---- reductions (double accumulator in both lanes) ----
template <class T> double sum(const T* x, std::size_t n);
template <class T> double dot(const T* a, const T* b, std::size_t n);

// ---- convolution ----
template <class T> void conv2d_fwd(const ConvGeom& g, const T* x, const T* w, const T* b, T* y);
template <class T> void conv2d_bwd_x(const ConvGeom& g, const T* w, const T* gy, T* gx);
template <class T> void conv2d_bwd_w(const ConvGeom& g, const T* x, const T* gy, T* gw, T* gb);

// ---- transposed convolution, kernel 2x2, stride 2 ----
// x: [n][cin][h][w], weights [cin][cout][2][2], y: [n][cout][2h][2w].
template <class T> void tconv2_fwd(int n, int cin, int cout, int h, int w,
                                   const T* x, const T* wgt, const T* b, T* y);
template <class T> void tconv2_bwd_x(int n, int cin, int cout, int h, int w,
                                     const T* wgt, const T* gy, T* gx);
template <class T> void tconv2_bwd_w(int n, int cin, int cout, int h, int w,
                                     const T* x, const T* gy, T* gw);

// gb[c] += sum over batch and spatial dims of gy[n][c][hw].
template <class T> void bias_grad(int n, int c, std::size_t hw, const T* gy, T* gb);

// ---- 2x2 max pooling, stride 2; ties go to the first element in row-major
// window order. argmax holds flat indices into x. ----
template <class T> void maxpool2_fwd(int n, int c, int h, int w, const T* x, T* y,
                                     std::int64_t* argmax);
template <class T> void maxpool2_bwd(std::size_t out_numel, const T* gy,
                                     const std::int64_t* argmax, T* gx);

// ---- batchnorm backward inner loop: gx += scale*(gy - mgy - xhat*mgyx) ----
template <class T> void bn_bwd_x(const T* xhat, const T* gy, T scale, T mgy, T mgyx,
                                 T* gx, std::size_t n);

// ---- Adam update, bias-corrected; bitwise identical across lanes ----
template <class T> void adam_update(T* p, const T* g, T* m, T* v, std::size_t n,
                                    T lr, T beta1, T beta2, T eps, T bc1, T bc2);

// ---- binary cross-entropy; p clamped to [eps_clamp, 1-eps_clamp] ----
template <class T> double bce_fwd(const T* p, const T* g, std::size_t n, T eps_clamp);
template <class T> void bce_bwd(const T* p, const T* g, T gy_over_n, T* gp, std::size_t n,
                                T eps_clamp);

}  // namespace ca::kern
