#pragma once

// Per-lane kernel entry points. Production code goes through the dispatch in
// kernels.hpp; these are exposed so the equivalence tests can pin one lane
// against the other.

#include <cstddef>
#include <cstdint>

#include "contour_adapt/kernels.hpp"

namespace ca::kern::scalar {

template <class T> void fill(T* y, T v, std::size_t n);
template <class T> void add(const T* a, const T* b, T* y, std::size_t n);
template <class T> void mul(const T* a, const T* b, T* y, std::size_t n);
template <class T> void scale(const T* x, T alpha, T* y, std::size_t n);
template <class T> void axpy(T alpha, const T* x, T* y, std::size_t n);
template <class T> void madd(const T* a, const T* b, T* y, std::size_t n);
template <class T> void scale_shift(const T* x, T a, T b, T* y, std::size_t n);
template <class T> void relu_fwd(const T* x, T* y, std::size_t n);
template <class T> void relu_bwd(const T* x, const T* gy, T* gx, std::size_t n);
template <class T> void sigmoid_fwd(const T* x, T* y, std::size_t n);
template <class T> void sigmoid_bwd(const T* y, const T* gy, T* gx, std::size_t n);
template <class T> double sum(const T* x, std::size_t n);
template <class T> double dot(const T* a, const T* b, std::size_t n);
template <class T> void conv2d_fwd(const ConvGeom& g, const T* x, const T* w, const T* b, T* y);
template <class T> void conv2d_bwd_x(const ConvGeom& g, const T* w, const T* gy, T* gx);
template <class T> void conv2d_bwd_w(const ConvGeom& g, const T* x, const T* gy, T* gw, T* gb);
template <class T> void tconv2_fwd(int n, int cin, int cout, int h, int w,
                                   const T* x, const T* wgt, const T* b, T* y);
template <class T> void tconv2_bwd_x(int n, int cin, int cout, int h, int w,
                                     const T* wgt, const T* gy, T* gx);
template <class T> void tconv2_bwd_w(int n, int cin, int cout, int h, int w,
                                     const T* x, const T* gy, T* gw);
template <class T> void bias_grad(int n, int c, std::size_t hw, const T* gy, T* gb);
template <class T> void maxpool2_fwd(int n, int c, int h, int w, const T* x, T* y,
                                     std::int64_t* argmax);
template <class T> void maxpool2_bwd(std::size_t out_numel, const T* gy,
                                     const std::int64_t* argmax, T* gx);
template <class T> void bn_bwd_x(const T* xhat, const T* gy, T scale, T mgy, T mgyx,
                                 T* gx, std::size_t n);
template <class T> void adam_update(T* p, const T* g, T* m, T* v, std::size_t n,
                                    T lr, T beta1, T beta2, T eps, T bc1, T bc2);
template <class T> double bce_fwd(const T* p, const T* g, std::size_t n, T eps_clamp);
template <class T> void bce_bwd(const T* p, const T* g, T gy_over_n, T* gp, std::size_t n,
                                T eps_clamp);

}  // namespace ca::kern::scalar

#if defined(__x86_64__) || defined(_M_X64)
#define CA_KERN_HAVE_AVX2_LANE 1

// float-only AVX2+FMA variants of the hot kernels. Anything without a win
// here (transcendentals, pooling) forwards to the scalar lane.
namespace ca::kern::avx2 {

void fill(float* y, float v, std::size_t n);
void add(const float* a, const float* b, float* y, std::size_t n);
void mul(const float* a, const float* b, float* y, std::size_t n);
void scale(const float* x, float alpha, float* y, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void madd(const float* a, const float* b, float* y, std::size_t n);
void scale_shift(const float* x, float a, float b, float* y, std::size_t n);
void relu_fwd(const float* x, float* y, std::size_t n);
void relu_bwd(const float* x, const float* gy, float* gx, std::size_t n);
double sum(const float* x, std::size_t n);
double dot(const float* a, const float* b, std::size_t n);
void conv2d_fwd(const ConvGeom& g, const float* x, const float* w, const float* b, float* y);
void conv2d_bwd_x(const ConvGeom& g, const float* w, const float* gy, float* gx);
void conv2d_bwd_w(const ConvGeom& g, const float* x, const float* gy, float* gw, float* gb);
void tconv2_fwd(int n, int cin, int cout, int h, int w,
                const float* x, const float* wgt, const float* b, float* y);
void tconv2_bwd_x(int n, int cin, int cout, int h, int w,
                  const float* wgt, const float* gy, float* gx);
void tconv2_bwd_w(int n, int cin, int cout, int h, int w,
                  const float* x, const float* gy, float* gw);
void bias_grad(int n, int c, std::size_t hw, const float* gy, float* gb);
void bn_bwd_x(const float* xhat, const float* gy, float scale, float mgy, float mgyx,
              float* gx, std::size_t n);
void adam_update(float* p, const float* g, float* m, float* v, std::size_t n,
                 float lr, float beta1, float beta2, float eps, float bc1, float bc2);

}  // namespace ca::kern::avx2

#else
#define CA_KERN_HAVE_AVX2_LANE 0
#endif
