#include "contour_adapt/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <string>

#include "contour_adapt/kernels_detail.hpp"

namespace ca::kern {

ConvGeom ConvGeom::make(int n, int cin, int h, int w, int cout, int kh, int kw,
                        int sh, int sw, int ph, int pw) {
  if (n < 1 || cin < 1 || h < 1 || w < 1 || cout < 1) {
    throw ShapeError("conv geometry: batch/channel/spatial dims must be >= 1");
  }
  if (kh < 1 || kw < 1 || sh < 1 || sw < 1 || ph < 0 || pw < 0) {
    throw ShapeError("conv geometry: invalid kernel/stride/padding");
  }
  ConvGeom g;
  g.n = n; g.cin = cin; g.h = h; g.w = w;
  g.cout = cout; g.kh = kh; g.kw = kw;
  g.sh = sh; g.sw = sw; g.ph = ph; g.pw = pw;
  g.oh = (h + 2 * ph - kh) / sh + 1;
  g.ow = (w + 2 * pw - kw) / sw + 1;
  if (h + 2 * ph - kh < 0 || w + 2 * pw - kw < 0 || g.oh < 1 || g.ow < 1) {
    throw ShapeError("conv geometry: output size would be < 1 (input " + std::to_string(h) +
                     "x" + std::to_string(w) + ", kernel " + std::to_string(kh) + "x" +
                     std::to_string(kw) + ")");
  }
  return g;
}

bool cpu_has_avx2() {
#if CA_KERN_HAVE_AVX2_LANE
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

Isa resolve_default() {
  const char* env = std::getenv("CONTOUR_ADAPT_KERNELS");
  if (env != nullptr) {
    std::string v(env);
    if (v == "scalar") return Isa::Scalar;
    if (v == "avx2") {
      if (!cpu_has_avx2()) throw ContractError("CONTOUR_ADAPT_KERNELS=avx2: CPU lacks AVX2+FMA");
      return Isa::Avx2;
    }
    // anything else (including "auto") falls through to detection
  }
  return cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<int> g_forced{-1};

}  // namespace

Isa active_isa() {
  int f = g_forced.load(std::memory_order_relaxed);
  if (f >= 0) return static_cast<Isa>(f);
  static const Isa resolved = resolve_default();
  return resolved;
}

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
  }
  return "?";
}

void force_isa(Isa isa) {
  if (isa == Isa::Avx2 && !cpu_has_avx2()) {
    throw ContractError("force_isa: CPU lacks AVX2+FMA");
  }
  g_forced.store(static_cast<int>(isa), std::memory_order_relaxed);
}

void reset_isa() { g_forced.store(-1, std::memory_order_relaxed); }

// Double always runs the scalar lane; float picks the active lane per call.
// CA_DISPATCH expands to that choice without a function-pointer table so the
// compiler still sees direct calls in the scalar-only build.

#if CA_KERN_HAVE_AVX2_LANE
#define CA_PICK(fn, ...) \
  (active_isa() == Isa::Avx2 ? avx2::fn(__VA_ARGS__) : scalar::fn(__VA_ARGS__))
#else
#define CA_PICK(fn, ...) scalar::fn(__VA_ARGS__)
#endif

template <> void fill<float>(float* y, float v, std::size_t n) { CA_PICK(fill, y, v, n); }
template <> void fill<double>(double* y, double v, std::size_t n) { scalar::fill(y, v, n); }

template <> void add<float>(const float* a, const float* b, float* y, std::size_t n) {
  CA_PICK(add, a, b, y, n);
}
template <> void add<double>(const double* a, const double* b, double* y, std::size_t n) {
  scalar::add(a, b, y, n);
}

template <> void mul<float>(const float* a, const float* b, float* y, std::size_t n) {
  CA_PICK(mul, a, b, y, n);
}
template <> void mul<double>(const double* a, const double* b, double* y, std::size_t n) {
  scalar::mul(a, b, y, n);
}

template <> void scale<float>(const float* x, float alpha, float* y, std::size_t n) {
  CA_PICK(scale, x, alpha, y, n);
}
template <> void scale<double>(const double* x, double alpha, double* y, std::size_t n) {
  scalar::scale(x, alpha, y, n);
}

template <> void axpy<float>(float alpha, const float* x, float* y, std::size_t n) {
  CA_PICK(axpy, alpha, x, y, n);
}
template <> void axpy<double>(double alpha, const double* x, double* y, std::size_t n) {
  scalar::axpy(alpha, x, y, n);
}

template <> void madd<float>(const float* a, const float* b, float* y, std::size_t n) {
  CA_PICK(madd, a, b, y, n);
}
template <> void madd<double>(const double* a, const double* b, double* y, std::size_t n) {
  scalar::madd(a, b, y, n);
}

template <> void scale_shift<float>(const float* x, float a, float b, float* y, std::size_t n) {
  CA_PICK(scale_shift, x, a, b, y, n);
}
template <> void scale_shift<double>(const double* x, double a, double b, double* y,
                                     std::size_t n) {
  scalar::scale_shift(x, a, b, y, n);
}

template <> void relu_fwd<float>(const float* x, float* y, std::size_t n) {
  CA_PICK(relu_fwd, x, y, n);
}
template <> void relu_fwd<double>(const double* x, double* y, std::size_t n) {
  scalar::relu_fwd(x, y, n);
}

template <> void relu_bwd<float>(const float* x, const float* gy, float* gx, std::size_t n) {
  CA_PICK(relu_bwd, x, gy, gx, n);
}
template <> void relu_bwd<double>(const double* x, const double* gy, double* gx, std::size_t n) {
  scalar::relu_bwd(x, gy, gx, n);
}

// Transcendentals stay scalar in both lanes.
template <> void sigmoid_fwd<float>(const float* x, float* y, std::size_t n) {
  scalar::sigmoid_fwd(x, y, n);
}
template <> void sigmoid_fwd<double>(const double* x, double* y, std::size_t n) {
  scalar::sigmoid_fwd(x, y, n);
}

template <> void sigmoid_bwd<float>(const float* y, const float* gy, float* gx, std::size_t n) {
  scalar::sigmoid_bwd(y, gy, gx, n);
}
template <> void sigmoid_bwd<double>(const double* y, const double* gy, double* gx,
                                     std::size_t n) {
  scalar::sigmoid_bwd(y, gy, gx, n);
}

template <> double sum<float>(const float* x, std::size_t n) { return CA_PICK(sum, x, n); }
template <> double sum<double>(const double* x, std::size_t n) { return scalar::sum(x, n); }

template <> double dot<float>(const float* a, const float* b, std::size_t n) {
  return CA_PICK(dot, a, b, n);
}
template <> double dot<double>(const double* a, const double* b, std::size_t n) {
  return scalar::dot(a, b, n);
}

template <> void conv2d_fwd<float>(const ConvGeom& g, const float* x, const float* w,
                                   const float* b, float* y) {
  CA_PICK(conv2d_fwd, g, x, w, b, y);
}
template <> void conv2d_fwd<double>(const ConvGeom& g, const double* x, const double* w,
                                    const double* b, double* y) {
  scalar::conv2d_fwd(g, x, w, b, y);
}

template <> void conv2d_bwd_x<float>(const ConvGeom& g, const float* w, const float* gy,
                                     float* gx) {
  CA_PICK(conv2d_bwd_x, g, w, gy, gx);
}
template <> void conv2d_bwd_x<double>(const ConvGeom& g, const double* w, const double* gy,
                                      double* gx) {
  scalar::conv2d_bwd_x(g, w, gy, gx);
}

template <> void conv2d_bwd_w<float>(const ConvGeom& g, const float* x, const float* gy,
                                     float* gw, float* gb) {
  CA_PICK(conv2d_bwd_w, g, x, gy, gw, gb);
}
template <> void conv2d_bwd_w<double>(const ConvGeom& g, const double* x, const double* gy,
                                      double* gw, double* gb) {
  scalar::conv2d_bwd_w(g, x, gy, gw, gb);
}

template <> void tconv2_fwd<float>(int n, int cin, int cout, int h, int w, const float* x,
                                   const float* wgt, const float* b, float* y) {
  CA_PICK(tconv2_fwd, n, cin, cout, h, w, x, wgt, b, y);
}
template <> void tconv2_fwd<double>(int n, int cin, int cout, int h, int w, const double* x,
                                    const double* wgt, const double* b, double* y) {
  scalar::tconv2_fwd(n, cin, cout, h, w, x, wgt, b, y);
}

template <> void tconv2_bwd_x<float>(int n, int cin, int cout, int h, int w, const float* wgt,
                                     const float* gy, float* gx) {
  CA_PICK(tconv2_bwd_x, n, cin, cout, h, w, wgt, gy, gx);
}
template <> void tconv2_bwd_x<double>(int n, int cin, int cout, int h, int w, const double* wgt,
                                      const double* gy, double* gx) {
  scalar::tconv2_bwd_x(n, cin, cout, h, w, wgt, gy, gx);
}

template <> void tconv2_bwd_w<float>(int n, int cin, int cout, int h, int w, const float* x,
                                     const float* gy, float* gw) {
  CA_PICK(tconv2_bwd_w, n, cin, cout, h, w, x, gy, gw);
}
template <> void tconv2_bwd_w<double>(int n, int cin, int cout, int h, int w, const double* x,
                                      const double* gy, double* gw) {
  scalar::tconv2_bwd_w(n, cin, cout, h, w, x, gy, gw);
}

template <> void bias_grad<float>(int n, int c, std::size_t hw, const float* gy, float* gb) {
  CA_PICK(bias_grad, n, c, hw, gy, gb);
}
template <> void bias_grad<double>(int n, int c, std::size_t hw, const double* gy, double* gb) {
  scalar::bias_grad(n, c, hw, gy, gb);
}

template <> void maxpool2_fwd<float>(int n, int c, int h, int w, const float* x, float* y,
                                     std::int64_t* argmax) {
  scalar::maxpool2_fwd(n, c, h, w, x, y, argmax);
}
template <> void maxpool2_fwd<double>(int n, int c, int h, int w, const double* x, double* y,
                                      std::int64_t* argmax) {
  scalar::maxpool2_fwd(n, c, h, w, x, y, argmax);
}

template <> void maxpool2_bwd<float>(std::size_t out_numel, const float* gy,
                                     const std::int64_t* argmax, float* gx) {
  scalar::maxpool2_bwd(out_numel, gy, argmax, gx);
}
template <> void maxpool2_bwd<double>(std::size_t out_numel, const double* gy,
                                      const std::int64_t* argmax, double* gx) {
  scalar::maxpool2_bwd(out_numel, gy, argmax, gx);
}

template <> void bn_bwd_x<float>(const float* xhat, const float* gy, float scale, float mgy,
                                 float mgyx, float* gx, std::size_t n) {
  CA_PICK(bn_bwd_x, xhat, gy, scale, mgy, mgyx, gx, n);
}
template <> void bn_bwd_x<double>(const double* xhat, const double* gy, double scale, double mgy,
                                  double mgyx, double* gx, std::size_t n) {
  scalar::bn_bwd_x(xhat, gy, scale, mgy, mgyx, gx, n);
}

template <> void adam_update<float>(float* p, const float* g, float* m, float* v, std::size_t n,
                                    float lr, float beta1, float beta2, float eps, float bc1,
                                    float bc2) {
  CA_PICK(adam_update, p, g, m, v, n, lr, beta1, beta2, eps, bc1, bc2);
}
template <> void adam_update<double>(double* p, const double* g, double* m, double* v,
                                     std::size_t n, double lr, double beta1, double beta2,
                                     double eps, double bc1, double bc2) {
  scalar::adam_update(p, g, m, v, n, lr, beta1, beta2, eps, bc1, bc2);
}

template <> double bce_fwd<float>(const float* p, const float* g, std::size_t n, float eps_clamp) {
  return scalar::bce_fwd(p, g, n, eps_clamp);
}
template <> double bce_fwd<double>(const double* p, const double* g, std::size_t n,
                                   double eps_clamp) {
  return scalar::bce_fwd(p, g, n, eps_clamp);
}

template <> void bce_bwd<float>(const float* p, const float* g, float gy_over_n, float* gp,
                                std::size_t n, float eps_clamp) {
  scalar::bce_bwd(p, g, gy_over_n, gp, n, eps_clamp);
}
template <> void bce_bwd<double>(const double* p, const double* g, double gy_over_n, double* gp,
                                 std::size_t n, double eps_clamp) {
  scalar::bce_bwd(p, g, gy_over_n, gp, n, eps_clamp);
}

#undef CA_PICK

}  // namespace ca::kern
