#include <algorithm>
#include <cmath>

#include "contour_adapt/kernels_detail.hpp"
#include "contour_adapt/parallel.hpp"

// Reference lane. Every kernel here is the plain-loop ground truth the SIMD
// lanes are equivalence-tested against. Accumulation orders are fixed, so
// results do not depend on the thread count.

namespace ca::kern::scalar {

template <class T>
void fill(T* y, T v, std::size_t n) {
  std::fill(y, y + n, v);
}

template <class T>
void add(const T* a, const T* b, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <class T>
void mul(const T* a, const T* b, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <class T>
void scale(const T* x, T alpha, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

template <class T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void madd(const T* a, const T* b, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

template <class T>
void scale_shift(const T* x, T a, T b, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i] + b;
}

template <class T>
void relu_fwd(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_bwd(const T* x, const T* gy, T* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > T(0)) gx[i] += gy[i];
  }
}

template <class T>
void sigmoid_fwd(const T* x, T* y, std::size_t n) {
  // Saturated outputs are nudged into the open interval (0,1); at float
  // precision sigmoid(30) would otherwise round to exactly 1.
  const T hi = std::nextafter(T(1), T(0));
  const T lo = std::nextafter(T(0), T(1));
  for (std::size_t i = 0; i < n; ++i) {
    T v = T(1) / (T(1) + std::exp(-x[i]));
    y[i] = std::clamp(v, lo, hi);
  }
}

template <class T>
void sigmoid_bwd(const T* y, const T* gy, T* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) gx[i] += gy[i] * y[i] * (T(1) - y[i]);
}

template <class T>
double sum(const T* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]);
  return acc;
}

template <class T>
double dot(const T* a, const T* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

template <class T>
void conv2d_fwd(const ConvGeom& g, const T* x, const T* w, const T* b, T* y) {
  const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.oh) * g.ow;
  const std::size_t kplane = static_cast<std::size_t>(g.kh) * g.kw;
  parallel_for(static_cast<std::size_t>(g.n) * g.cout, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t idx = lo; idx < hi; ++idx) {
      int bn = static_cast<int>(idx) / g.cout;
      int co = static_cast<int>(idx) % g.cout;
      T* yp = y + (static_cast<std::size_t>(bn) * g.cout + co) * out_plane;
      fill(yp, b != nullptr ? b[co] : T(0), out_plane);
      for (int ci = 0; ci < g.cin; ++ci) {
        const T* xp = x + (static_cast<std::size_t>(bn) * g.cin + ci) * in_plane;
        const T* wp = w + (static_cast<std::size_t>(co) * g.cin + ci) * kplane;
        for (int ky = 0; ky < g.kh; ++ky) {
          for (int kx = 0; kx < g.kw; ++kx) {
            T wv = wp[ky * g.kw + kx];
            for (int oy = 0; oy < g.oh; ++oy) {
              int iy = oy * g.sh + ky - g.ph;
              if (iy < 0 || iy >= g.h) continue;
              const T* xrow = xp + static_cast<std::size_t>(iy) * g.w;
              T* yrow = yp + static_cast<std::size_t>(oy) * g.ow;
              for (int ox = 0; ox < g.ow; ++ox) {
                int ix = ox * g.sw + kx - g.pw;
                if (ix < 0 || ix >= g.w) continue;
                yrow[ox] += wv * xrow[ix];
              }
            }
          }
        }
      }
    }
  });
}

template <class T>
void conv2d_bwd_x(const ConvGeom& g, const T* w, const T* gy, T* gx) {
  const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.oh) * g.ow;
  const std::size_t kplane = static_cast<std::size_t>(g.kh) * g.kw;
  parallel_for(static_cast<std::size_t>(g.n) * g.cin, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t idx = lo; idx < hi; ++idx) {
      int bn = static_cast<int>(idx) / g.cin;
      int ci = static_cast<int>(idx) % g.cin;
      T* gxp = gx + (static_cast<std::size_t>(bn) * g.cin + ci) * in_plane;
      for (int co = 0; co < g.cout; ++co) {
        const T* gyp = gy + (static_cast<std::size_t>(bn) * g.cout + co) * out_plane;
        const T* wp = w + (static_cast<std::size_t>(co) * g.cin + ci) * kplane;
        for (int ky = 0; ky < g.kh; ++ky) {
          for (int kx = 0; kx < g.kw; ++kx) {
            T wv = wp[ky * g.kw + kx];
            for (int oy = 0; oy < g.oh; ++oy) {
              int iy = oy * g.sh + ky - g.ph;
              if (iy < 0 || iy >= g.h) continue;
              const T* gyrow = gyp + static_cast<std::size_t>(oy) * g.ow;
              T* gxrow = gxp + static_cast<std::size_t>(iy) * g.w;
              for (int ox = 0; ox < g.ow; ++ox) {
                int ix = ox * g.sw + kx - g.pw;
                if (ix < 0 || ix >= g.w) continue;
                gxrow[ix] += wv * gyrow[ox];
              }
            }
          }
        }
      }
    }
  });
}

template <class T>
void conv2d_bwd_w(const ConvGeom& g, const T* x, const T* gy, T* gw, T* gb) {
  const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.oh) * g.ow;
  const std::size_t kplane = static_cast<std::size_t>(g.kh) * g.kw;
  parallel_for(static_cast<std::size_t>(g.cout), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t co = lo; co < hi; ++co) {
      for (int ci = 0; ci < g.cin; ++ci) {
        T* gwp = gw + (co * g.cin + ci) * kplane;
        for (int ky = 0; ky < g.kh; ++ky) {
          for (int kx = 0; kx < g.kw; ++kx) {
            T acc = T(0);
            for (int bn = 0; bn < g.n; ++bn) {
              const T* gyp = gy + (static_cast<std::size_t>(bn) * g.cout + co) * out_plane;
              const T* xp = x + (static_cast<std::size_t>(bn) * g.cin + ci) * in_plane;
              for (int oy = 0; oy < g.oh; ++oy) {
                int iy = oy * g.sh + ky - g.ph;
                if (iy < 0 || iy >= g.h) continue;
                const T* gyrow = gyp + static_cast<std::size_t>(oy) * g.ow;
                const T* xrow = xp + static_cast<std::size_t>(iy) * g.w;
                for (int ox = 0; ox < g.ow; ++ox) {
                  int ix = ox * g.sw + kx - g.pw;
                  if (ix < 0 || ix >= g.w) continue;
                  acc += gyrow[ox] * xrow[ix];
                }
              }
            }
            gwp[ky * g.kw + kx] += acc;
          }
        }
      }
      if (gb != nullptr) {
        T acc = T(0);
        for (int bn = 0; bn < g.n; ++bn) {
          const T* gyp = gy + (static_cast<std::size_t>(bn) * g.cout + co) * out_plane;
          for (std::size_t i = 0; i < out_plane; ++i) acc += gyp[i];
        }
        gb[co] += acc;
      }
    }
  });
}

template <class T>
void tconv2_fwd(int n, int cin, int cout, int h, int w,
                const T* x, const T* wgt, const T* b, T* y) {
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = in_plane * 4;
  const int ow = 2 * w;
  parallel_for(static_cast<std::size_t>(n) * cout, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t idx = lo; idx < hi; ++idx) {
      int bn = static_cast<int>(idx) / cout;
      int co = static_cast<int>(idx) % cout;
      T* yp = y + (static_cast<std::size_t>(bn) * cout + co) * out_plane;
      fill(yp, b != nullptr ? b[co] : T(0), out_plane);
      for (int ci = 0; ci < cin; ++ci) {
        const T* xp = x + (static_cast<std::size_t>(bn) * cin + ci) * in_plane;
        const T* wp = wgt + (static_cast<std::size_t>(ci) * cout + co) * 4;
        for (int yy = 0; yy < h; ++yy) {
          const T* xrow = xp + static_cast<std::size_t>(yy) * w;
          for (int ky = 0; ky < 2; ++ky) {
            T* yrow = yp + static_cast<std::size_t>(2 * yy + ky) * ow;
            T w0 = wp[ky * 2 + 0];
            T w1 = wp[ky * 2 + 1];
            for (int xx = 0; xx < w; ++xx) {
              yrow[2 * xx + 0] += w0 * xrow[xx];
              yrow[2 * xx + 1] += w1 * xrow[xx];
            }
          }
        }
      }
    }
  });
}

template <class T>
void tconv2_bwd_x(int n, int cin, int cout, int h, int w,
                  const T* wgt, const T* gy, T* gx) {
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = in_plane * 4;
  const int ow = 2 * w;
  parallel_for(static_cast<std::size_t>(n) * cin, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t idx = lo; idx < hi; ++idx) {
      int bn = static_cast<int>(idx) / cin;
      int ci = static_cast<int>(idx) % cin;
      T* gxp = gx + (static_cast<std::size_t>(bn) * cin + ci) * in_plane;
      for (int co = 0; co < cout; ++co) {
        const T* gyp = gy + (static_cast<std::size_t>(bn) * cout + co) * out_plane;
        const T* wp = wgt + (static_cast<std::size_t>(ci) * cout + co) * 4;
        for (int yy = 0; yy < h; ++yy) {
          T* gxrow = gxp + static_cast<std::size_t>(yy) * w;
          for (int ky = 0; ky < 2; ++ky) {
            const T* gyrow = gyp + static_cast<std::size_t>(2 * yy + ky) * ow;
            T w0 = wp[ky * 2 + 0];
            T w1 = wp[ky * 2 + 1];
            for (int xx = 0; xx < w; ++xx) {
              gxrow[xx] += w0 * gyrow[2 * xx + 0] + w1 * gyrow[2 * xx + 1];
            }
          }
        }
      }
    }
  });
}

template <class T>
void tconv2_bwd_w(int n, int cin, int cout, int h, int w,
                  const T* x, const T* gy, T* gw) {
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = in_plane * 4;
  const int ow = 2 * w;
  parallel_for(static_cast<std::size_t>(cin), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t ci = lo; ci < hi; ++ci) {
      for (int co = 0; co < cout; ++co) {
        T* gwp = gw + (ci * cout + co) * 4;
        T acc[4] = {T(0), T(0), T(0), T(0)};
        for (int bn = 0; bn < n; ++bn) {
          const T* xp = x + (static_cast<std::size_t>(bn) * cin + ci) * in_plane;
          const T* gyp = gy + (static_cast<std::size_t>(bn) * cout + co) * out_plane;
          for (int yy = 0; yy < h; ++yy) {
            const T* xrow = xp + static_cast<std::size_t>(yy) * w;
            for (int ky = 0; ky < 2; ++ky) {
              const T* gyrow = gyp + static_cast<std::size_t>(2 * yy + ky) * ow;
              for (int xx = 0; xx < w; ++xx) {
                acc[ky * 2 + 0] += xrow[xx] * gyrow[2 * xx + 0];
                acc[ky * 2 + 1] += xrow[xx] * gyrow[2 * xx + 1];
              }
            }
          }
        }
        for (int k = 0; k < 4; ++k) gwp[k] += acc[k];
      }
    }
  });
}

template <class T>
void bias_grad(int n, int c, std::size_t hw, const T* gy, T* gb) {
  for (int ch = 0; ch < c; ++ch) {
    T acc = T(0);
    for (int bn = 0; bn < n; ++bn) {
      const T* p = gy + (static_cast<std::size_t>(bn) * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) acc += p[i];
    }
    gb[ch] += acc;
  }
}

template <class T>
void maxpool2_fwd(int n, int c, int h, int w, const T* x, T* y, std::int64_t* argmax) {
  const int oh = h / 2, ow = w / 2;
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
  for (int plane = 0; plane < n * c; ++plane) {
    const T* xp = x + static_cast<std::size_t>(plane) * in_plane;
    const std::size_t base = static_cast<std::size_t>(plane) * in_plane;
    T* yp = y + static_cast<std::size_t>(plane) * out_plane;
    std::int64_t* ap = argmax + static_cast<std::size_t>(plane) * out_plane;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        std::size_t i00 = static_cast<std::size_t>(2 * oy) * w + 2 * ox;
        // Row-major window scan with strict >, so ties keep the first hit.
        std::size_t best = i00;
        T bv = xp[i00];
        const std::size_t cand[3] = {i00 + 1, i00 + w, i00 + w + 1};
        for (std::size_t k : cand) {
          if (xp[k] > bv) {
            bv = xp[k];
            best = k;
          }
        }
        yp[static_cast<std::size_t>(oy) * ow + ox] = bv;
        ap[static_cast<std::size_t>(oy) * ow + ox] = static_cast<std::int64_t>(base + best);
      }
    }
  }
}

template <class T>
void maxpool2_bwd(std::size_t out_numel, const T* gy, const std::int64_t* argmax, T* gx) {
  for (std::size_t i = 0; i < out_numel; ++i) gx[argmax[i]] += gy[i];
}

template <class T>
void bn_bwd_x(const T* xhat, const T* gy, T scale, T mgy, T mgyx, T* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    gx[i] += scale * (gy[i] - mgy - xhat[i] * mgyx);
  }
}

template <class T>
void adam_update(T* p, const T* g, T* m, T* v, std::size_t n,
                 T lr, T beta1, T beta2, T eps, T bc1, T bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * (g[i] * g[i]);
    T mhat = m[i] / bc1;
    T vhat = v[i] / bc2;
    p[i] -= lr * (mhat / (std::sqrt(vhat) + eps));
  }
}

template <class T>
double bce_fwd(const T* p, const T* g, std::size_t n, T eps_clamp) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    T pc = std::clamp(p[i], eps_clamp, T(1) - eps_clamp);
    acc -= static_cast<double>(g[i]) * std::log(static_cast<double>(pc)) +
           (1.0 - static_cast<double>(g[i])) * std::log(1.0 - static_cast<double>(pc));
  }
  return acc / static_cast<double>(n);
}

template <class T>
void bce_bwd(const T* p, const T* g, T gy_over_n, T* gp, std::size_t n, T eps_clamp) {
  for (std::size_t i = 0; i < n; ++i) {
    // Clamped elements are flat: no gradient through them.
    if (p[i] < eps_clamp || p[i] > T(1) - eps_clamp) continue;
    gp[i] += gy_over_n * (p[i] - g[i]) / (p[i] * (T(1) - p[i]));
  }
}

#define CA_INSTANTIATE_SCALAR(T)                                                         \
  template void fill<T>(T*, T, std::size_t);                                             \
  template void add<T>(const T*, const T*, T*, std::size_t);                             \
  template void mul<T>(const T*, const T*, T*, std::size_t);                             \
  template void scale<T>(const T*, T, T*, std::size_t);                                  \
  template void axpy<T>(T, const T*, T*, std::size_t);                                   \
  template void madd<T>(const T*, const T*, T*, std::size_t);                            \
  template void scale_shift<T>(const T*, T, T, T*, std::size_t);                         \
  template void relu_fwd<T>(const T*, T*, std::size_t);                                  \
  template void relu_bwd<T>(const T*, const T*, T*, std::size_t);                        \
  template void sigmoid_fwd<T>(const T*, T*, std::size_t);                               \
  template void sigmoid_bwd<T>(const T*, const T*, T*, std::size_t);                     \
  template double sum<T>(const T*, std::size_t);                                         \
  template double dot<T>(const T*, const T*, std::size_t);                               \
  template void conv2d_fwd<T>(const ConvGeom&, const T*, const T*, const T*, T*);        \
  template void conv2d_bwd_x<T>(const ConvGeom&, const T*, const T*, T*);                \
  template void conv2d_bwd_w<T>(const ConvGeom&, const T*, const T*, T*, T*);            \
  template void tconv2_fwd<T>(int, int, int, int, int, const T*, const T*, const T*, T*);\
  template void tconv2_bwd_x<T>(int, int, int, int, int, const T*, const T*, T*);        \
  template void tconv2_bwd_w<T>(int, int, int, int, int, const T*, const T*, T*);        \
  template void bias_grad<T>(int, int, std::size_t, const T*, T*);                       \
  template void maxpool2_fwd<T>(int, int, int, int, const T*, T*, std::int64_t*);        \
  template void maxpool2_bwd<T>(std::size_t, const T*, const std::int64_t*, T*);         \
  template void bn_bwd_x<T>(const T*, const T*, T, T, T, T*, std::size_t);               \
  template void adam_update<T>(T*, const T*, T*, T*, std::size_t, T, T, T, T, T, T);     \
  template double bce_fwd<T>(const T*, const T*, std::size_t, T);                        \
  template void bce_bwd<T>(const T*, const T*, T, T*, std::size_t, T);

CA_INSTANTIATE_SCALAR(float)
CA_INSTANTIATE_SCALAR(double)

#undef CA_INSTANTIATE_SCALAR

}  // namespace ca::kern::scalar
