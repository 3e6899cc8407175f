#include "contour_adapt/kernels_detail.hpp"

#if CA_KERN_HAVE_AVX2_LANE

#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "contour_adapt/parallel.hpp"

// AVX2+FMA lane. Only kernels with a measurable win live here; everything
// else forwards to the scalar lane. Reduction trees are fixed, so results
// are bitwise reproducible run to run (FMA means they differ from the
// scalar lane within float rounding, which the equivalence suite bounds).

namespace ca::kern::avx2 {
namespace {

// Fixed-tree horizontal sums.
inline float hsum8(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  __m128 s = _mm_add_ps(lo, hi);
  s = _mm_add_ps(s, _mm_movehl_ps(s, s));
  s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 1));
  return _mm_cvtss_f32(s);
}

inline double hsum4d(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  __m128d s = _mm_add_pd(lo, hi);
  s = _mm_add_sd(s, _mm_unpackhi_pd(s, s));
  return _mm_cvtsd_f64(s);
}

const __m256i kDeinterleaveFix = _mm256_setr_epi32(0, 1, 4, 5, 2, 3, 6, 7);

}  // namespace

void fill(float* y, float v, std::size_t n) {
  __m256 vv = _mm256_set1_ps(v);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, vv);
  for (; i < n; ++i) y[i] = v;
}

void add(const float* a, const float* b, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) y[i] = a[i] + b[i];
}

void mul(const float* a, const float* b, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

void scale(const float* x, float alpha, float* y, std::size_t n) {
  __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
  }
  for (; i < n; ++i) y[i] = alpha * x[i];
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 yv = _mm256_loadu_ps(y + i);
    yv = _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), yv);
    _mm256_storeu_ps(y + i, yv);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void madd(const float* a, const float* b, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 yv = _mm256_loadu_ps(y + i);
    yv = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), yv);
    _mm256_storeu_ps(y + i, yv);
  }
  for (; i < n; ++i) y[i] += a[i] * b[i];
}

void scale_shift(const float* x, float a, float b, float* y, std::size_t n) {
  __m256 av = _mm256_set1_ps(a);
  __m256 bv = _mm256_set1_ps(b);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), bv));
  }
  for (; i < n; ++i) y[i] = a * x[i] + b;
}

void relu_fwd(const float* x, float* y, std::size_t n) {
  __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_max_ps(zero, _mm256_loadu_ps(x + i)));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd(const float* x, const float* gy, float* gx, std::size_t n) {
  __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    __m256 passed = _mm256_and_ps(_mm256_loadu_ps(gy + i), mask);
    _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_loadu_ps(gx + i), passed));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0f) gx[i] += gy[i];
  }
}

double sum(const float* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 v = _mm256_loadu_ps(x + i);
    acc0 = _mm256_add_pd(acc0, _mm256_cvtps_pd(_mm256_castps256_ps128(v)));
    acc1 = _mm256_add_pd(acc1, _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)));
  }
  double acc = hsum4d(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += static_cast<double>(x[i]);
  return acc;
}

double dot(const float* a, const float* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 av = _mm256_loadu_ps(a + i);
    __m256 bv = _mm256_loadu_ps(b + i);
    __m256d lo = _mm256_mul_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(av)),
                               _mm256_cvtps_pd(_mm256_castps256_ps128(bv)));
    __m256d hi = _mm256_mul_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(av, 1)),
                               _mm256_cvtps_pd(_mm256_extractf128_ps(bv, 1)));
    acc0 = _mm256_add_pd(acc0, lo);
    acc1 = _mm256_add_pd(acc1, hi);
  }
  double acc = hsum4d(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

void conv2d_fwd(const ConvGeom& g, const float* x, const float* w, const float* b, float* y) {
  if (g.sh != 1 || g.sw != 1) {
    scalar::conv2d_fwd(g, x, w, b, y);  // strided shapes are oracle-scale only
    return;
  }
  const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.oh) * g.ow;
  const std::size_t kplane = static_cast<std::size_t>(g.kh) * g.kw;
  parallel_for(static_cast<std::size_t>(g.n) * g.cout, [&](std::size_t lo_i, std::size_t hi_i) {
    for (std::size_t idx = lo_i; idx < hi_i; ++idx) {
      int bn = static_cast<int>(idx) / g.cout;
      int co = static_cast<int>(idx) % g.cout;
      float* yp = y + (static_cast<std::size_t>(bn) * g.cout + co) * out_plane;
      fill(yp, b != nullptr ? b[co] : 0.0f, out_plane);
      for (int ci = 0; ci < g.cin; ++ci) {
        const float* xp = x + (static_cast<std::size_t>(bn) * g.cin + ci) * in_plane;
        const float* wp = w + (static_cast<std::size_t>(co) * g.cin + ci) * kplane;
        for (int ky = 0; ky < g.kh; ++ky) {
          for (int kx = 0; kx < g.kw; ++kx) {
            float wv = wp[ky * g.kw + kx];
            __m256 wvv = _mm256_set1_ps(wv);
            const int kxw = kx - g.pw;
            const int ox_lo = std::max(0, -kxw);
            const int ox_hi = std::min(g.ow, g.w - kxw);
            if (ox_lo >= ox_hi) continue;
            for (int oy = 0; oy < g.oh; ++oy) {
              int iy = oy + ky - g.ph;
              if (iy < 0 || iy >= g.h) continue;
              const float* xrow = xp + static_cast<std::size_t>(iy) * g.w;
              float* yrow = yp + static_cast<std::size_t>(oy) * g.ow;
              int ox = ox_lo;
              for (; ox + 8 <= ox_hi; ox += 8) {
                __m256 yv = _mm256_loadu_ps(yrow + ox);
                __m256 xv = _mm256_loadu_ps(&xrow[ox + kxw]);
                _mm256_storeu_ps(yrow + ox, _mm256_fmadd_ps(wvv, xv, yv));
              }
              for (; ox < ox_hi; ++ox) yrow[ox] += wv * xrow[ox + kxw];
            }
          }
        }
      }
    }
  });
}

void conv2d_bwd_x(const ConvGeom& g, const float* w, const float* gy, float* gx) {
  if (g.sh != 1 || g.sw != 1) {
    scalar::conv2d_bwd_x(g, w, gy, gx);
    return;
  }
  const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.oh) * g.ow;
  const std::size_t kplane = static_cast<std::size_t>(g.kh) * g.kw;
  parallel_for(static_cast<std::size_t>(g.n) * g.cin, [&](std::size_t lo_i, std::size_t hi_i) {
    for (std::size_t idx = lo_i; idx < hi_i; ++idx) {
      int bn = static_cast<int>(idx) / g.cin;
      int ci = static_cast<int>(idx) % g.cin;
      float* gxp = gx + (static_cast<std::size_t>(bn) * g.cin + ci) * in_plane;
      for (int co = 0; co < g.cout; ++co) {
        const float* gyp = gy + (static_cast<std::size_t>(bn) * g.cout + co) * out_plane;
        const float* wp = w + (static_cast<std::size_t>(co) * g.cin + ci) * kplane;
        for (int ky = 0; ky < g.kh; ++ky) {
          for (int kx = 0; kx < g.kw; ++kx) {
            float wv = wp[ky * g.kw + kx];
            __m256 wvv = _mm256_set1_ps(wv);
            const int kxw = kx - g.pw;
            const int ox_lo = std::max(0, -kxw);
            const int ox_hi = std::min(g.ow, g.w - kxw);
            if (ox_lo >= ox_hi) continue;
            for (int oy = 0; oy < g.oh; ++oy) {
              int iy = oy + ky - g.ph;
              if (iy < 0 || iy >= g.h) continue;
              const float* gyrow = gyp + static_cast<std::size_t>(oy) * g.ow;
              float* gxrow = gxp + static_cast<std::size_t>(iy) * g.w;
              int ox = ox_lo;
              for (; ox + 8 <= ox_hi; ox += 8) {
                __m256 gv = _mm256_loadu_ps(&gxrow[ox + kxw]);
                gv = _mm256_fmadd_ps(wvv, _mm256_loadu_ps(gyrow + ox), gv);
                _mm256_storeu_ps(&gxrow[ox + kxw], gv);
              }
              for (; ox < ox_hi; ++ox) gxrow[ox + kxw] += wv * gyrow[ox];
            }
          }
        }
      }
    }
  });
}

void conv2d_bwd_w(const ConvGeom& g, const float* x, const float* gy, float* gw, float* gb) {
  if (g.sh != 1 || g.sw != 1) {
    scalar::conv2d_bwd_w(g, x, gy, gw, gb);
    return;
  }
  const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.oh) * g.ow;
  const std::size_t kplane = static_cast<std::size_t>(g.kh) * g.kw;
  parallel_for(static_cast<std::size_t>(g.cout), [&](std::size_t lo_i, std::size_t hi_i) {
    for (std::size_t co = lo_i; co < hi_i; ++co) {
      for (int ci = 0; ci < g.cin; ++ci) {
        float* gwp = gw + (co * g.cin + ci) * kplane;
        for (int ky = 0; ky < g.kh; ++ky) {
          for (int kx = 0; kx < g.kw; ++kx) {
            const int kxw = kx - g.pw;
            const int ox_lo = std::max(0, -kxw);
            const int ox_hi = std::min(g.ow, g.w - kxw);
            if (ox_lo >= ox_hi) continue;
            __m256 vacc = _mm256_setzero_ps();
            float tail = 0.0f;
            for (int bn = 0; bn < g.n; ++bn) {
              const float* gyp = gy + (static_cast<std::size_t>(bn) * g.cout + co) * out_plane;
              const float* xp = x + (static_cast<std::size_t>(bn) * g.cin + ci) * in_plane;
              for (int oy = 0; oy < g.oh; ++oy) {
                int iy = oy + ky - g.ph;
                if (iy < 0 || iy >= g.h) continue;
                const float* gyrow = gyp + static_cast<std::size_t>(oy) * g.ow;
                const float* xrow = xp + static_cast<std::size_t>(iy) * g.w;
                int ox = ox_lo;
                for (; ox + 8 <= ox_hi; ox += 8) {
                  vacc = _mm256_fmadd_ps(_mm256_loadu_ps(gyrow + ox),
                                         _mm256_loadu_ps(&xrow[ox + kxw]), vacc);
                }
                for (; ox < ox_hi; ++ox) tail += gyrow[ox] * xrow[ox + kxw];
              }
            }
            gwp[ky * g.kw + kx] += hsum8(vacc) + tail;
          }
        }
      }
      if (gb != nullptr) {
        double acc = 0.0;
        for (int bn = 0; bn < g.n; ++bn) {
          acc += sum(gy + (static_cast<std::size_t>(bn) * g.cout + co) * out_plane, out_plane);
        }
        gb[co] += static_cast<float>(acc);
      }
    }
  });
}

void tconv2_fwd(int n, int cin, int cout, int h, int w,
                const float* x, const float* wgt, const float* b, float* y) {
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = in_plane * 4;
  const int ow = 2 * w;
  parallel_for(static_cast<std::size_t>(n) * cout, [&](std::size_t lo_i, std::size_t hi_i) {
    for (std::size_t idx = lo_i; idx < hi_i; ++idx) {
      int bn = static_cast<int>(idx) / cout;
      int co = static_cast<int>(idx) % cout;
      float* yp = y + (static_cast<std::size_t>(bn) * cout + co) * out_plane;
      fill(yp, b != nullptr ? b[co] : 0.0f, out_plane);
      for (int ci = 0; ci < cin; ++ci) {
        const float* xp = x + (static_cast<std::size_t>(bn) * cin + ci) * in_plane;
        const float* wp = wgt + (static_cast<std::size_t>(ci) * cout + co) * 4;
        for (int yy = 0; yy < h; ++yy) {
          const float* xrow = xp + static_cast<std::size_t>(yy) * w;
          for (int ky = 0; ky < 2; ++ky) {
            float* yrow = yp + static_cast<std::size_t>(2 * yy + ky) * ow;
            float w0 = wp[ky * 2 + 0];
            float w1 = wp[ky * 2 + 1];
            __m256 w0v = _mm256_set1_ps(w0);
            __m256 w1v = _mm256_set1_ps(w1);
            int xx = 0;
            for (; xx + 8 <= w; xx += 8) {
              __m256 xv = _mm256_loadu_ps(xrow + xx);
              __m256 a0 = _mm256_mul_ps(w0v, xv);  // even output columns
              __m256 a1 = _mm256_mul_ps(w1v, xv);  // odd output columns
              __m256 lo = _mm256_unpacklo_ps(a0, a1);
              __m256 hi = _mm256_unpackhi_ps(a0, a1);
              __m256 out0 = _mm256_permute2f128_ps(lo, hi, 0x20);
              __m256 out1 = _mm256_permute2f128_ps(lo, hi, 0x31);
              float* dst = yrow + 2 * xx;
              _mm256_storeu_ps(dst, _mm256_add_ps(_mm256_loadu_ps(dst), out0));
              _mm256_storeu_ps(dst + 8, _mm256_add_ps(_mm256_loadu_ps(dst + 8), out1));
            }
            for (; xx < w; ++xx) {
              yrow[2 * xx + 0] += w0 * xrow[xx];
              yrow[2 * xx + 1] += w1 * xrow[xx];
            }
          }
        }
      }
    }
  });
}

void tconv2_bwd_x(int n, int cin, int cout, int h, int w,
                  const float* wgt, const float* gy, float* gx) {
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = in_plane * 4;
  const int ow = 2 * w;
  parallel_for(static_cast<std::size_t>(n) * cin, [&](std::size_t lo_i, std::size_t hi_i) {
    for (std::size_t idx = lo_i; idx < hi_i; ++idx) {
      int bn = static_cast<int>(idx) / cin;
      int ci = static_cast<int>(idx) % cin;
      float* gxp = gx + (static_cast<std::size_t>(bn) * cin + ci) * in_plane;
      for (int co = 0; co < cout; ++co) {
        const float* gyp = gy + (static_cast<std::size_t>(bn) * cout + co) * out_plane;
        const float* wp = wgt + (static_cast<std::size_t>(ci) * cout + co) * 4;
        for (int yy = 0; yy < h; ++yy) {
          float* gxrow = gxp + static_cast<std::size_t>(yy) * w;
          for (int ky = 0; ky < 2; ++ky) {
            const float* gyrow = gyp + static_cast<std::size_t>(2 * yy + ky) * ow;
            float w0 = wp[ky * 2 + 0];
            float w1 = wp[ky * 2 + 1];
            __m256 w0v = _mm256_set1_ps(w0);
            __m256 w1v = _mm256_set1_ps(w1);
            int xx = 0;
            for (; xx + 8 <= w; xx += 8) {
              __m256 v0 = _mm256_loadu_ps(gyrow + 2 * xx);
              __m256 v1 = _mm256_loadu_ps(gyrow + 2 * xx + 8);
              __m256 t0 = _mm256_shuffle_ps(v0, v1, _MM_SHUFFLE(2, 0, 2, 0));
              __m256 t1 = _mm256_shuffle_ps(v0, v1, _MM_SHUFFLE(3, 1, 3, 1));
              __m256 even = _mm256_permutevar8x32_ps(t0, kDeinterleaveFix);
              __m256 odd = _mm256_permutevar8x32_ps(t1, kDeinterleaveFix);
              __m256 gv = _mm256_loadu_ps(gxrow + xx);
              gv = _mm256_fmadd_ps(w0v, even, gv);
              gv = _mm256_fmadd_ps(w1v, odd, gv);
              _mm256_storeu_ps(gxrow + xx, gv);
            }
            for (; xx < w; ++xx) {
              gxrow[xx] += w0 * gyrow[2 * xx + 0] + w1 * gyrow[2 * xx + 1];
            }
          }
        }
      }
    }
  });
}

void tconv2_bwd_w(int n, int cin, int cout, int h, int w,
                  const float* x, const float* gy, float* gw) {
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = in_plane * 4;
  const int ow = 2 * w;
  parallel_for(static_cast<std::size_t>(cin), [&](std::size_t lo_i, std::size_t hi_i) {
    for (std::size_t ci = lo_i; ci < hi_i; ++ci) {
      for (int co = 0; co < cout; ++co) {
        float* gwp = gw + (ci * cout + co) * 4;
        __m256 vacc[4] = {_mm256_setzero_ps(), _mm256_setzero_ps(),
                          _mm256_setzero_ps(), _mm256_setzero_ps()};
        float tail[4] = {0.0f, 0.0f, 0.0f, 0.0f};
        for (int bn = 0; bn < n; ++bn) {
          const float* xp = x + (static_cast<std::size_t>(bn) * cin + ci) * in_plane;
          const float* gyp = gy + (static_cast<std::size_t>(bn) * cout + co) * out_plane;
          for (int yy = 0; yy < h; ++yy) {
            const float* xrow = xp + static_cast<std::size_t>(yy) * w;
            for (int ky = 0; ky < 2; ++ky) {
              const float* gyrow = gyp + static_cast<std::size_t>(2 * yy + ky) * ow;
              int xx = 0;
              for (; xx + 8 <= w; xx += 8) {
                __m256 xv = _mm256_loadu_ps(xrow + xx);
                __m256 v0 = _mm256_loadu_ps(gyrow + 2 * xx);
                __m256 v1 = _mm256_loadu_ps(gyrow + 2 * xx + 8);
                __m256 t0 = _mm256_shuffle_ps(v0, v1, _MM_SHUFFLE(2, 0, 2, 0));
                __m256 t1 = _mm256_shuffle_ps(v0, v1, _MM_SHUFFLE(3, 1, 3, 1));
                __m256 even = _mm256_permutevar8x32_ps(t0, kDeinterleaveFix);
                __m256 odd = _mm256_permutevar8x32_ps(t1, kDeinterleaveFix);
                vacc[ky * 2 + 0] = _mm256_fmadd_ps(xv, even, vacc[ky * 2 + 0]);
                vacc[ky * 2 + 1] = _mm256_fmadd_ps(xv, odd, vacc[ky * 2 + 1]);
              }
              for (; xx < w; ++xx) {
                tail[ky * 2 + 0] += xrow[xx] * gyrow[2 * xx + 0];
                tail[ky * 2 + 1] += xrow[xx] * gyrow[2 * xx + 1];
              }
            }
          }
        }
        for (int k = 0; k < 4; ++k) gwp[k] += hsum8(vacc[k]) + tail[k];
      }
    }
  });
}

void bias_grad(int n, int c, std::size_t hw, const float* gy, float* gb) {
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (int bn = 0; bn < n; ++bn) {
      acc += sum(gy + (static_cast<std::size_t>(bn) * c + ch) * hw, hw);
    }
    gb[ch] += static_cast<float>(acc);
  }
}

void bn_bwd_x(const float* xhat, const float* gy, float scale, float mgy, float mgyx,
              float* gx, std::size_t n) {
  __m256 sv = _mm256_set1_ps(scale);
  __m256 mgyv = _mm256_set1_ps(mgy);
  __m256 mgyxv = _mm256_set1_ps(mgyx);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 t = _mm256_sub_ps(_mm256_loadu_ps(gy + i), mgyv);
    t = _mm256_fnmadd_ps(_mm256_loadu_ps(xhat + i), mgyxv, t);
    __m256 gv = _mm256_loadu_ps(gx + i);
    _mm256_storeu_ps(gx + i, _mm256_fmadd_ps(sv, t, gv));
  }
  for (; i < n; ++i) {
    gx[i] += scale * (gy[i] - mgy - xhat[i] * mgyx);
  }
}

// Mirrors the scalar expression tree exactly (mul/add/div/sqrt, no FMA), so
// both lanes produce bitwise-identical parameter trajectories.
void adam_update(float* p, const float* g, float* m, float* v, std::size_t n,
                 float lr, float beta1, float beta2, float eps, float bc1, float bc2) {
  __m256 b1 = _mm256_set1_ps(beta1);
  __m256 b2 = _mm256_set1_ps(beta2);
  __m256 omb1 = _mm256_set1_ps(1.0f - beta1);
  __m256 omb2 = _mm256_set1_ps(1.0f - beta2);
  __m256 lrv = _mm256_set1_ps(lr);
  __m256 epsv = _mm256_set1_ps(eps);
  __m256 bc1v = _mm256_set1_ps(bc1);
  __m256 bc2v = _mm256_set1_ps(bc2);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 gv = _mm256_loadu_ps(g + i);
    __m256 mv = _mm256_add_ps(_mm256_mul_ps(b1, _mm256_loadu_ps(m + i)), _mm256_mul_ps(omb1, gv));
    __m256 vv = _mm256_add_ps(_mm256_mul_ps(b2, _mm256_loadu_ps(v + i)),
                              _mm256_mul_ps(omb2, _mm256_mul_ps(gv, gv)));
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    __m256 mhat = _mm256_div_ps(mv, bc1v);
    __m256 vhat = _mm256_div_ps(vv, bc2v);
    __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), epsv);
    __m256 step = _mm256_mul_ps(lrv, _mm256_div_ps(mhat, denom));
    _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), step));
  }
  if (i < n) scalar::adam_update(p + i, g + i, m + i, v + i, n - i, lr, beta1, beta2, eps, bc1, bc2);
}

}  // namespace ca::kern::avx2

#endif  // CA_KERN_HAVE_AVX2_LANE
