#include "contour_adapt/layers.hpp"

#include <cmath>
#include <cstring>

#include "contour_adapt/kernels.hpp"

namespace ca::nn {
namespace {

template <class T>
void expect_4d(const TensorT<T>& t, const char* op) {
  if (t.ndim() != 4) {
    throw ShapeError(std::string(op) + ": expected a 4-d NCHW tensor, got " +
                     shape_str(t.shape()));
  }
}

}  // namespace

template <class T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                  const ConvSpec& spec, TapeT<T>* tape) {
  expect_4d(x, "conv2d input");
  expect_4d(w, "conv2d weight");
  if (x.dim(1) != spec.in_channels) {
    throw ShapeError("conv2d: input channel dim is " + std::to_string(x.dim(1)) +
                     ", spec expects " + std::to_string(spec.in_channels));
  }
  if (w.dim(0) != spec.out_channels || w.dim(1) != spec.in_channels ||
      w.dim(2) != spec.kh || w.dim(3) != spec.kw) {
    throw ShapeError("conv2d: weight shape " + shape_str(w.shape()) + " does not match spec [" +
                     std::to_string(spec.out_channels) + "x" + std::to_string(spec.in_channels) +
                     "x" + std::to_string(spec.kh) + "x" + std::to_string(spec.kw) + "]");
  }
  if (b.ndim() != 1 || b.dim(0) != spec.out_channels) {
    throw ShapeError("conv2d: bias dim is " + shape_str(b.shape()) + ", expected [" +
                     std::to_string(spec.out_channels) + "]");
  }
  kern::ConvGeom g = kern::ConvGeom::make(x.dim(0), spec.in_channels, x.dim(2), x.dim(3),
                                          spec.out_channels, spec.kh, spec.kw,
                                          spec.sh, spec.sw, spec.ph, spec.pw);
  TensorT<T> y(Shape{g.n, g.cout, g.oh, g.ow});
  kern::conv2d_fwd(g, x.data().data(), w.data().data(), b.data().data(),
                   y.mutable_data().data());
  if (tape != nullptr && (x.requires_grad() || w.requires_grad() || b.requires_grad())) {
    y.set_requires_grad(true);
    tape->record([x, w, b, y, g](GradStoreT<T>& store) {
      const std::vector<T>* gy = store.find(y);
      if (gy == nullptr) return;
      if (x.requires_grad()) {
        kern::conv2d_bwd_x(g, w.data().data(), gy->data(), store.accum(x).data());
      }
      if (w.requires_grad() || b.requires_grad()) {
        T* gw = w.requires_grad() ? store.accum(w).data() : nullptr;
        T* gb = b.requires_grad() ? store.accum(b).data() : nullptr;
        if (gw != nullptr) {
          kern::conv2d_bwd_w(g, x.data().data(), gy->data(), gw, gb);
        } else if (gb != nullptr) {
          kern::bias_grad(g.n, g.cout, static_cast<std::size_t>(g.oh) * g.ow, gy->data(), gb);
        }
      }
    });
  }
  return y;
}

template <class T>
TensorT<T> transposed_conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                             TapeT<T>* tape) {
  expect_4d(x, "transposed_conv2d input");
  expect_4d(w, "transposed_conv2d weight");
  const int cin = x.dim(1);
  if (w.dim(0) != cin || w.dim(2) != 2 || w.dim(3) != 2) {
    throw ShapeError("transposed_conv2d: weight shape " + shape_str(w.shape()) +
                     " must be [" + std::to_string(cin) + "x<cout>x2x2]");
  }
  const int cout = w.dim(1);
  if (b.ndim() != 1 || b.dim(0) != cout) {
    throw ShapeError("transposed_conv2d: bias dim is " + shape_str(b.shape()) + ", expected [" +
                     std::to_string(cout) + "]");
  }
  const int n = x.dim(0), h = x.dim(2), wd = x.dim(3);
  TensorT<T> y(Shape{n, cout, 2 * h, 2 * wd});
  kern::tconv2_fwd(n, cin, cout, h, wd, x.data().data(), w.data().data(), b.data().data(),
                   y.mutable_data().data());
  if (tape != nullptr && (x.requires_grad() || w.requires_grad() || b.requires_grad())) {
    y.set_requires_grad(true);
    tape->record([x, w, b, y, n, cin, cout, h, wd](GradStoreT<T>& store) {
      const std::vector<T>* gy = store.find(y);
      if (gy == nullptr) return;
      if (x.requires_grad()) {
        kern::tconv2_bwd_x(n, cin, cout, h, wd, w.data().data(), gy->data(),
                           store.accum(x).data());
      }
      if (w.requires_grad()) {
        kern::tconv2_bwd_w(n, cin, cout, h, wd, x.data().data(), gy->data(),
                           store.accum(w).data());
      }
      if (b.requires_grad()) {
        kern::bias_grad(n, cout, static_cast<std::size_t>(h) * wd * 4, gy->data(),
                        store.accum(b).data());
      }
    });
  }
  return y;
}

template <class T>
MaxPool2Result<T> maxpool2(const TensorT<T>& x, TapeT<T>* tape) {
  expect_4d(x, "maxpool2");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("maxpool2: H and W must be even, got " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  TensorT<T> y(Shape{n, c, h / 2, w / 2});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(y.numel());
  kern::maxpool2_fwd(n, c, h, w, x.data().data(), y.mutable_data().data(), argmax->data());
  if (tape != nullptr && x.requires_grad()) {
    y.set_requires_grad(true);
    std::shared_ptr<const std::vector<std::int64_t>> am = argmax;
    tape->record([x, y, am](GradStoreT<T>& store) {
      const std::vector<T>* gy = store.find(y);
      if (gy == nullptr) return;
      kern::maxpool2_bwd(y.numel(), gy->data(), am->data(), store.accum(x).data());
    });
  }
  return MaxPool2Result<T>{std::move(y), std::move(argmax)};
}

template <class T>
TensorT<T> batchnorm(const TensorT<T>& x, BatchNormStateT<T>& state, Mode mode, TapeT<T>* tape) {
  expect_4d(x, "batchnorm");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (c != state.channels()) {
    throw ShapeError("batchnorm: channel dim is " + std::to_string(c) + ", state has " +
                     std::to_string(state.channels()));
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t per_channel = static_cast<std::size_t>(n) * plane;
  const TensorT<T>& gamma = state.gamma.value;
  const TensorT<T>& beta = state.beta.value;
  TensorT<T> y(x.shape());

  auto slice = [&](const T* base, int bn, int ch) {
    return base + (static_cast<std::size_t>(bn) * c + ch) * plane;
  };

  if (mode == Mode::Infer) {
    std::vector<T> a(static_cast<std::size_t>(c)), sh(static_cast<std::size_t>(c));
    for (int ch = 0; ch < c; ++ch) {
      T istd = T(1) / std::sqrt(state.running_var[ch] + state.eps);
      a[ch] = gamma.data()[ch] * istd;
      sh[ch] = beta.data()[ch] - state.running_mean[ch] * a[ch];
    }
    for (int bn = 0; bn < n; ++bn) {
      for (int ch = 0; ch < c; ++ch) {
        kern::scale_shift(slice(x.data().data(), bn, ch), a[ch], sh[ch],
                          y.mutable_data().data() + (static_cast<std::size_t>(bn) * c + ch) * plane,
                          plane);
      }
    }
    if (tape != nullptr && (x.requires_grad() || gamma.requires_grad() || beta.requires_grad())) {
      y.set_requires_grad(true);
      std::vector<T> rm = state.running_mean;
      std::vector<T> scale_a = a;
      tape->record([x, y, gamma, beta, rm, scale_a, n, c, plane, slice](GradStoreT<T>& store) {
        const std::vector<T>* gy = store.find(y);
        if (gy == nullptr) return;
        for (int ch = 0; ch < c; ++ch) {
          double sgy = 0.0, sgyx = 0.0;
          for (int bn = 0; bn < n; ++bn) {
            const T* gyp = gy->data() + (static_cast<std::size_t>(bn) * c + ch) * plane;
            sgy += kern::sum(gyp, plane);
            if (gamma.requires_grad()) {
              // d/dgamma via normalized input (x - rm)*istd = (a/gamma)*(x-rm)
              const T* xp = slice(x.data().data(), bn, ch);
              for (std::size_t i = 0; i < plane; ++i) {
                sgyx += static_cast<double>(gyp[i]) *
                        (static_cast<double>(xp[i]) - static_cast<double>(rm[ch])) *
                        (static_cast<double>(scale_a[ch]) / static_cast<double>(gamma.data()[ch]));
              }
            }
          }
          if (beta.requires_grad()) store.accum(beta)[ch] += static_cast<T>(sgy);
          if (gamma.requires_grad()) store.accum(gamma)[ch] += static_cast<T>(sgyx);
          if (x.requires_grad()) {
            std::vector<T>& gx = store.accum(x);
            for (int bn = 0; bn < n; ++bn) {
              kern::axpy(scale_a[ch], gy->data() + (static_cast<std::size_t>(bn) * c + ch) * plane,
                         gx.data() + (static_cast<std::size_t>(bn) * c + ch) * plane, plane);
            }
          }
        }
      });
    }
    return y;
  }

  // Train mode: biased batch statistics per channel.
  if (per_channel < 2) {
    throw ContractError("batchnorm: train mode needs N*H*W >= 2 per channel");
  }
  std::vector<T> mean(static_cast<std::size_t>(c)), istd(static_cast<std::size_t>(c));
  TensorT<T> xhat(x.shape());
  for (int ch = 0; ch < c; ++ch) {
    double s = 0.0, sq = 0.0;
    for (int bn = 0; bn < n; ++bn) {
      const T* xp = slice(x.data().data(), bn, ch);
      s += kern::sum(xp, plane);
      sq += kern::dot(xp, xp, plane);
    }
    double m = s / static_cast<double>(per_channel);
    double var = sq / static_cast<double>(per_channel) - m * m;
    if (var < 0.0) var = 0.0;  // fp guard for degenerate channels
    mean[ch] = static_cast<T>(m);
    istd[ch] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(state.eps)));
    state.running_mean[ch] =
        state.momentum * state.running_mean[ch] + (T(1) - state.momentum) * static_cast<T>(m);
    state.running_var[ch] =
        state.momentum * state.running_var[ch] + (T(1) - state.momentum) * static_cast<T>(var);
    for (int bn = 0; bn < n; ++bn) {
      kern::scale_shift(slice(x.data().data(), bn, ch), istd[ch], -mean[ch] * istd[ch],
                        xhat.mutable_data().data() + (static_cast<std::size_t>(bn) * c + ch) * plane,
                        plane);
    }
    for (int bn = 0; bn < n; ++bn) {
      kern::scale_shift(xhat.data().data() + (static_cast<std::size_t>(bn) * c + ch) * plane,
                        gamma.data()[ch], beta.data()[ch],
                        y.mutable_data().data() + (static_cast<std::size_t>(bn) * c + ch) * plane,
                        plane);
    }
  }

  if (tape != nullptr && (x.requires_grad() || gamma.requires_grad() || beta.requires_grad())) {
    y.set_requires_grad(true);
    tape->record([x, y, xhat, gamma, beta, istd, n, c, plane, per_channel](GradStoreT<T>& store) {
      const std::vector<T>* gy = store.find(y);
      if (gy == nullptr) return;
      for (int ch = 0; ch < c; ++ch) {
        double sgy = 0.0, sgyx = 0.0;
        for (int bn = 0; bn < n; ++bn) {
          std::size_t off = (static_cast<std::size_t>(bn) * c + ch) * plane;
          sgy += kern::sum(gy->data() + off, plane);
          sgyx += kern::dot(gy->data() + off, xhat.data().data() + off, plane);
        }
        if (beta.requires_grad()) store.accum(beta)[ch] += static_cast<T>(sgy);
        if (gamma.requires_grad()) store.accum(gamma)[ch] += static_cast<T>(sgyx);
        if (x.requires_grad()) {
          T scale = gamma.data()[ch] * istd[ch];
          T mgy = static_cast<T>(sgy / static_cast<double>(per_channel));
          T mgyx = static_cast<T>(sgyx / static_cast<double>(per_channel));
          std::vector<T>& gx = store.accum(x);
          for (int bn = 0; bn < n; ++bn) {
            std::size_t off = (static_cast<std::size_t>(bn) * c + ch) * plane;
            kern::bn_bwd_x(xhat.data().data() + off, gy->data() + off, scale, mgy, mgyx,
                           gx.data() + off, plane);
          }
        }
      }
    });
  }
  return y;
}

template <class T>
TensorT<T> activation(const TensorT<T>& x, Activation kind, TapeT<T>* tape) {
  TensorT<T> y(x.shape());
  if (kind == Activation::Relu) {
    kern::relu_fwd(x.data().data(), y.mutable_data().data(), y.numel());
  } else {
    kern::sigmoid_fwd(x.data().data(), y.mutable_data().data(), y.numel());
  }
  if (tape != nullptr && x.requires_grad()) {
    y.set_requires_grad(true);
    tape->record([x, y, kind](GradStoreT<T>& store) {
      const std::vector<T>* gy = store.find(y);
      if (gy == nullptr) return;
      if (kind == Activation::Relu) {
        kern::relu_bwd(x.data().data(), gy->data(), store.accum(x).data(), x.numel());
      } else {
        kern::sigmoid_bwd(y.data().data(), gy->data(), store.accum(x).data(), x.numel());
      }
    });
  }
  return y;
}

template <class T>
TensorT<T> dropout(const TensorT<T>& x, double rate, Rng& rng, Mode mode, TapeT<T>* tape) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ContractError("dropout: rate must be in [0,1), got " + std::to_string(rate));
  }
  if (mode == Mode::Infer || rate == 0.0) return x;
  TensorT<T> mask(x.shape());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::span<T> mv = mask.mutable_data();
  for (std::size_t i = 0; i < mv.size(); ++i) {
    mv[i] = rng.uniform() < rate ? T(0) : keep_scale;
  }
  TensorT<T> y(x.shape());
  kern::mul(x.data().data(), mask.data().data(), y.mutable_data().data(), y.numel());
  if (tape != nullptr && x.requires_grad()) {
    y.set_requires_grad(true);
    tape->record([x, y, mask](GradStoreT<T>& store) {
      const std::vector<T>* gy = store.find(y);
      if (gy == nullptr) return;
      kern::madd(gy->data(), mask.data().data(), store.accum(x).data(), x.numel());
    });
  }
  return y;
}

template <class T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b, TapeT<T>* tape) {
  expect_4d(a, "concat_channels");
  expect_4d(b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: batch/spatial mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const int n = a.dim(0), cab = a.dim(1) + b.dim(1), h = a.dim(2), w = a.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t a_block = static_cast<std::size_t>(a.dim(1)) * plane;
  const std::size_t b_block = static_cast<std::size_t>(b.dim(1)) * plane;
  TensorT<T> y(Shape{n, cab, h, w});
  T* yp = y.mutable_data().data();
  for (int bn = 0; bn < n; ++bn) {
    std::memcpy(yp + static_cast<std::size_t>(bn) * (a_block + b_block),
                a.data().data() + static_cast<std::size_t>(bn) * a_block, a_block * sizeof(T));
    std::memcpy(yp + static_cast<std::size_t>(bn) * (a_block + b_block) + a_block,
                b.data().data() + static_cast<std::size_t>(bn) * b_block, b_block * sizeof(T));
  }
  if (tape != nullptr && (a.requires_grad() || b.requires_grad())) {
    y.set_requires_grad(true);
    tape->record([a, b, y, n, a_block, b_block](GradStoreT<T>& store) {
      const std::vector<T>* gy = store.find(y);
      if (gy == nullptr) return;
      for (int bn = 0; bn < n; ++bn) {
        const T* gyp = gy->data() + static_cast<std::size_t>(bn) * (a_block + b_block);
        if (a.requires_grad()) {
          kern::axpy(T(1), gyp, store.accum(a).data() + static_cast<std::size_t>(bn) * a_block,
                     a_block);
        }
        if (b.requires_grad()) {
          kern::axpy(T(1), gyp + a_block,
                     store.accum(b).data() + static_cast<std::size_t>(bn) * b_block, b_block);
        }
      }
    });
  }
  return y;
}

template <class T>
TensorT<T> bce_loss(const TensorT<T>& p, const TensorT<T>& g, TapeT<T>* tape) {
  if (!p.same_shape(g)) {
    throw ShapeError("bce_loss: shape mismatch " + shape_str(p.shape()) + " vs " +
                     shape_str(g.shape()));
  }
  const T clamp = static_cast<T>(kBceClamp);
  TensorT<T> y = TensorT<T>::scalar(
      static_cast<T>(kern::bce_fwd(p.data().data(), g.data().data(), p.numel(), clamp)));
  if (tape != nullptr && p.requires_grad()) {
    y.set_requires_grad(true);
    tape->record([p, g, y, clamp](GradStoreT<T>& store) {
      const std::vector<T>* gy = store.find(y);
      if (gy == nullptr) return;
      T gy_over_n = (*gy)[0] / static_cast<T>(p.numel());
      kern::bce_bwd(p.data().data(), g.data().data(), gy_over_n, store.accum(p).data(),
                    p.numel(), clamp);
    });
  }
  return y;
}

#define CA_INSTANTIATE_LAYERS(T)                                                            \
  template TensorT<T> conv2d<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,    \
                                const ConvSpec&, TapeT<T>*);                                \
  template TensorT<T> transposed_conv2d<T>(const TensorT<T>&, const TensorT<T>&,           \
                                           const TensorT<T>&, TapeT<T>*);                   \
  template MaxPool2Result<T> maxpool2<T>(const TensorT<T>&, TapeT<T>*);                     \
  template TensorT<T> batchnorm<T>(const TensorT<T>&, BatchNormStateT<T>&, Mode, TapeT<T>*);\
  template TensorT<T> activation<T>(const TensorT<T>&, Activation, TapeT<T>*);              \
  template TensorT<T> dropout<T>(const TensorT<T>&, double, Rng&, Mode, TapeT<T>*);         \
  template TensorT<T> concat_channels<T>(const TensorT<T>&, const TensorT<T>&, TapeT<T>*);  \
  template TensorT<T> bce_loss<T>(const TensorT<T>&, const TensorT<T>&, TapeT<T>*);

CA_INSTANTIATE_LAYERS(float)
CA_INSTANTIATE_LAYERS(double)

#undef CA_INSTANTIATE_LAYERS

}  // namespace ca::nn
