#pragma once

// Differentiable network layers in NCHW layout. Same recording convention as
// ops.hpp: null tape = forward only.

#include <memory>
#include <vector>

#include "contour_adapt/param.hpp"
#include "contour_adapt/rng.hpp"
#include "contour_adapt/tape.hpp"
#include "contour_adapt/tensor.hpp"

namespace ca::nn {

enum class Mode { Train, Infer };
enum class Activation { Relu, Sigmoid };

struct ConvSpec {
  int in_channels = 1, out_channels = 1;
  int kh = 3, kw = 3;
  int sh = 1, sw = 1;
  int ph = 0, pw = 0;
};

// Cross-correlation (no kernel flip), zero padding.
// x: [n][cin][h][w], w: [cout][cin][kh][kw], b: [cout].
template <class T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                  const ConvSpec& spec, TapeT<T>* tape = nullptr);

// Fixed kernel 2x2, stride 2: exact x2 upsampling, the adjoint of a stride-2
// 2x2 convolution. w: [cin][cout][2][2], b: [cout].
template <class T>
TensorT<T> transposed_conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                             TapeT<T>* tape = nullptr);

template <class T>
struct MaxPool2Result {
  TensorT<T> values;  // [n][c][h/2][w/2]
  // Flat index into x of each window's max; ties resolve to the first
  // element in row-major window order.
  std::shared_ptr<const std::vector<std::int64_t>> argmax;
};

template <class T>
MaxPool2Result<T> maxpool2(const TensorT<T>& x, TapeT<T>* tape = nullptr);

// Train mode normalizes with biased batch statistics and updates the running
// buffers (EMA, state.momentum on the old value); infer mode uses the running
// buffers only.
template <class T>
TensorT<T> batchnorm(const TensorT<T>& x, BatchNormStateT<T>& state, Mode mode, TapeT<T>* tape = nullptr);

template <class T>
TensorT<T> activation(const TensorT<T>& x, Activation kind, TapeT<T>* tape = nullptr);

// Inverted dropout: train mode zeroes with probability rate and scales
// survivors by 1/(1-rate); infer mode is the identity. rate must be in [0,1).
template <class T>
TensorT<T> dropout(const TensorT<T>& x, double rate, Rng& rng, Mode mode, TapeT<T>* tape = nullptr);

// [n][ca][h][w] ++ [n][cb][h][w] -> [n][ca+cb][h][w], a's channels first.
template <class T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b, TapeT<T>* tape = nullptr);

// Mean over all elements of -[g*ln p + (1-g)*ln(1-p)], with p clamped to
// [1e-7, 1-1e-7] before the logs. Returns a scalar.
template <class T>
TensorT<T> bce_loss(const TensorT<T>& p, const TensorT<T>& g, TapeT<T>* tape = nullptr);

inline constexpr double kBceClamp = 1e-7;

}  // namespace ca::nn
