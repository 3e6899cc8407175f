#pragma once

#include <string>
#include <vector>

#include "contour_adapt/tensor.hpp"

namespace ca::nn {

// A named, trainable tensor plus its gradient accumulator. Gradients
// accumulate additively across backward passes and are zeroed explicitly
// between optimizer steps.
template <class T>
struct ParameterT {
  TensorT<T> value;
  std::vector<T> grad;
  bool trainable = true;
  std::string name;

  ParameterT() = default;
  ParameterT(std::string n, TensorT<T> v)
      : value(std::move(v)), grad(value.numel(), T(0)), trainable(true), name(std::move(n)) {}

  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

using Parameter = ParameterT<float>;

// Per-channel affine + running statistics for batch normalization.
// running_var starts at 1 and stays positive for eps > 0.
template <class T>
struct BatchNormStateT {
  ParameterT<T> gamma, beta;
  std::vector<T> running_mean, running_var;
  T momentum = T(0.9);
  T eps = T(1e-5);

  static BatchNormStateT make(int channels, const std::string& name_prefix) {
    BatchNormStateT s;
    s.gamma = ParameterT<T>(name_prefix + ".gamma", TensorT<T>(Shape{channels}, T(1)));
    s.beta = ParameterT<T>(name_prefix + ".beta", TensorT<T>(Shape{channels}, T(0)));
    s.running_mean.assign(static_cast<std::size_t>(channels), T(0));
    s.running_var.assign(static_cast<std::size_t>(channels), T(1));
    return s;
  }

  int channels() const { return gamma.value.dim(0); }
};

using BatchNormState = BatchNormStateT<float>;

}  // namespace ca::nn
