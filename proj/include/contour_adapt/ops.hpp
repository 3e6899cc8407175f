#pragma once

// Elementwise and reduction ops with reverse-mode recording. Passing a null
// tape runs forward-only; with a tape, a node is recorded whenever an input
// has requires_grad set, and the output inherits the flag.

#include "contour_adapt/tape.hpp"
#include "contour_adapt/tensor.hpp"

namespace ca {

template <class T> TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b, TapeT<T>* tape = nullptr);
template <class T> TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b, TapeT<T>* tape = nullptr);
template <class T> TensorT<T> sum_all(const TensorT<T>& x, TapeT<T>* tape = nullptr);
template <class T> TensorT<T> relu(const TensorT<T>& x, TapeT<T>* tape = nullptr);
template <class T> TensorT<T> sigmoid(const TensorT<T>& x, TapeT<T>* tape = nullptr);

}  // namespace ca
