#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "contour_adapt/tensor.hpp"

namespace ca {

// Gradient buffers keyed by tensor id, filled during a backward pass.
// Contributions accumulate additively when one tensor feeds many consumers.
template <class T>
class GradStoreT {
 public:
  void add(const TensorT<T>& t, std::span<const T> g);
  void seed(const TensorT<T>& t, T value);

  // Zero-initialized accumulation buffer for t, created on first use.
  // Backward kernels add their contribution in place.
  std::vector<T>& accum(const TensorT<T>& t);

  // Null when no gradient reached this tensor.
  const std::vector<T>* find(std::uint64_t id) const;
  const std::vector<T>* find(const TensorT<T>& t) const { return find(t.id()); }

 private:
  std::unordered_map<std::uint64_t, std::vector<T>> grads_;
};

// Single-use reverse-mode tape. Ops append one node per recorded op, in
// execution order, so the list is already topologically sorted; backward
// replays it once, in reverse, and then marks the tape consumed.
template <class T>
class TapeT {
 public:
  using BackwardFn = std::function<void(GradStoreT<T>&)>;

  void record(BackwardFn fn);
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // Gradients of loss w.r.t. every requires_grad tensor reachable on the
  // tape. loss must be a scalar produced by recorded ops; an empty or
  // already-consumed tape is a contract violation.
  GradStoreT<T> backward(const TensorT<T>& loss);

 private:
  std::vector<BackwardFn> nodes_;
  bool consumed_ = false;
};

using GradStore = GradStoreT<float>;
using Tape = TapeT<float>;

extern template class GradStoreT<float>;
extern template class GradStoreT<double>;
extern template class TapeT<float>;
extern template class TapeT<double>;

}  // namespace ca
