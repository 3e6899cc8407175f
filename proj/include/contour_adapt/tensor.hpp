#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "contour_adapt/errors.hpp"

namespace ca {

// Dimensions, outermost first. All dims >= 1.
using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool shape_eq(const Shape& a, const Shape& b);

// Value-semantic n-d tensor. Storage is shared between copies and treated as
// immutable once the tensor has escaped its constructing op; mutable access
// is reserved for construction and for optimizer updates on parameters.
// Every storage gets a process-unique id, which is how the tape keys
// gradients.
template <class T>
class TensorT {
 public:
  TensorT() = default;
  explicit TensorT(Shape shape, T fill = T(0));
  TensorT(Shape shape, std::vector<T> values);

  static TensorT scalar(T v) { return TensorT(Shape{1}, std::vector<T>{v}); }

  const Shape& shape() const { return impl_->shape; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  std::size_t numel() const { return impl_->values.size(); }
  bool defined() const { return impl_ != nullptr; }

  std::uint64_t id() const { return impl_->id; }
  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) const { impl_->requires_grad = v; }

  std::span<const T> data() const { return impl_->values; }
  // Only for construction and optimizer updates; never after recording.
  std::span<T> mutable_data() { return impl_->values; }

  T item() const;
  bool same_shape(const TensorT& o) const { return shape_eq(shape(), o.shape()); }
  bool all_finite() const;

  // Deep copy with a fresh id.
  TensorT clone() const { return TensorT(impl_->shape, impl_->values); }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> values;
    bool requires_grad = false;
    std::uint64_t id = 0;
  };
  std::shared_ptr<Impl> impl_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

extern template class TensorT<float>;
extern template class TensorT<double>;

}  // namespace ca
