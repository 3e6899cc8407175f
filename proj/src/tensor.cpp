#include "contour_adapt/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace ca {
namespace {

std::atomic<std::uint64_t> g_next_id{1};

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 1) throw ShapeError("shape dimension must be >= 1, got " + std::to_string(d));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

bool shape_eq(const Shape& a, const Shape& b) { return a == b; }

template <class T>
TensorT<T>::TensorT(Shape shape, T fill) {
  std::size_t n = shape_numel(shape);
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->values.assign(n, fill);
  impl_->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
}

template <class T>
TensorT<T>::TensorT(Shape shape, std::vector<T> values) {
  std::size_t n = shape_numel(shape);
  if (n != values.size()) {
    throw ShapeError("element count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  }
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
}

template <class T>
T TensorT<T>::item() const {
  if (numel() != 1) {
    throw ContractError("item() requires a scalar tensor, got shape " + shape_str(shape()));
  }
  return impl_->values[0];
}

template <class T>
bool TensorT<T>::all_finite() const {
  for (T v : impl_->values) {
    if (!std::isfinite(static_cast<double>(v))) return false;
  }
  return true;
}

template class TensorT<float>;
template class TensorT<double>;

}  // namespace ca
