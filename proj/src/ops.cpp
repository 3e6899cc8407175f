#include "contour_adapt/ops.hpp"

#include "contour_adapt/kernels.hpp"

namespace ca {
namespace {

template <class T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

}  // namespace

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b, TapeT<T>* tape) {
  check_same_shape(a, b, "add");
  TensorT<T> y(a.shape());
  kern::add(a.data().data(), b.data().data(), y.mutable_data().data(), y.numel());
  if (tape != nullptr && (a.requires_grad() || b.requires_grad())) {
    y.set_requires_grad(true);
    tape->record([a, b, y](GradStoreT<T>& store) {
      const std::vector<T>* gy = store.find(y);
      if (gy == nullptr) return;
      if (a.requires_grad()) kern::axpy(T(1), gy->data(), store.accum(a).data(), a.numel());
      if (b.requires_grad()) kern::axpy(T(1), gy->data(), store.accum(b).data(), b.numel());
    });
  }
  return y;
}

template <class T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b, TapeT<T>* tape) {
  check_same_shape(a, b, "mul");
  TensorT<T> y(a.shape());
  kern::mul(a.data().data(), b.data().data(), y.mutable_data().data(), y.numel());
  if (tape != nullptr && (a.requires_grad() || b.requires_grad())) {
    y.set_requires_grad(true);
    tape->record([a, b, y](GradStoreT<T>& store) {
      const std::vector<T>* gy = store.find(y);
      if (gy == nullptr) return;
      if (a.requires_grad()) kern::madd(gy->data(), b.data().data(), store.accum(a).data(), a.numel());
      if (b.requires_grad()) kern::madd(gy->data(), a.data().data(), store.accum(b).data(), b.numel());
    });
  }
  return y;
}

template <class T>
TensorT<T> sum_all(const TensorT<T>& x, TapeT<T>* tape) {
  TensorT<T> y = TensorT<T>::scalar(static_cast<T>(kern::sum(x.data().data(), x.numel())));
  if (tape != nullptr && x.requires_grad()) {
    y.set_requires_grad(true);
    tape->record([x, y](GradStoreT<T>& store) {
      const std::vector<T>* gy = store.find(y);
      if (gy == nullptr) return;
      T g0 = (*gy)[0];
      std::vector<T>& gx = store.accum(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g0;
    });
  }
  return y;
}

template <class T>
TensorT<T> relu(const TensorT<T>& x, TapeT<T>* tape) {
  TensorT<T> y(x.shape());
  kern::relu_fwd(x.data().data(), y.mutable_data().data(), y.numel());
  if (tape != nullptr && x.requires_grad()) {
    y.set_requires_grad(true);
    tape->record([x, y](GradStoreT<T>& store) {
      const std::vector<T>* gy = store.find(y);
      if (gy == nullptr) return;
      kern::relu_bwd(x.data().data(), gy->data(), store.accum(x).data(), x.numel());
    });
  }
  return y;
}

template <class T>
TensorT<T> sigmoid(const TensorT<T>& x, TapeT<T>* tape) {
  TensorT<T> y(x.shape());
  kern::sigmoid_fwd(x.data().data(), y.mutable_data().data(), y.numel());
  if (tape != nullptr && x.requires_grad()) {
    y.set_requires_grad(true);
    tape->record([x, y](GradStoreT<T>& store) {
      const std::vector<T>* gy = store.find(y);
      if (gy == nullptr) return;
      kern::sigmoid_bwd(y.data().data(), gy->data(), store.accum(x).data(), x.numel());
    });
  }
  return y;
}

#define CA_INSTANTIATE_OPS(T)                                              \
  template TensorT<T> add<T>(const TensorT<T>&, const TensorT<T>&, TapeT<T>*); \
  template TensorT<T> mul<T>(const TensorT<T>&, const TensorT<T>&, TapeT<T>*); \
  template TensorT<T> sum_all<T>(const TensorT<T>&, TapeT<T>*);            \
  template TensorT<T> relu<T>(const TensorT<T>&, TapeT<T>*);               \
  template TensorT<T> sigmoid<T>(const TensorT<T>&, TapeT<T>*);

CA_INSTANTIATE_OPS(float)
CA_INSTANTIATE_OPS(double)

#undef CA_INSTANTIATE_OPS

}  // namespace ca
