#include "contour_adapt/tape.hpp"

namespace ca {

template <class T>
void GradStoreT<T>::add(const TensorT<T>& t, std::span<const T> g) {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) {
    grads_.emplace(t.id(), std::vector<T>(g.begin(), g.end()));
    return;
  }
  std::vector<T>& acc = it->second;
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

template <class T>
void GradStoreT<T>::seed(const TensorT<T>& t, T value) {
  grads_[t.id()] = std::vector<T>(t.numel(), value);
}

template <class T>
std::vector<T>& GradStoreT<T>::accum(const TensorT<T>& t) {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) {
    it = grads_.emplace(t.id(), std::vector<T>(t.numel(), T(0))).first;
  }
  return it->second;
}

template <class T>
const std::vector<T>* GradStoreT<T>::find(std::uint64_t id) const {
  auto it = grads_.find(id);
  return it == grads_.end() ? nullptr : &it->second;
}

template <class T>
void TapeT<T>::record(BackwardFn fn) {
  if (consumed_) throw ContractError("tape: recording onto a consumed tape");
  nodes_.push_back(std::move(fn));
}

template <class T>
GradStoreT<T> TapeT<T>::backward(const TensorT<T>& loss) {
  if (consumed_) throw ContractError("tape: backward on a consumed tape");
  if (nodes_.empty()) throw ContractError("tape: backward on an empty tape");
  if (loss.numel() != 1) {
    throw ContractError("tape: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  consumed_ = true;
  GradStoreT<T> store;
  store.seed(loss, T(1));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)(store);
  return store;
}

template class GradStoreT<float>;
template class GradStoreT<double>;
template class TapeT<float>;
template class TapeT<double>;

}  // namespace ca
