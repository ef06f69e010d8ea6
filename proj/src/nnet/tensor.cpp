#include "fetalseg/nnet/tensor.hpp"

#include <algorithm>

namespace fseg::nn {

template <typename T>
Tensor4<T>::Tensor4(int n, int c, int h, int w, T fill) : n_(n), c_(c), h_(h), w_(w) {
  if (n <= 0 || c <= 0 || h <= 0 || w <= 0) throw ShapeError("tensor dimensions must be positive");
  data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
}

template <typename T>
void Tensor4<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template class Tensor4<float>;
template class Tensor4<double>;

}  // namespace fseg::nn
