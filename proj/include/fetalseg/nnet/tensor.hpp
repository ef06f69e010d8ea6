#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fetalseg/errors.hpp"

namespace fseg::nn {

/// Dense NCHW tensor.
template <typename T>
class Tensor4 {
 public:
  Tensor4() = default;
  Tensor4(int n, int c, int h, int w, T fill = T{});

  [[nodiscard]] int n() const noexcept { return n_; }
  [[nodiscard]] int c() const noexcept { return c_; }
  [[nodiscard]] int h() const noexcept { return h_; }
  [[nodiscard]] int w() const noexcept { return w_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] std::size_t plane() const noexcept { return static_cast<std::size_t>(h_) * w_; }

  [[nodiscard]] std::size_t index(int n, int c, int y, int x) const noexcept {
    return ((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x;
  }
  T& at(int n, int c, int y, int x) noexcept { return data_[index(n, c, y, x)]; }
  const T& at(int n, int c, int y, int x) const noexcept { return data_[index(n, c, y, x)]; }

  /// Pointer to the (n, c) plane.
  T* plane_ptr(int n, int c) noexcept { return data_.data() + (static_cast<std::size_t>(n) * c_ + c) * plane(); }
  const T* plane_ptr(int n, int c) const noexcept {
    return data_.data() + (static_cast<std::size_t>(n) * c_ + c) * plane();
  }
  /// Pointer to the C x H x W block of sample n.
  T* sample_ptr(int n) noexcept { return plane_ptr(n, 0); }
  const T* sample_ptr(int n) const noexcept { return plane_ptr(n, 0); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  [[nodiscard]] bool same_shape(const Tensor4& o) const noexcept {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }
  void fill(T v);

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<T> data_;
};

template <typename T>
void require_same_shape(const Tensor4<T>& a, const Tensor4<T>& b, const char* what) {
  if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": tensor shapes differ");
}

}  // namespace fseg::nn
