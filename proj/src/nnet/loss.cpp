#include "fetalseg/nnet/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace fseg::nn {

namespace {

template <typename T>
void check_targets(const Tensor4<T>& probs, std::span<const std::uint8_t> targets) {
  if (targets.size() != static_cast<std::size_t>(probs.n()) * probs.plane())
    throw ShapeError("loss: target size does not match n*h*w");
  for (auto t : targets)
    if (t >= probs.c()) throw InvariantError("loss: target code out of range: " + std::to_string(t));
}

}  // namespace

template <typename T>
LossResult<T> cross_entropy_loss(const Tensor4<T>& probs, std::span<const std::uint8_t> targets) {
  check_targets(probs, targets);
  const std::size_t hw = probs.plane();
  const double count = static_cast<double>(targets.size());
  // Probabilities are floored so an underflowed softmax cannot produce inf.
  const double floor = 1e-30;
  LossResult<T> r;
  r.grad = Tensor4<T>(probs.n(), probs.c(), probs.h(), probs.w());
  double sum = 0.0;
  for (int n = 0; n < probs.n(); ++n) {
    for (std::size_t i = 0; i < hw; ++i) {
      const int t = targets[static_cast<std::size_t>(n) * hw + i];
      const double p = std::max(static_cast<double>(probs.plane_ptr(n, t)[i]), floor);
      sum -= std::log(p);
      r.grad.plane_ptr(n, t)[i] = static_cast<T>(-1.0 / (count * p));
    }
  }
  r.value = sum / count;
  return r;
}

template <typename T>
LossResult<T> soft_dice_loss(const Tensor4<T>& probs, std::span<const std::uint8_t> targets, double eps) {
  check_targets(probs, targets);
  const int C = probs.c();
  if (C < 2) throw ShapeError("soft dice needs at least one foreground class");
  const std::size_t hw = probs.plane();
  std::vector<double> inter(C, 0.0), psum(C, 0.0), tsum(C, 0.0);
  for (int n = 0; n < probs.n(); ++n)
    for (int c = 1; c < C; ++c) {
      const T* p = probs.plane_ptr(n, c);
      const std::uint8_t* t = targets.data() + static_cast<std::size_t>(n) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        psum[c] += p[i];
        if (t[i] == c) {
          inter[c] += p[i];
          tsum[c] += 1.0;
        }
      }
    }

  const double k = C - 1;
  LossResult<T> r;
  r.grad = Tensor4<T>(probs.n(), C, probs.h(), probs.w());
  double dice_sum = 0.0;
  std::vector<double> g_in(C), g_out(C);
  for (int c = 1; c < C; ++c) {
    const double num = 2.0 * inter[c] + eps;
    const double den = psum[c] + tsum[c] + eps;
    dice_sum += num / den;
    // d(num/den)/dp = (2 t den - num) / den^2; the loss carries -1/k.
    g_in[c] = -(2.0 * den - num) / (den * den) / k;
    g_out[c] = num / (den * den) / k;
  }
  for (int n = 0; n < probs.n(); ++n)
    for (int c = 1; c < C; ++c) {
      T* g = r.grad.plane_ptr(n, c);
      const std::uint8_t* t = targets.data() + static_cast<std::size_t>(n) * hw;
      for (std::size_t i = 0; i < hw; ++i) g[i] = static_cast<T>(t[i] == c ? g_in[c] : g_out[c]);
    }
  r.value = 1.0 - dice_sum / k;
  return r;
}

template LossResult<float> cross_entropy_loss(const Tensor4<float>&, std::span<const std::uint8_t>);
template LossResult<double> cross_entropy_loss(const Tensor4<double>&, std::span<const std::uint8_t>);
template LossResult<float> soft_dice_loss(const Tensor4<float>&, std::span<const std::uint8_t>, double);
template LossResult<double> soft_dice_loss(const Tensor4<double>&, std::span<const std::uint8_t>, double);

}  // namespace fseg::nn
