#pragma once

#include <cstdint>
#include <span>

#include "fetalseg/nnet/tensor.hpp"

namespace fseg::nn {

enum class LossKind { CrossEntropy, SoftDice };

/// Loss value and its gradient with respect to the probabilities.
template <typename T>
struct LossResult {
  double value = 0.0;
  Tensor4<T> grad;
};

/// Mean over all pixels of -log p(true class). `targets` holds one class code
/// per pixel in (n, y, x) order.
template <typename T>
LossResult<T> cross_entropy_loss(const Tensor4<T>& probs, std::span<const std::uint8_t> targets);

inline constexpr double kDiceSmooth = 1.0;

/// 1 - mean over foreground classes (1..C-1) of (2 sum p t + eps) / (sum p + sum t + eps),
/// sums taken over the whole batch.
template <typename T>
LossResult<T> soft_dice_loss(const Tensor4<T>& probs, std::span<const std::uint8_t> targets,
                             double eps = kDiceSmooth);

template <typename T>
LossResult<T> compute_loss(LossKind kind, const Tensor4<T>& probs, std::span<const std::uint8_t> targets) {
  return kind == LossKind::CrossEntropy ? cross_entropy_loss(probs, targets) : soft_dice_loss(probs, targets);
}

}  // namespace fseg::nn
