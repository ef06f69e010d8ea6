#pragma once

#include <cstdint>
#include <vector>

#include "fetalseg/nnet/unet.hpp"

namespace fseg::nn {

struct NadamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with Nesterov momentum and bias correction:
///
///   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2
///   m_hat = b1 m / (1 - b1^(t+1)) + (1 - b1) g / (1 - b1^t)
///   w -= lr * m_hat / (sqrt(v / (1 - b2^t)) + eps)
template <typename T>
class Nadam {
 public:
  Nadam(NadamConfig config, const std::vector<ParamRef<T>>& params);

  /// Applies one update. Throws DivergenceError (leaving parameters untouched)
  /// if any gradient is non-finite.
  void step(std::vector<ParamRef<T>>& params);

  [[nodiscard]] std::int64_t step_count() const noexcept { return step_; }
  [[nodiscard]] const NadamConfig& config() const noexcept { return config_; }

 private:
  NadamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t step_ = 0;
};

}  // namespace fseg::nn
