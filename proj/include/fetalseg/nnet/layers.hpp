#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fetalseg/nnet/tensor.hpp"

namespace fseg::nn {

// Stateless forward/backward primitives. Backward functions *accumulate*
// parameter gradients and return the gradient with respect to the input.

/// k x k convolution, stride 1, "same" output size. Odd kernels pad
/// symmetrically; a 2x2 kernel pads one row/column at the bottom/right.
/// Weights are laid out [out][in][ky][kx]; bias may be empty.
template <typename T>
struct ConvParams {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  std::vector<T> weight;
  std::vector<T> bias;

  ConvParams() = default;
  ConvParams(int in_c, int out_c, int k, bool with_bias);
  [[nodiscard]] std::size_t fan_in() const noexcept { return static_cast<std::size_t>(in_channels) * kernel * kernel; }
};

template <typename T>
struct ConvGrads {
  std::vector<T> weight;
  std::vector<T> bias;
  ConvGrads() = default;
  explicit ConvGrads(const ConvParams<T>& p) : weight(p.weight.size(), T{}), bias(p.bias.size(), T{}) {}
};

template <typename T>
Tensor4<T> conv_forward(const Tensor4<T>& x, const ConvParams<T>& p);
template <typename T>
Tensor4<T> conv_backward(const Tensor4<T>& x, const ConvParams<T>& p, const Tensor4<T>& dy, ConvGrads<T>& grads);

template <typename T>
Tensor4<T> relu_forward(const Tensor4<T>& x);
/// Uses the forward output: the gradient passes where y > 0.
template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& y, const Tensor4<T>& dy);

template <typename T>
struct BatchNormParams {
  std::vector<T> gamma, beta;
  std::vector<T> running_mean, running_var;
  double momentum = 0.9;
  double eps = 1e-5;

  BatchNormParams() = default;
  explicit BatchNormParams(int channels);
  [[nodiscard]] int channels() const noexcept { return static_cast<int>(gamma.size()); }
};

template <typename T>
struct BatchNormCache {
  Tensor4<T> xhat;
  std::vector<T> inv_std;
};

/// Training mode normalises with the batch statistics over (n, h, w) and
/// updates the running averages; eval mode uses the running averages.
template <typename T>
Tensor4<T> batchnorm_forward(const Tensor4<T>& x, BatchNormParams<T>& p, bool training, BatchNormCache<T>* cache);
/// Backward of training-mode batch norm.
template <typename T>
Tensor4<T> batchnorm_backward(const BatchNormCache<T>& cache, const BatchNormParams<T>& p, const Tensor4<T>& dy,
                              std::vector<T>& dgamma, std::vector<T>& dbeta);

/// 2x2 max pooling, stride 2. `argmax` receives the flat input index of each output.
template <typename T>
Tensor4<T> maxpool2x2_forward(const Tensor4<T>& x, std::vector<std::size_t>* argmax);
template <typename T>
Tensor4<T> maxpool2x2_backward(const Tensor4<T>& dy, const std::vector<std::size_t>& argmax, int in_h, int in_w);

/// Nearest-neighbour 2x upsampling.
template <typename T>
Tensor4<T> upsample2x_forward(const Tensor4<T>& x);
template <typename T>
Tensor4<T> upsample2x_backward(const Tensor4<T>& dy);

/// Channel-wise concatenation [a, b].
template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b);
/// Splits a concatenated gradient back into (da, db); `a_channels` is a.c().
template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> split_channels(const Tensor4<T>& d, int a_channels);

/// Softmax over the channel axis for every pixel.
template <typename T>
Tensor4<T> softmax_forward(const Tensor4<T>& logits);
template <typename T>
Tensor4<T> softmax_backward(const Tensor4<T>& probs, const Tensor4<T>& dprobs);

}  // namespace fseg::nn
