#pragma once

#include <span>
#include <string>
#include <vector>

#include "fetalseg/nnet/layers.hpp"
#include "fetalseg/nnet/tensor.hpp"
#include "fetalseg/rng.hpp"

namespace fseg::nn {

struct UNetConfig {
  /// Number of 2x2 pooling levels.
  int depth = 3;
  int base_channels = 16;
  int in_channels = 1;
  /// 2 for the ICV stage, 8 for the tissue stage.
  int out_classes = 2;

  void validate() const;
  [[nodiscard]] int channels_at(int level) const noexcept { return base_channels << level; }
  /// Input height and width must be multiples of this.
  [[nodiscard]] int size_multiple() const noexcept { return 1 << depth; }
  bool operator==(const UNetConfig&) const = default;
};

/// A trainable buffer and its gradient accumulator.
template <typename T>
struct ParamRef {
  std::string name;
  std::span<T> value;
  std::span<T> grad;
};

/// 2D U-net. Each encoder level applies two 3x3 conv + batch norm + ReLU
/// blocks and a 2x2 max pool, doubling the channel count per level. Each
/// decoder level upsamples (nearest), applies a 2x2 conv + BN + ReLU that
/// halves the channels, concatenates the encoder features [skip, up] and
/// applies two 3x3 blocks. A 1x1 conv with bias and a softmax produce class
/// probabilities.
template <typename T>
class UNet {
 public:
  UNet(const UNetConfig& config, RandomStream init);

  [[nodiscard]] const UNetConfig& config() const noexcept { return config_; }

  /// Returns per-pixel class probabilities (n, out_classes, h, w). Training mode
  /// uses batch statistics, updates running averages and caches activations
  /// for backward(); eval mode uses the running averages.
  Tensor4<T> forward(const Tensor4<T>& x, bool training);

  /// Accumulates parameter gradients given d(loss)/d(probabilities) of the
  /// last training-mode forward pass.
  void backward(const Tensor4<T>& dprobs);

  void zero_grad();

  /// ReLU on/off states and max-pool winners of the last training-mode
  /// forward pass. Two inputs with equal patterns lie on the same linear
  /// piece of those non-smooth layers.
  [[nodiscard]] std::vector<bool> activation_pattern() const;

  /// Trainable parameters in checkpoint order.
  std::vector<ParamRef<T>> parameters();

  /// All persistent buffers in checkpoint order: per conv block the weight,
  /// bias (head only), BN gamma, beta, running mean and running variance.
  std::vector<std::span<T>> state_buffers();
  std::vector<std::span<const T>> state_buffers() const;
  [[nodiscard]] std::size_t state_size() const;

 private:
  struct Block {
    ConvParams<T> conv;
    ConvGrads<T> conv_grad;
    BatchNormParams<T> bn;
    std::vector<T> dgamma, dbeta;
    Tensor4<T> input, output;
    BatchNormCache<T> cache;

    Block(int in_c, int out_c, int k);
    Tensor4<T> forward(const Tensor4<T>& x, bool training);
    Tensor4<T> backward(const Tensor4<T>& dy);
  };

  template <typename Self, typename Fn>
  static void visit_blocks(Self& self, Fn&& fn);

  UNetConfig config_;
  std::vector<Block> enc_a_, enc_b_;
  std::vector<Block> up_, dec_a_, dec_b_;
  std::vector<Block> mid_;
  ConvParams<T> head_;
  ConvGrads<T> head_grad_;

  std::vector<std::vector<std::size_t>> pool_argmax_;
  std::vector<std::pair<int, int>> pool_in_hw_;
  Tensor4<T> head_input_;
  Tensor4<T> probs_;
  bool has_cache_ = false;
};

}  // namespace fseg::nn
