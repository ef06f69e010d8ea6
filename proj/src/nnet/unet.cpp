#include "fetalseg/nnet/unet.hpp"

#include <algorithm>
#include <cmath>

namespace fseg::nn {

void UNetConfig::validate() const {
  if (depth < 0 || depth > 8) throw ConfigError("unet: depth must lie in [0, 8]");
  if (base_channels < 1) throw ConfigError("unet: base_channels must be >= 1");
  if (in_channels < 1) throw ConfigError("unet: in_channels must be >= 1");
  if (out_classes < 2) throw ConfigError("unet: out_classes must be >= 2");
}

template <typename T>
UNet<T>::Block::Block(int in_c, int out_c, int k)
    : conv(in_c, out_c, k, false),
      conv_grad(conv),
      bn(out_c),
      dgamma(static_cast<std::size_t>(out_c), T{}),
      dbeta(static_cast<std::size_t>(out_c), T{}) {}

template <typename T>
Tensor4<T> UNet<T>::Block::forward(const Tensor4<T>& x, bool training) {
  Tensor4<T> z = conv_forward(x, conv);
  Tensor4<T> y = relu_forward(batchnorm_forward(z, bn, training, training ? &cache : nullptr));
  if (training) {
    input = x;
    output = y;
  }
  return y;
}

template <typename T>
Tensor4<T> UNet<T>::Block::backward(const Tensor4<T>& dy) {
  Tensor4<T> d = relu_backward(output, dy);
  d = batchnorm_backward(cache, bn, d, dgamma, dbeta);
  return conv_backward(input, conv, d, conv_grad);
}

template <typename T>
template <typename Self, typename Fn>
void UNet<T>::visit_blocks(Self& self, Fn&& fn) {
  const int d = self.config_.depth;
  for (int l = 0; l < d; ++l) {
    fn(self.enc_a_[l]);
    fn(self.enc_b_[l]);
  }
  for (auto& b : self.mid_) fn(b);
  for (int l = d - 1; l >= 0; --l) {
    fn(self.up_[l]);
    fn(self.dec_a_[l]);
    fn(self.dec_b_[l]);
  }
}

template <typename T>
UNet<T>::UNet(const UNetConfig& config, RandomStream init) : config_(config) {
  config_.validate();
  const int d = config_.depth;
  int in_c = config_.in_channels;
  for (int l = 0; l < d; ++l) {
    const int c = config_.channels_at(l);
    enc_a_.emplace_back(in_c, c, 3);
    enc_b_.emplace_back(c, c, 3);
    in_c = c;
  }
  mid_.emplace_back(in_c, config_.channels_at(d), 3);
  mid_.emplace_back(config_.channels_at(d), config_.channels_at(d), 3);
  // Decoder blocks are indexed by level; construction order is irrelevant.
  up_.reserve(d);
  for (int l = 0; l < d; ++l) {
    const int c = config_.channels_at(l);
    up_.emplace_back(config_.channels_at(l + 1), c, 2);
    dec_a_.emplace_back(2 * c, c, 3);
    dec_b_.emplace_back(c, c, 3);
  }
  head_ = ConvParams<T>(config_.channels_at(0), config_.out_classes, 1, true);
  head_grad_ = ConvGrads<T>(head_);

  // He-normal initialisation in checkpoint order.
  visit_blocks(*this, [&](Block& b) {
    const double sd = std::sqrt(2.0 / static_cast<double>(b.conv.fan_in()));
    for (auto& w : b.conv.weight) w = static_cast<T>(init.normal(0.0, sd));
  });
  const double sd = std::sqrt(1.0 / static_cast<double>(head_.fan_in()));
  for (auto& w : head_.weight) w = static_cast<T>(init.normal(0.0, sd));
}

template <typename T>
Tensor4<T> UNet<T>::forward(const Tensor4<T>& x, bool training) {
  const int d = config_.depth;
  const int m = config_.size_multiple();
  if (x.c() != config_.in_channels) throw ShapeError("unet: input channel count mismatch");
  if (x.h() % m || x.w() % m) throw ShapeError("unet: input size must be divisible by 2^depth");

  std::vector<Tensor4<T>> skips;
  skips.reserve(d);
  pool_argmax_.assign(static_cast<std::size_t>(d), {});
  pool_in_hw_.assign(static_cast<std::size_t>(d), {});
  Tensor4<T> h = x;
  for (int l = 0; l < d; ++l) {
    h = enc_a_[l].forward(h, training);
    h = enc_b_[l].forward(h, training);
    pool_in_hw_[l] = {h.h(), h.w()};
    skips.push_back(h);
    h = maxpool2x2_forward(h, training ? &pool_argmax_[l] : nullptr);
  }
  for (auto& b : mid_) h = b.forward(h, training);
  for (int l = d - 1; l >= 0; --l) {
    Tensor4<T> u = up_[l].forward(upsample2x_forward(h), training);
    h = dec_a_[l].forward(concat_channels(skips[l], u), training);
    h = dec_b_[l].forward(h, training);
  }
  Tensor4<T> probs = softmax_forward(conv_forward(h, head_));
  if (training) {
    head_input_ = std::move(h);
    probs_ = probs;
    has_cache_ = true;
  } else {
    has_cache_ = false;
  }
  return probs;
}

template <typename T>
void UNet<T>::backward(const Tensor4<T>& dprobs) {
  if (!has_cache_) throw Error("unet: backward() requires a preceding training-mode forward()");
  require_same_shape(probs_, dprobs, "unet backward");
  const int d = config_.depth;
  Tensor4<T> dh = conv_backward(head_input_, head_, softmax_backward(probs_, dprobs), head_grad_);
  std::vector<Tensor4<T>> dskips(static_cast<std::size_t>(d));
  for (int l = 0; l < d; ++l) {
    dh = dec_b_[l].backward(dh);
    dh = dec_a_[l].backward(dh);
    auto [dskip, du] = split_channels(dh, config_.channels_at(l));
    dskips[l] = std::move(dskip);
    dh = upsample2x_backward(up_[l].backward(du));
  }
  for (int i = static_cast<int>(mid_.size()) - 1; i >= 0; --i) dh = mid_[i].backward(dh);
  for (int l = d - 1; l >= 0; --l) {
    Tensor4<T> dp = maxpool2x2_backward(dh, pool_argmax_[l], pool_in_hw_[l].first, pool_in_hw_[l].second);
    auto a = dp.data();
    auto b = dskips[l].data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    dh = enc_b_[l].backward(dp);
    dh = enc_a_[l].backward(dh);
  }
}

template <typename T>
std::vector<bool> UNet<T>::activation_pattern() const {
  std::vector<bool> bits;
  visit_blocks(*this, [&](const Block& b) {
    for (T v : b.output.data()) bits.push_back(v > T{});
  });
  for (const auto& am : pool_argmax_)
    for (std::size_t i : am)
      for (int k = 0; k < 32; ++k) bits.push_back((i >> k) & 1u);
  return bits;
}

template <typename T>
void UNet<T>::zero_grad() {
  for (auto& p : parameters()) std::fill(p.grad.begin(), p.grad.end(), T{});
}

template <typename T>
std::vector<ParamRef<T>> UNet<T>::parameters() {
  std::vector<ParamRef<T>> out;
  int idx = 0;
  visit_blocks(*this, [&](Block& b) {
    const std::string base = "block" + std::to_string(idx++);
    out.push_back({base + ".weight", b.conv.weight, b.conv_grad.weight});
    out.push_back({base + ".gamma", b.bn.gamma, b.dgamma});
    out.push_back({base + ".beta", b.bn.beta, b.dbeta});
  });
  out.push_back({"head.weight", head_.weight, head_grad_.weight});
  out.push_back({"head.bias", head_.bias, head_grad_.bias});
  return out;
}

template <typename T>
std::vector<std::span<T>> UNet<T>::state_buffers() {
  std::vector<std::span<T>> out;
  visit_blocks(*this, [&](Block& b) {
    out.emplace_back(b.conv.weight);
    out.emplace_back(b.bn.gamma);
    out.emplace_back(b.bn.beta);
    out.emplace_back(b.bn.running_mean);
    out.emplace_back(b.bn.running_var);
  });
  out.emplace_back(head_.weight);
  out.emplace_back(head_.bias);
  return out;
}

template <typename T>
std::vector<std::span<const T>> UNet<T>::state_buffers() const {
  std::vector<std::span<const T>> out;
  for (auto s : const_cast<UNet*>(this)->state_buffers()) out.emplace_back(s.data(), s.size());
  return out;
}

template <typename T>
std::size_t UNet<T>::state_size() const {
  std::size_t n = 0;
  for (auto s : state_buffers()) n += s.size();
  return n;
}

template class UNet<float>;
template class UNet<double>;

}  // namespace fseg::nn
