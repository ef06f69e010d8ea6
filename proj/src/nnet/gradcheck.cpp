#include "fetalseg/nnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>

#include "fetalseg/nnet/layers.hpp"

namespace fseg::nn {

using T4 = Tensor4<double>;

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

class Checker {
 public:
  Checker(const GradCheckOptions& options, GradCheckReport& report) : opt_(options), report_(report) {}

  /// Compares `analytic` with central differences of `f` over `values`.
  /// With `same_piece`, coordinates whose perturbed evaluations leave the
  /// current linear piece of a non-smooth layer are skipped.
  void check(const std::string& name, std::span<double> values, std::span<const double> analytic,
             const std::function<double()>& f, RandomStream& rng,
             const std::function<bool()>& same_piece = nullptr) {
    if (values.size() != analytic.size()) throw ShapeError("gradcheck: gradient size mismatch for " + name);
    std::vector<std::size_t> idx(values.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (opt_.max_per_buffer && idx.size() > opt_.max_per_buffer) {
      for (std::size_t i = 0; i < opt_.max_per_buffer; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
      idx.resize(opt_.max_per_buffer);
    }
    GradCheckEntry entry{name, idx.size(), 0, 0.0};
    for (std::size_t i : idx) {
      const double saved = values[i];
      values[i] = saved + opt_.step;
      const double up = f();
      bool smooth = !same_piece || same_piece();
      values[i] = saved - opt_.step;
      const double down = f();
      smooth = smooth && (!same_piece || same_piece());
      values[i] = saved;
      if (!smooth) {
        ++entry.skipped;
        continue;
      }
      const double numeric = (up - down) / (2.0 * opt_.step);
      entry.max_rel_error = std::max(entry.max_rel_error, relative_error(analytic[i], numeric, opt_.floor));
    }
    report_.entries.push_back(entry);
  }

 private:
  GradCheckOptions opt_;
  GradCheckReport& report_;
};

T4 random_tensor(int n, int c, int h, int w, RandomStream& rng, double lo = -1.0, double hi = 1.0) {
  T4 t(n, c, h, w);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Values bounded away from zero, for kinked functions.
T4 random_signed_tensor(int n, int c, int h, int w, RandomStream& rng) {
  T4 t(n, c, h, w);
  for (auto& v : t.data()) v = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.1, 1.0);
  return t;
}

double dot(const T4& a, const T4& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

void check_conv(Checker& ck, RandomStream& rng, int k, bool bias) {
  const std::string tag = "conv" + std::to_string(k) + "x" + std::to_string(k);
  T4 x = random_tensor(2, 3, 6, 6, rng);
  ConvParams<double> p(3, 4, k, bias);
  for (auto& v : p.weight) v = rng.uniform(-0.5, 0.5);
  for (auto& v : p.bias) v = rng.uniform(-0.5, 0.5);
  const T4 r = random_tensor(2, 4, 6, 6, rng);
  ConvGrads<double> g(p);
  const T4 dx = conv_backward(x, p, r, g);
  auto f = [&] { return dot(conv_forward(x, p), r); };
  ck.check(tag + ".input", x.data(), dx.data(), f, rng);
  ck.check(tag + ".weight", p.weight, g.weight, f, rng);
  if (bias) ck.check(tag + ".bias", p.bias, g.bias, f, rng);
}

}  // namespace

GradCheckReport gradcheck_layers(const GradCheckOptions& options) {
  GradCheckReport report;
  Checker ck(options, report);
  RandomStream rng = RandomStream(options.seed).derive("gradcheck-layers");

  check_conv(ck, rng, 3, false);
  check_conv(ck, rng, 2, false);
  check_conv(ck, rng, 1, true);

  {
    T4 x = random_signed_tensor(2, 3, 4, 4, rng);
    const T4 r = random_tensor(2, 3, 4, 4, rng);
    const T4 dx = relu_backward(relu_forward(x), r);
    ck.check("relu.input", x.data(), dx.data(), [&] { return dot(relu_forward(x), r); }, rng);
  }
  {
    T4 x = random_tensor(3, 2, 4, 4, rng);
    BatchNormParams<double> p(2);
    for (auto& v : p.gamma) v = rng.uniform(0.5, 1.5);
    for (auto& v : p.beta) v = rng.uniform(-0.5, 0.5);
    const T4 r = random_tensor(3, 2, 4, 4, rng);
    BatchNormCache<double> cache;
    batchnorm_forward(x, p, true, &cache);
    std::vector<double> dgamma(2, 0.0), dbeta(2, 0.0);
    const T4 dx = batchnorm_backward(cache, p, r, dgamma, dbeta);
    auto f = [&] { return dot(batchnorm_forward(x, p, true, static_cast<BatchNormCache<double>*>(nullptr)), r); };
    ck.check("batchnorm.input", x.data(), dx.data(), f, rng);
    ck.check("batchnorm.gamma", p.gamma, dgamma, f, rng);
    ck.check("batchnorm.beta", p.beta, dbeta, f, rng);
  }
  {
    T4 x = random_tensor(2, 2, 6, 6, rng);
    const T4 r = random_tensor(2, 2, 3, 3, rng);
    std::vector<std::size_t> argmax;
    maxpool2x2_forward(x, &argmax);
    const T4 dx = maxpool2x2_backward(r, argmax, 6, 6);
    ck.check("maxpool.input", x.data(), dx.data(), [&] { return dot(maxpool2x2_forward(x, nullptr), r); }, rng);
  }
  {
    T4 x = random_tensor(2, 2, 3, 3, rng);
    const T4 r = random_tensor(2, 2, 6, 6, rng);
    const T4 dx = upsample2x_backward(r);
    ck.check("upsample.input", x.data(), dx.data(), [&] { return dot(upsample2x_forward(x), r); }, rng);
  }
  {
    T4 a = random_tensor(2, 2, 3, 3, rng);
    T4 b = random_tensor(2, 3, 3, 3, rng);
    const T4 r = random_tensor(2, 5, 3, 3, rng);
    auto [da, db] = split_channels(r, 2);
    auto f = [&] { return dot(concat_channels(a, b), r); };
    ck.check("concat.first", a.data(), da.data(), f, rng);
    ck.check("concat.second", b.data(), db.data(), f, rng);
  }
  {
    T4 x = random_tensor(2, 4, 3, 3, rng, -2.0, 2.0);
    const T4 r = random_tensor(2, 4, 3, 3, rng);
    const T4 dx = softmax_backward(softmax_forward(x), r);
    ck.check("softmax.input", x.data(), dx.data(), [&] { return dot(softmax_forward(x), r); }, rng);
  }
  {
    T4 probs = softmax_forward(random_tensor(2, 3, 4, 4, rng, -2.0, 2.0));
    std::vector<std::uint8_t> targets(2 * 16);
    for (auto& t : targets) t = static_cast<std::uint8_t>(rng.below(3));
    const auto ce = cross_entropy_loss(probs, std::span<const std::uint8_t>(targets));
    ck.check("cross_entropy.probs", probs.data(), ce.grad.data(),
             [&] { return cross_entropy_loss(probs, std::span<const std::uint8_t>(targets)).value; }, rng);
    const auto sd = soft_dice_loss(probs, std::span<const std::uint8_t>(targets));
    ck.check("soft_dice.probs", probs.data(), sd.grad.data(),
             [&] { return soft_dice_loss(probs, std::span<const std::uint8_t>(targets)).value; }, rng);
  }
  return report;
}

GradCheckReport gradcheck_unet(const UNetConfig& config, int batch, int size, LossKind loss,
                               const GradCheckOptions& options) {
  config.validate();
  if (batch < 1 || size < config.size_multiple() || size % config.size_multiple())
    throw ConfigError("gradcheck: size must be a positive multiple of 2^depth");
  const RandomStream root = RandomStream(options.seed).derive("gradcheck-unet");
  UNet<double> model(config, root.derive("init"));
  RandomStream rng = root.derive("data");
  const T4 x = random_tensor(batch, config.in_channels, size, size, rng);
  std::vector<std::uint8_t> targets(static_cast<std::size_t>(batch) * size * size);
  for (auto& t : targets) t = static_cast<std::uint8_t>(rng.below(static_cast<std::uint64_t>(config.out_classes)));
  const std::span<const std::uint8_t> tspan(targets);

  model.zero_grad();
  const auto result = compute_loss(loss, model.forward(x, true), tspan);
  model.backward(result.grad);

  GradCheckReport report;
  Checker ck(options, report);
  const std::vector<bool> pattern = model.activation_pattern();
  auto f = [&] { return compute_loss(loss, model.forward(x, true), tspan).value; };
  auto same_piece = [&] { return model.activation_pattern() == pattern; };
  for (auto& p : model.parameters()) {
    const std::vector<double> analytic(p.grad.begin(), p.grad.end());
    ck.check(p.name, p.value, analytic, f, rng, same_piece);
  }
  return report;
}

}  // namespace fseg::nn
