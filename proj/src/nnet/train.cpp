#include "fetalseg/nnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "fetalseg/metrics.hpp"

namespace fseg::nn {

namespace {

int round_up(int v, int multiple) { return (v + multiple - 1) / multiple * multiple; }

void permute(std::vector<std::size_t>& order, RandomStream rng) {
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
}

}  // namespace

void fill_input(Tensor4<float>& input, int n, const Slice2D& normalized) {
  if (normalized.width() > input.w() || normalized.height() > input.h())
    throw ShapeError("fill_input: slice larger than input tensor");
  float* dst = input.plane_ptr(n, 0);
  std::fill(dst, dst + input.plane(), 0.0f);
  constexpr float scale = 1.0f / static_cast<float>(kNormalizedMax);
  for (int y = 0; y < normalized.height(); ++y)
    for (int x = 0; x < normalized.width(); ++x) dst[static_cast<std::size_t>(y) * input.w() + x] = normalized.at(x, y) * scale;
}

TrainResult train(UNet<float>& model, const std::vector<TrainSample>& data, const TrainOptions& options) {
  if (data.empty()) throw ConfigError("train: empty training set");
  if (options.batch_size < 1 || static_cast<std::size_t>(options.batch_size) > data.size())
    throw ConfigError("train: batch size must be in [1, training set size]");
  if (options.epochs < 0) throw ConfigError("train: negative epoch count");
  options.augment.validate();
  const int classes = model.config().out_classes;
  for (const auto& s : data) {
    if (!s.image.same_geometry(s.labels)) throw ShapeError("train: image and label geometry differ");
    for (auto v : s.labels.data())
      if (v >= classes) throw ConfigError("train: label code exceeds the network's class count");
  }

  const RandomStream root(options.seed);
  const RandomStream shuffle_root = root.derive("shuffle");
  const RandomStream augment_root = root.derive("augment");
  const int multiple = model.config().size_multiple();
  const std::size_t bs = static_cast<std::size_t>(options.batch_size);
  const std::size_t n_batches = (data.size() + bs - 1) / bs;

  auto params = model.parameters();
  Nadam<float> optimizer(options.optimizer, params);
  TrainResult result;
  std::vector<std::size_t> order(data.size());

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    permute(order, shuffle_root.derive(static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::size_t begin = b * bs;
      const std::size_t end = std::min(data.size(), begin + bs);
      std::vector<std::pair<Slice2D, LabelSlice>> samples;
      samples.reserve(end - begin);
      int h = 0, w = 0;
      for (std::size_t i = begin; i < end; ++i) {
        const auto& s = data[order[i]];
        samples.emplace_back(s.image, s.labels);
        h = std::max(h, s.image.height());
        w = std::max(w, s.image.width());
      }
      const auto batch = compose_batch(samples, options.augment,
                                       augment_root.derive({static_cast<std::uint64_t>(epoch), b}));

      const int n = static_cast<int>(samples.size());
      Tensor4<float> input(n, 1, round_up(h, multiple), round_up(w, multiple));
      std::vector<std::uint8_t> targets(static_cast<std::size_t>(n) * input.plane(), 0);
      for (int i = 0; i < n; ++i) {
        fill_input(input, i, batch.images[static_cast<std::size_t>(i)]);
        const auto& lab = batch.labels[static_cast<std::size_t>(i)];
        std::uint8_t* t = targets.data() + static_cast<std::size_t>(i) * input.plane();
        for (int y = 0; y < lab.height(); ++y)
          for (int x = 0; x < lab.width(); ++x) t[static_cast<std::size_t>(y) * input.w() + x] = lab.at(x, y);
      }

      model.zero_grad();
      const auto probs = model.forward(input, true);
      const auto loss = compute_loss(options.loss, probs, std::span<const std::uint8_t>(targets));
      if (!std::isfinite(loss.value))
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch + 1));
      model.backward(loss.grad);
      optimizer.step(params);
      loss_sum += loss.value;

      if (options.log_draws)
        for (std::size_t i = 0; i < batch.draws.size(); ++i)
          result.draws.push_back({epoch, static_cast<int>(b), order[begin + i], batch.draws[i]});
    }
    const double mean = loss_sum / static_cast<double>(n_batches);
    result.epoch_loss.push_back(mean);
    if (options.on_epoch) options.on_epoch(epoch, mean);
  }
  return result;
}

Tensor4<float> predict_probs(UNet<float>& model, const Slice2D& slice) {
  const int multiple = model.config().size_multiple();
  const int w = slice.width(), h = slice.height();
  Tensor4<float> input(1, 1, round_up(h, multiple), round_up(w, multiple));
  fill_input(input, 0, normalize_slice(slice));
  const auto probs = model.forward(input, false);
  if (probs.h() == h && probs.w() == w) return probs;
  Tensor4<float> out(1, probs.c(), h, w);
  for (int c = 0; c < probs.c(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(0, c, y, x) = probs.at(0, c, y, x);
  return out;
}

LabelSlice segment_slice(UNet<float>& model, const Slice2D& slice) {
  const auto probs = predict_probs(model, slice);
  LabelSlice out(slice.width(), slice.height(), slice.spacing_x(), slice.spacing_y());
  for (int y = 0; y < probs.h(); ++y)
    for (int x = 0; x < probs.w(); ++x) {
      int best = 0;
      for (int c = 1; c < probs.c(); ++c)
        if (probs.at(0, c, y, x) > probs.at(0, best, y, x)) best = c;
      out.at(x, y) = static_cast<std::uint8_t>(best);
    }
  return out;
}

void write_loss_history(const std::filesystem::path& path, const std::vector<double>& epoch_loss) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << "epoch,loss\n";
  for (std::size_t i = 0; i < epoch_loss.size(); ++i) out << (i + 1) << ',' << format_number(epoch_loss[i]) << '\n';
}

}  // namespace fseg::nn
