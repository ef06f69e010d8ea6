#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "fetalseg/augment.hpp"
#include "fetalseg/nnet/loss.hpp"
#include "fetalseg/nnet/nadam.hpp"
#include "fetalseg/nnet/unet.hpp"
#include "fetalseg/volume.hpp"

namespace fseg::nn {

struct TrainSample {
  Slice2D image;
  LabelSlice labels;
};

struct TrainOptions {
  LossKind loss = LossKind::CrossEntropy;
  int batch_size = 12;
  int epochs = 1;
  std::uint64_t seed = 0;
  AugmentConfig augment;
  NadamConfig optimizer;
  /// Keep every per-slice augmentation decision in TrainResult::draws.
  bool log_draws = false;
  /// Called after each epoch with (epoch, mean batch loss).
  std::function<void(int, double)> on_epoch;
};

struct DrawLogEntry {
  int epoch = 0;
  int batch = 0;
  /// Index into the training set.
  std::size_t sample = 0;
  DrawRecord draw;
};

struct TrainResult {
  /// Mean batch loss per epoch.
  std::vector<double> epoch_loss;
  std::vector<DrawLogEntry> draws;
};

/// Mini-batch training. Each epoch visits a fresh permutation of `data` in
/// batches of `batch_size` (the last one may be smaller); each batch is run
/// through compose_batch() with its own (epoch, batch) stream. Slices of a
/// batch are zero-padded at the bottom/right to a common size that is a
/// multiple of the network's size_multiple(). Throws DivergenceError on a
/// non-finite loss or gradient.
TrainResult train(UNet<float>& model, const std::vector<TrainSample>& data, const TrainOptions& options);

/// Network input for an already normalised [0, 1023] slice, padded to
/// (h, w) with zeros.
void fill_input(Tensor4<float>& input, int n, const Slice2D& normalized);

/// Class probabilities (1, C, h, w) for one raw slice: the slice is normalised
/// to [0, 1023], padded to a multiple of the network size and the output is
/// cropped back.
Tensor4<float> predict_probs(UNet<float>& model, const Slice2D& slice);

/// Per-pixel argmax of predict_probs(); ties go to the lower class code.
LabelSlice segment_slice(UNet<float>& model, const Slice2D& slice);

/// Writes "epoch,loss" rows with 1-based epochs.
void write_loss_history(const std::filesystem::path& path, const std::vector<double>& epoch_loss);

}  // namespace fseg::nn
