#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fetalseg/nnet/loss.hpp"
#include "fetalseg/nnet/unet.hpp"

namespace fseg::nn {

struct GradCheckOptions {
  /// Central difference step.
  double step = 1e-5;
  /// Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-8;
  /// Coordinates checked per buffer; 0 checks all of them.
  std::size_t max_per_buffer = 0;
  std::uint64_t seed = 7;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  /// Coordinates whose perturbation crossed a ReLU or max-pool switch.
  std::size_t skipped = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  [[nodiscard]] double max_rel_error() const;
};

double relative_error(double analytic, double numeric, double floor);

/// Checks every layer primitive and both losses in isolation. Each layer is
/// wrapped in a random linear read-out so every output contributes.
GradCheckReport gradcheck_layers(const GradCheckOptions& options = {});

/// Checks all trainable parameters of a double-precision U-net in training
/// mode against the given loss on random targets. Coordinates where a
/// perturbation flips a ReLU or a max-pool winner are counted as skipped,
/// since the finite difference straddles a kink there.
GradCheckReport gradcheck_unet(const UNetConfig& config, int batch, int size, LossKind loss,
                               const GradCheckOptions& options = {});

}  // namespace fseg::nn
