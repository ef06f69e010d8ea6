#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "fetalseg/rng.hpp"
#include "fetalseg/volume.hpp"

namespace fseg {

/// Offsets of the inhomogeneity pattern are published for a 512x512 matrix and
/// rescaled linearly to the working resolution.
inline constexpr double kReferenceGridSize = 512.0;

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  [[nodiscard]] bool contains(double v) const noexcept { return v >= lo && v <= hi; }
};

/// Inhomogeneity pattern M(x, y) = (x' + x0)^2 + (y' + y0)^2 where (x', y') is
/// (x, y) rotated by theta about the image centre. Grid coordinates start at
/// the top-left corner. Values are stored row-major.
struct MultiplierField {
  int width = 0;
  int height = 0;
  double x0 = 0.0;      // working-resolution pixels
  double y0 = 0.0;
  double x0_ref = 0.0;  // same offsets in 512-grid pixels
  double y0_ref = 0.0;
  double theta_deg = 0.0;
  std::vector<double> values;

  [[nodiscard]] double at(int x, int y) const noexcept {
    return values[static_cast<std::size_t>(y) * width + x];
  }
};

/// cos and sin of an angle in degrees; exact for multiples of 90.
std::pair<double, double> cos_sin_deg(double deg) noexcept;

/// Evaluates the closed form; x0/y0 are in working-resolution pixels. No normalisation.
MultiplierField make_multiplier_field(int width, int height, double x0, double y0, double theta_deg);

struct IIAParams {
  Range x0{43.0, 187.0};
  Range y0{-371.0, 170.0};
  Range theta{0.0, 360.0};
  /// Fraction of slices per batch that receive the augmentation.
  double proportion = 1.0;

  void validate() const;
};

/// One realisation of the augmentation, offsets in 512-grid pixels.
struct IiaDraw {
  double x0_ref = 0.0;
  double y0_ref = 0.0;
  double theta_deg = 0.0;
};

IiaDraw draw_iia(const IIAParams& params, RandomStream& rng);

/// Field for a draw, offsets rescaled by width/512 and height/512.
MultiplierField field_for_draw(int width, int height, const IiaDraw& draw);

/// normalize_slice(slice * values), computed in double precision.
Slice2D apply_multiplier(const Slice2D& slice, std::span<const double> values);

/// Replays a logged draw.
Slice2D apply_iia(const Slice2D& slice, const IiaDraw& draw);

struct IiaResult {
  Slice2D slice;
  IiaDraw draw;
};

/// Draws (x0, y0, theta) from `params` and applies the shading.
IiaResult apply_iia(const Slice2D& slice, const IIAParams& params, RandomStream& rng);

// ---- geometric augmentation ------------------------------------------------------

struct FlipDraw {
  bool horizontal = false;
  bool vertical = false;
};

std::pair<Slice2D, LabelSlice> flip(const Slice2D& slice, const LabelSlice& labels, FlipDraw draw);

struct FlipResult {
  Slice2D slice;
  LabelSlice labels;
  FlipDraw draw;
};

FlipResult random_flip(const Slice2D& slice, const LabelSlice& labels, RandomStream& rng, double prob = 0.5);

/// Rotation about the image centre: bilinear for intensities, nearest for labels,
/// zero / background outside the source grid.
std::pair<Slice2D, LabelSlice> rotate(const Slice2D& slice, const LabelSlice& labels, double angle_deg);

struct RotateResult {
  Slice2D slice;
  LabelSlice labels;
  double angle_deg = 0.0;
};

RotateResult random_rotate(const Slice2D& slice, const LabelSlice& labels, RandomStream& rng,
                           Range angle_range = {0.0, 360.0});

// ---- batch composition --------------------------------------------------------------

struct AugmentConfig {
  bool flip = true;
  double flip_prob = 0.5;
  bool rotate = true;
  Range rotation{0.0, 360.0};
  std::optional<IIAParams> iia;

  void validate() const;
};

/// Which random decisions were made for one slice of a batch.
struct DrawRecord {
  std::optional<FlipDraw> flip;
  std::optional<double> rotation_deg;
  std::optional<IiaDraw> iia;
};

struct AugmentedBatch {
  std::vector<Slice2D> images;
  std::vector<LabelSlice> labels;
  std::vector<DrawRecord> draws;
};

/// Number of slices that receive IIA in a batch of `batch_size`: round(p * batch_size).
int iia_count(double proportion, int batch_size);

/// Applies flip / rotation to every slice, IIA to exactly iia_count() slices
/// picked without replacement, and normalises every intensity slice to
/// [0, 1023]. Slice i draws from `rng.derive(i)`, so the result does not
/// depend on processing order.
AugmentedBatch compose_batch(const std::vector<std::pair<Slice2D, LabelSlice>>& samples,
                             const AugmentConfig& config, const RandomStream& rng);

}  // namespace fseg
