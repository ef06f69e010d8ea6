#pragma once

#include <cstdint>
#include <vector>

#include "fetalseg/volume.hpp"

namespace fseg {

/// 0/1 voxel mask sharing the geometry of the volume it was derived from.
using BinaryMask3D = Volume<std::uint8_t>;

enum class Connectivity { Six = 6, Eighteen = 18, TwentySix = 26 };

struct Components {
  /// Component ID per voxel, 0 for background, dense from 1 in scan order of
  /// each component's first voxel.
  std::vector<int> ids;
  /// counts[k] = voxel count of component k + 1.
  std::vector<std::size_t> counts;

  [[nodiscard]] std::size_t size() const noexcept { return counts.size(); }
};

Components connected_components_3d(const BinaryMask3D& mask, Connectivity conn = Connectivity::TwentySix);

inline constexpr double kMinComponentVolumeMm3 = 3000.0;

/// Drops every component whose physical volume is strictly smaller than `min_volume_mm3`.
BinaryMask3D filter_small_components(const BinaryMask3D& mask, double min_volume_mm3 = kMinComponentVolumeMm3,
                                     Connectivity conn = Connectivity::TwentySix);

/// Inclusive voxel box.
struct RoiBox {
  int x0 = 0, y0 = 0, z0 = 0;
  int x1 = 0, y1 = 0, z1 = 0;
  int margin = 0;

  [[nodiscard]] int width() const noexcept { return x1 - x0 + 1; }
  [[nodiscard]] int height() const noexcept { return y1 - y0 + 1; }
  [[nodiscard]] int depth() const noexcept { return z1 - z0 + 1; }
  bool operator==(const RoiBox&) const = default;
};

inline constexpr int kDefaultRoiMargin = 4;

/// Tight bounding box of the mask, grown by `margin` in-plane, clamped, then
/// grown in-plane to the next multiple of `multiple` (2^depth of the tissue
/// network). Throws NoIcvError for an empty mask.
RoiBox compute_roi(const BinaryMask3D& mask, int margin = kDefaultRoiMargin, int multiple = 1);

/// Grows (never shrinks) the in-plane extent of `box` to width x height,
/// keeping it centred where possible and inside a width_limit x height_limit grid.
RoiBox grow_roi(const RoiBox& box, int width, int height, int width_limit, int height_limit);

template <typename T>
Volume<T> crop_to_roi(const Volume<T>& volume, const RoiBox& box);

/// Writes `cropped` back into `target` at the box offset.
template <typename T>
void embed_roi(Volume<T>& target, const Volume<T>& cropped, const RoiBox& box);

/// Union of all non-background labels.
BinaryMask3D icv_from_labels(const LabelVolume& labels);

}  // namespace fseg
