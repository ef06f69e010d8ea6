#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fetalseg/volume.hpp"

namespace fseg {

// ---- mask-level primitives ---------------------------------------------------------
//
// Masks are 0/1 bytes laid out like Volume (x fastest, then y, then z).

/// 2|R ∩ P| / (|R| + |P|); nullopt when both masks are empty.
std::optional<double> dice_masks(std::span<const std::uint8_t> ref, std::span<const std::uint8_t> pred);

/// Boundary voxels: mask voxels with at least one face neighbour outside the
/// mask. In-plane 4-neighbourhood, plus the two z neighbours when `use_z`.
/// Grid borders count as outside.
std::vector<std::uint8_t> mask_boundary(std::span<const std::uint8_t> mask, int w, int h, int d, bool use_z);

/// Squared Euclidean distance (mm^2) from every voxel to the nearest voxel of
/// `targets`; +inf everywhere when `targets` is empty. Exact: separable min
/// over rows, columns and planes.
std::vector<double> squared_distance_map(std::span<const std::uint8_t> targets, int w, int h, int d,
                                         const Spacing& spacing);

/// Symmetric mean surface distance: the mean of (mean distance from the ref
/// boundary to the pred boundary) and (mean distance from the pred boundary
/// to the ref boundary). nullopt unless both masks are non-empty.
std::optional<double> msd_masks(std::span<const std::uint8_t> ref, std::span<const std::uint8_t> pred, int w, int h,
                                int d, const Spacing& spacing, bool use_z);

// ---- label-level metrics -------------------------------------------------------------

std::optional<double> dice_2d(const LabelSlice& ref, const LabelSlice& pred, int cls);
std::optional<double> msd_2d(const LabelSlice& ref, const LabelSlice& pred, int cls, double sx, double sy);
std::optional<double> dice_3d(const LabelVolume& ref, const LabelVolume& pred, int cls);
std::optional<double> msd_3d(const LabelVolume& ref, const LabelVolume& pred, int cls, const Spacing& spacing);

// ---- per-slice scores and aggregation --------------------------------------------------

struct SliceClassScore {
  int volume = 0;
  int slice = 0;
  int cls = 0;
  std::optional<double> dc;
  std::optional<double> msd;
  bool artifact = false;
};

/// Per-slice, per-tissue-class (codes 1..7) scores for one volume pair.
/// `artifact_flags` has one entry per depth slice (or is empty for "none").
std::vector<SliceClassScore> score_volume(const LabelVolume& ref, const LabelVolume& pred, int volume_id,
                                          std::span<const std::uint8_t> artifact_flags);

enum class Subset { All = 0, WithArtifact = 1, WithoutArtifact = 2 };
inline constexpr std::array<Subset, 3> kSubsets = {Subset::All, Subset::WithArtifact, Subset::WithoutArtifact};
std::string_view subset_name(Subset s) noexcept;

struct ClassSummary {
  std::optional<double> dc;
  std::optional<double> msd;
  std::size_t n_dc = 0;
  std::size_t n_msd = 0;
};

struct MetricsReport {
  /// [subset][class code]; code 0 (background) is never filled.
  std::array<std::array<ClassSummary, kNumClasses>, 3> classes{};
  /// Mean of the defined per-class means, per subset.
  std::array<ClassSummary, 3> grand{};
  std::array<std::size_t, 3> slice_counts{};

  [[nodiscard]] const ClassSummary& at(Subset s, int cls) const { return classes[static_cast<int>(s)][cls]; }
  [[nodiscard]] const ClassSummary& mean(Subset s) const { return grand[static_cast<int>(s)]; }
};

MetricsReport aggregate(std::span<const SliceClassScore> scores);

/// Shortest decimal text that round-trips the double.
std::string format_number(double v);
std::string format_optional(const std::optional<double>& v);

/// Header: volume,slice,class,dc,msd,artifact ("NA" for undefined values).
void write_scores_csv(std::span<const SliceClassScore> scores, const std::filesystem::path& path);
std::vector<SliceClassScore> read_scores_csv(const std::filesystem::path& path);
/// Header: subset,metric,CB,BGT,vCSF,WM,BS,cGM,eCSF,mean
void write_report_csv(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace fseg
