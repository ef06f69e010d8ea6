#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "fetalseg/errors.hpp"

namespace fseg {

enum class TissueClass : std::uint8_t {
  Background = 0,
  CB = 1,
  BGT = 2,
  vCSF = 3,
  WM = 4,
  BS = 5,
  cGM = 6,
  eCSF = 7,
};

inline constexpr int kNumClasses = 8;
inline constexpr int kNumTissueClasses = 7;

std::string_view class_name(TissueClass c) noexcept;
std::string_view class_name(int code);
std::optional<TissueClass> class_from_name(std::string_view name) noexcept;
constexpr bool is_valid_code(int code) noexcept { return code >= 0 && code < kNumClasses; }

/// Voxel size in millimetres.
struct Spacing {
  double x = 1.0;
  double y = 1.0;
  double z = 1.0;

  [[nodiscard]] double voxel_volume() const noexcept { return x * y * z; }
  bool operator==(const Spacing&) const = default;
};

/// Dense 2D grid. Row-major: index = y * width + x.
template <typename T>
class Slice {
 public:
  Slice() = default;
  Slice(int width, int height, double sx, double sy, T fill = T{});
  Slice(int width, int height, double sx, double sy, std::vector<T> data);

  [[nodiscard]] int width() const noexcept { return width_; }
  [[nodiscard]] int height() const noexcept { return height_; }
  [[nodiscard]] double spacing_x() const noexcept { return sx_; }
  [[nodiscard]] double spacing_y() const noexcept { return sy_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  T& at(int x, int y) noexcept { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& at(int x, int y) const noexcept { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& values() noexcept { return data_; }

  [[nodiscard]] bool same_geometry(const auto& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  bool operator==(const Slice&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  double sx_ = 1.0;
  double sy_ = 1.0;
  std::vector<T> data_;
};

using Slice2D = Slice<float>;
using LabelSlice = Slice<std::uint8_t>;

/// Dense 3D grid. Slice-major along depth: index = (z * height + y) * width + x,
/// so every depth slice is a contiguous block.
template <typename T>
class Volume {
 public:
  Volume() = default;
  Volume(int width, int height, int depth, Spacing spacing, T fill = T{});
  Volume(int width, int height, int depth, Spacing spacing, std::vector<T> data);

  [[nodiscard]] int width() const noexcept { return width_; }
  [[nodiscard]] int height() const noexcept { return height_; }
  [[nodiscard]] int depth() const noexcept { return depth_; }
  [[nodiscard]] const Spacing& spacing() const noexcept { return spacing_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] std::size_t slice_size() const noexcept {
    return static_cast<std::size_t>(width_) * height_;
  }

  [[nodiscard]] std::size_t index(int x, int y, int z) const noexcept {
    return (static_cast<std::size_t>(z) * height_ + y) * width_ + x;
  }
  T& at(int x, int y, int z) noexcept { return data_[index(x, y, z)]; }
  const T& at(int x, int y, int z) const noexcept { return data_[index(x, y, z)]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  /// Contiguous view of one depth slice.
  std::span<const T> slice_view(int z) const;
  std::span<T> slice_view(int z);

  [[nodiscard]] bool same_geometry(const auto& other) const noexcept {
    return width_ == other.width() && height_ == other.height() && depth_ == other.depth() &&
           spacing_ == other.spacing();
  }

  bool operator==(const Volume&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int depth_ = 0;
  Spacing spacing_;
  std::vector<T> data_;
};

using IntensityVolume = Volume<float>;
using LabelVolume = Volume<std::uint8_t>;
using AnyVolume = std::variant<IntensityVolume, LabelVolume>;

/// Throws InvariantError if any code is outside 0..7.
void validate_labels(std::span<const std::uint8_t> codes);

/// Extracts depth slice `index`. Throws std::out_of_range for index outside [0, depth).
template <typename T>
Slice<T> get_slice(const Volume<T>& volume, int index);

/// Overwrites depth slice `index` with `slice`; geometry must match.
template <typename T>
void put_slice(Volume<T>& volume, int index, const Slice<T>& slice);

/// Affine rescale of the slice values to [0, 1023]. Constant slices map to all zeros.
Slice2D normalize_slice(const Slice2D& slice);
inline constexpr float kNormalizedMax = 1023.0f;

// ---- .mvol file format -------------------------------------------------------
//
// 64-byte header: "MVOL1 kind=<f32|u8> w=<int> h=<int> d=<int> sx=<mm> sy=<mm> sz=<mm>",
// right-padded with spaces to 63 bytes and terminated by '\n'. The payload
// follows at byte offset 64: raw little-endian values, row-major, slice-major.

inline constexpr std::size_t kMvolHeaderSize = 64;

AnyVolume load_volume(const std::filesystem::path& path);
IntensityVolume load_intensity(const std::filesystem::path& path);
LabelVolume load_labels(const std::filesystem::path& path);
void save_volume(const IntensityVolume& volume, const std::filesystem::path& path);
void save_volume(const LabelVolume& volume, const std::filesystem::path& path);

/// Header text (without padding) for the given geometry; exposed for tests.
std::string mvol_header(std::string_view kind, int w, int h, int d, const Spacing& spacing);

// ---- previews ----------------------------------------------------------------

/// Fixed colour per class code, see README.
const std::array<std::array<std::uint8_t, 3>, kNumClasses>& label_palette() noexcept;

/// 8-bit binary PGM, values linearly rescaled from [min, max] to [0, 255].
void write_pgm(const Slice2D& slice, const std::filesystem::path& path);
/// Binary PPM with each code replaced by its palette colour.
void write_label_ppm(const LabelSlice& slice, const std::filesystem::path& path);

}  // namespace fseg
