#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "fetalseg/augment.hpp"
#include "fetalseg/rng.hpp"
#include "fetalseg/volume.hpp"

namespace fseg {

struct ClassIntensity {
  double mean = 0.0;
  double noise_std = 0.0;
};

/// Synthetic fetal-like volumes: a textured maternal body with amniotic fluid,
/// a fetal skull, and a seven-class brain built from nested ellipses.
struct PhantomConfig {
  std::uint64_t seed = 1;
  int image_size = 64;
  int slices_per_volume = 8;
  int n_volumes = 12;
  Spacing spacing{0.7, 0.7, 1.25};
  /// Image size must be divisible by 2^net_depth.
  int net_depth = 3;

  /// Indexed by class code; entry 0 is unused (background regions below).
  std::array<ClassIntensity, kNumClasses> class_intensity{{
      {0.0, 0.0},
      {0.38, 0.025},  // CB
      {0.44, 0.025},  // BGT
      {0.88, 0.025},  // vCSF
      {0.60, 0.025},  // WM
      {0.50, 0.025},  // BS
      {0.30, 0.025},  // cGM
      {0.93, 0.025},  // eCSF
  }};
  ClassIntensity maternal{0.32, 0.03};
  ClassIntensity amniotic{0.82, 0.03};
  ClassIntensity skull{0.08, 0.02};
  ClassIntensity scalp{0.46, 0.03};
  ClassIntensity air{0.02, 0.01};

  double max_rotation_deg = 15.0;
  /// Maximum brain-centre shift as a fraction of the image width.
  double max_translation = 0.05;
  double background_texture_amplitude = 0.12;
  /// Peak-to-centre amplitude of the mild linear shading present in every slice.
  double acquisition_shading = 0.08;

  void validate() const;
};

/// Smooth multiplicative shading injected into test slices. Offsets are
/// 512-grid pixels and default to ranges disjoint from the training IIA ranges.
struct TestArtifactConfig {
  /// Probability that a slice receives an artifact.
  double fraction = 0.5;
  /// Exponent applied to the mean-normalised pattern; 0 disables the shading.
  double strength = 1.0;
  Range x0{200.0, 400.0};
  Range y0{200.0, 400.0};
  Range theta{0.0, 360.0};

  void validate() const;
};

struct PhantomCase {
  int id = 0;
  IntensityVolume intensity;
  LabelVolume truth;
  /// One flag per depth slice.
  std::vector<std::uint8_t> has_injected_artifact;
  /// The pattern parameters used for each flagged slice.
  std::vector<std::optional<IiaDraw>> artifact_draws;
};

PhantomCase generate_case(const PhantomConfig& config, int index);

/// Deterministic for a fixed seed: case i only depends on (seed, i).
std::vector<PhantomCase> generate_dataset(const PhantomConfig& config);

/// Multiplier applied to an injected slice: (F / mean(F))^strength with F the
/// quadratic inhomogeneity pattern of `draw`.
std::vector<double> test_artifact_multiplier(int width, int height, const IiaDraw& draw, double strength);

/// Flags each slice with probability `fraction` and multiplies flagged slices
/// by test_artifact_multiplier(). Labels are untouched.
PhantomCase inject_test_artifact(const PhantomCase& c, RandomStream& rng, const TestArtifactConfig& config);

}  // namespace fseg
