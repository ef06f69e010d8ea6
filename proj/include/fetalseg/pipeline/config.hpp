#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "fetalseg/augment.hpp"
#include "fetalseg/nnet/unet.hpp"
#include "fetalseg/phantom.hpp"

namespace fseg {

enum class AblationArm { None, Flip, FlipRot, FlipRotIIA };
inline constexpr std::array<AblationArm, 4> kAblationArms = {AblationArm::None, AblationArm::Flip,
                                                             AblationArm::FlipRot, AblationArm::FlipRotIIA};

/// "none", "flip", "flip+rot", "flip+rot+IIA".
std::string_view arm_name(AblationArm arm) noexcept;
AblationArm arm_from_name(std::string_view name);

enum class Stage { Icv, Tissue };
std::string_view stage_name(Stage s) noexcept;
Stage stage_from_name(std::string_view name);

struct StageConfig {
  nn::UNetConfig net;
  int epochs = 0;
  int batch_size = 0;
  /// Augmentation used when the stage is trained outside an ablation.
  AblationArm arm = AblationArm::FlipRot;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out = "out";
  int jobs = 1;

  PhantomConfig phantom;
  TestArtifactConfig artifact;
  double train_fraction = 0.5;
  double test_fraction = 0.5;

  StageConfig icv{{3, 16, 1, 2}, 150, 12, AblationArm::FlipRot};
  StageConfig tissue{{3, 16, 1, kNumClasses}, 200, 18, AblationArm::FlipRotIIA};
  /// Train the tissue network on ROIs from the reference labels rather than
  /// from the ICV network's output.
  bool tissue_reference_roi = true;

  double learning_rate = 1e-4;
  double flip_prob = 0.5;
  Range rotation{0.0, 360.0};
  IIAParams iia;

  int roi_margin = 4;
  double min_component_mm3 = 3000.0;
  /// 6, 18 or 26.
  int connectivity = 26;
  std::vector<double> sweep_proportions{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  /// Reuse a stored model whose training settings match exactly.
  bool reuse_models = true;

  /// Throws ConfigError.
  void validate() const;
  /// Phantom settings with the experiment seed and network depth filled in.
  [[nodiscard]] PhantomConfig effective_phantom() const;
  [[nodiscard]] const StageConfig& stage(Stage s) const { return s == Stage::Icv ? icv : tissue; }
  /// Augmentation of an arm; `proportion` overrides iia.proportion for the IIA arm.
  [[nodiscard]] AugmentConfig augment_for(AblationArm arm) const;
  [[nodiscard]] AugmentConfig augment_for(AblationArm arm, double proportion) const;
};

/// Applies one `key = value` setting. Unknown keys and malformed values throw ConfigError.
void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value);

/// Flat text format: one `key = value` per line, `#` starts a comment.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every setting in parse_config() syntax; parsing the result gives back an equal configuration.
std::string dump_config(const ExperimentConfig& config);

}  // namespace fseg
