#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fetalseg/pipeline/config.hpp"
#include "fetalseg/volume.hpp"

namespace fseg {

enum class Split { Train, Test };

struct DatasetCase {
  int id = 0;
  Split split = Split::Train;
  IntensityVolume intensity;
  LabelVolume truth;
  /// One 0/1 flag per depth slice; always zero for training cases.
  std::vector<std::uint8_t> artifact_flags;
};

struct Dataset {
  std::uint64_t seed = 0;
  std::vector<DatasetCase> cases;

  [[nodiscard]] std::vector<const DatasetCase*> select(Split split) const;
};

/// Generates the phantoms, assigns cases to train/test with the "split"
/// stream and injects test artifacts into test cases only (stream
/// "artifact", one substream per case).
Dataset build_dataset(const ExperimentConfig& config);

/// Layout under `dir`:
///   manifest.txt             "seed <u64>" then one "case <id> <train|test> <flags>" line per case,
///                            flags being one 0/1 character per slice
///   case_<id>_image.mvol     f32 intensities
///   case_<id>_labels.mvol    u8 reference labels
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);
std::string manifest_text(const Dataset& dataset);

std::filesystem::path case_image_path(const std::filesystem::path& dir, int id);
std::filesystem::path case_labels_path(const std::filesystem::path& dir, int id);

}  // namespace fseg
