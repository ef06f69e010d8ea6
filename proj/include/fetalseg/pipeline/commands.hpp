#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "fetalseg/metrics.hpp"
#include "fetalseg/nnet/train.hpp"
#include "fetalseg/pipeline/config.hpp"
#include "fetalseg/pipeline/dataset.hpp"
#include "fetalseg/postprocess.hpp"

namespace fseg {

/// Progress messages. Timestamps go to the log file only, so everything else
/// a command writes stays byte-reproducible.
class Logger {
 public:
  Logger() = default;
  explicit Logger(const std::filesystem::path& file, bool echo = true);
  void info(const std::string& message);

 private:
  std::mutex mutex_;
  std::ofstream file_;
  bool echo_ = false;
};

/// Runs fn(0..count-1) on up to `jobs` threads. The first exception (by task
/// index) is rethrown after all tasks have finished.
void run_jobs(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

// ---- training ----------------------------------------------------------------

/// Every slice of every training case with its ICV mask.
std::vector<nn::TrainSample> icv_training_set(const Dataset& dataset);

/// ROI-cropped training slices. ROIs come from the reference labels, or
/// from `icv_model` when given, and are grown to a common canvas (the largest
/// ROI over the training cases) so every batch has one size.
std::vector<nn::TrainSample> tissue_training_set(const Dataset& dataset, const ExperimentConfig& config,
                                                 nn::UNet<float>* icv_model = nullptr);

struct TrainedModel {
  nn::UNet<float> model;
  std::vector<double> loss_history;
  std::vector<nn::DrawLogEntry> draws;
  bool reused = false;
  std::filesystem::path checkpoint;
};

/// Text identifying everything that influences a stage's training.
std::string model_key(const ExperimentConfig& config, Stage stage, const AugmentConfig& augment);

/// Trains one stage on prepared samples, or loads the cached model with the
/// same key when reuse_models is set and no draw log is requested. Models are
/// cached under <out>/cache.
TrainedModel train_stage(const ExperimentConfig& config, Stage stage, const AugmentConfig& augment,
                         const std::vector<nn::TrainSample>& samples, Logger& log, bool log_draws = false);

/// Draw log header: epoch,batch,sample,flip_h,flip_v,rotation_deg,iia_x0,iia_y0,iia_theta
void write_draw_log(const std::vector<nn::DrawLogEntry>& draws, const std::filesystem::path& path);

// ---- segmentation ------------------------------------------------------------

struct IcvResult {
  BinaryMask3D raw;
  BinaryMask3D filtered;
  RoiBox roi;
};

/// Slice-wise ICV prediction, 3D component filtering and ROI extraction.
/// Throws NoIcvError when nothing survives the filter.
IcvResult segment_icv(nn::UNet<float>& icv_model, const IntensityVolume& volume, const ExperimentConfig& config);

/// Runs the tissue network on the ROI only and embeds its labels into a
/// full-size volume; voxels outside the filtered ICV are background.
LabelVolume segment_tissue(nn::UNet<float>& tissue_model, const IntensityVolume& volume, const IcvResult& icv);

LabelVolume segment_volume(nn::UNet<float>& icv_model, nn::UNet<float>& tissue_model, const IntensityVolume& volume,
                           const ExperimentConfig& config);

// ---- commands ----------------------------------------------------------------

/// Generates the dataset and writes it to <out>/data.
Dataset cmd_phantom(const ExperimentConfig& config, Logger& log);

/// Reads <out>/data, generating it first if it does not exist.
Dataset ensure_dataset(const ExperimentConfig& config, Logger& log);

/// Trains one stage with the stage's configured arm. Writes <out>/<stage>.unet,
/// <out>/<stage>_loss.csv and <out>/<stage>_draws.csv.
TrainedModel cmd_train(const ExperimentConfig& config, Stage stage, Logger& log);

/// Segments every test case with <out>/icv.unet and <out>/tissue.unet and
/// writes <out>/pred/case_<id>_labels.mvol.
std::map<int, LabelVolume> cmd_segment(const ExperimentConfig& config, Logger& log);

struct Evaluation {
  std::vector<SliceClassScore> scores;
  MetricsReport report;
};

Evaluation evaluate_predictions(const Dataset& dataset, const std::map<int, LabelVolume>& predictions);

/// Scores <out>/pred against the test references. Writes <out>/scores.csv and <out>/report.csv.
Evaluation cmd_evaluate(const ExperimentConfig& config, Logger& log);

struct ArmResult {
  std::string name;
  Evaluation evaluation;
  bool reused = false;
};

/// Header of ablation.csv (and sweep.csv, with "proportion" in place of "arm"):
/// arm,class,dc_all,msd_all,dc_with_artifact,msd_with_artifact,dc_without_artifact,msd_without_artifact
/// Summaries: arm,subset,dc,msd (means over classes).
std::vector<ArmResult> cmd_ablation(const ExperimentConfig& config, Logger& log);
std::vector<ArmResult> cmd_sweep(const ExperimentConfig& config, Logger& log);

void write_comparison_csv(const std::vector<ArmResult>& results, const std::string& key_column,
                          const std::filesystem::path& path);
void write_comparison_summary(const std::vector<ArmResult>& results, const std::string& key_column,
                              const std::filesystem::path& path);

/// Writes a side-by-side PGM of a slice before and after one IIA draw and the
/// normalised multiplier field, plus the label PPM.
void cmd_augment_preview(const ExperimentConfig& config, int case_id, int slice, const std::filesystem::path& dir,
                         Logger& log);

}  // namespace fseg
