#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "fetalseg/nnet/gradcheck.hpp"
#include "fetalseg/pipeline/commands.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kDivergence = 3, kNoIcv = 4 };

int run_gradcheck() {
  using namespace fseg::nn;
  const auto layers = gradcheck_layers();
  for (const auto& e : layers.entries)
    std::printf("%-24s %6zu checked  max rel err %.3e\n", e.name.c_str(), e.checked, e.max_rel_error);
  UNetConfig cfg;
  cfg.depth = 2;
  cfg.base_channels = 4;
  cfg.out_classes = 3;
  double unet_max = 0.0;
  for (LossKind loss : {LossKind::CrossEntropy, LossKind::SoftDice}) {
    const auto r = gradcheck_unet(cfg, 2, 16, loss);
    std::size_t checked = 0, skipped = 0;
    for (const auto& e : r.entries) {
      checked += e.checked;
      skipped += e.skipped;
    }
    std::printf("unet (%s) %zu parameters, %zu on a kink, max rel err %.3e\n",
                loss == LossKind::CrossEntropy ? "cross-entropy" : "soft Dice", checked, skipped, r.max_rel_error());
    unet_max = std::max(unet_max, r.max_rel_error());
  }
  const bool ok = layers.max_rel_error() <= 1e-6 && unet_max <= 1e-4;
  std::printf("%s\n", ok ? "gradients OK" : "gradient mismatch");
  return ok ? kOk : kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage fetal brain MRI segmentation with intensity inhomogeneity augmentation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out;
  app.add_option("--config", config_path, "Experiment config file (key = value lines)");
  app.add_option("--seed", seed, "Root random seed");
  app.add_option("--jobs", jobs, "Parallel jobs for ablation arms and sweep points")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Output directory");

  auto* phantom = app.add_subcommand("phantom", "Generate the synthetic dataset");
  auto* train = app.add_subcommand("train", "Train one stage");
  std::string stage = "icv";
  std::optional<std::string> arm;
  train->add_option("--stage", stage, "icv or tissue")->check(CLI::IsMember({"icv", "tissue"}));
  train->add_option("--arm", arm, "none, flip, flip+rot or flip+rot+IIA");
  auto* segment = app.add_subcommand("segment", "Segment the test cases with the trained models");
  auto* evaluate = app.add_subcommand("evaluate", "Score the segmentations against the references");
  auto* ablation = app.add_subcommand("ablation", "Train and compare the four augmentation arms");
  auto* sweep = app.add_subcommand("sweep", "Vary the proportion of IIA slices per batch");
  std::optional<std::string> proportions;
  sweep->add_option("--proportions", proportions, "Comma-separated proportions in [0, 1]");
  auto* augment = app.add_subcommand("augment", "Augmentation tools");
  augment->require_subcommand(1);
  auto* preview = augment->add_subcommand("preview", "Write an IIA preview for one slice");
  int preview_case = 0, preview_slice = 0;
  std::string preview_dir;
  preview->add_option("--case", preview_case, "Case id");
  preview->add_option("--slice", preview_slice, "Slice index");
  preview->add_option("--dir", preview_dir, "Output directory (default <out>/preview)");
  auto* gradcheck = app.add_subcommand("gradcheck", "Check analytic gradients against finite differences");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (gradcheck->parsed()) return run_gradcheck();

    fseg::ExperimentConfig cfg = config_path.empty() ? fseg::ExperimentConfig{} : fseg::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (jobs) cfg.jobs = *jobs;
    if (out) cfg.out = *out;
    if (arm) fseg::apply_setting(cfg, stage + ".arm", *arm);
    if (proportions) fseg::apply_setting(cfg, "sweep.proportions", *proportions);
    cfg.validate();
    std::filesystem::create_directories(cfg.out);
    fseg::Logger log(cfg.out / "log.txt");

    if (phantom->parsed()) {
      fseg::cmd_phantom(cfg, log);
    } else if (train->parsed()) {
      const auto trained = fseg::cmd_train(cfg, fseg::stage_from_name(stage), log);
      std::printf("final loss %s\n", fseg::format_number(trained.loss_history.empty() ? 0.0 : trained.loss_history.back()).c_str());
    } else if (segment->parsed()) {
      fseg::cmd_segment(cfg, log);
    } else if (evaluate->parsed()) {
      fseg::cmd_evaluate(cfg, log);
      std::cout << "report written to " << (cfg.out / "report.csv").string() << '\n';
    } else if (ablation->parsed() || sweep->parsed()) {
      const bool is_ablation = ablation->parsed();
      const auto results = is_ablation ? fseg::cmd_ablation(cfg, log) : fseg::cmd_sweep(cfg, log);
      std::printf("%-14s %10s %10s %10s %10s\n", is_ablation ? "arm" : "proportion", "DC(all)", "MSD(all)", "DC(art)",
                  "MSD(art)");
      for (const auto& r : results) {
        const auto& all = r.evaluation.report.mean(fseg::Subset::All);
        const auto& art = r.evaluation.report.mean(fseg::Subset::WithArtifact);
        std::printf("%-14s %10s %10s %10s %10s\n", r.name.c_str(), fseg::format_optional(all.dc).substr(0, 8).c_str(),
                    fseg::format_optional(all.msd).substr(0, 8).c_str(), fseg::format_optional(art.dc).substr(0, 8).c_str(),
                    fseg::format_optional(art.msd).substr(0, 8).c_str());
      }
    } else if (preview->parsed()) {
      fseg::cmd_augment_preview(cfg, preview_case, preview_slice,
                                preview_dir.empty() ? cfg.out / "preview" : std::filesystem::path(preview_dir), log);
    }
    return kOk;
  } catch (const fseg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const fseg::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kDivergence;
  } catch (const fseg::NoIcvError& e) {
    std::cerr << e.what() << '\n';
    return kNoIcv;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
