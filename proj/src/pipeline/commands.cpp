#include "fetalseg/pipeline/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <exception>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "fetalseg/nnet/checkpoint.hpp"

namespace fseg {

namespace fs = std::filesystem;

Logger::Logger(const fs::path& file, bool echo) : echo_(echo) {
  if (!file.empty()) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    file_.open(file, std::ios::app);
  }
}

void Logger::info(const std::string& message) {
  std::lock_guard lock(mutex_);
  if (echo_) std::cerr << message << '\n';
  if (file_.is_open()) {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&t, &tm);
    file_ << std::put_time(&tm, "%Y-%m-%d %H:%M:%S") << ' ' << message << '\n';
    file_.flush();
  }
}

void run_jobs(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, jobs)));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---- training ----------------------------------------------------------------

std::vector<nn::TrainSample> icv_training_set(const Dataset& dataset) {
  std::vector<nn::TrainSample> out;
  for (const DatasetCase* c : dataset.select(Split::Train)) {
    const BinaryMask3D icv = icv_from_labels(c->truth);
    for (int z = 0; z < c->intensity.depth(); ++z) out.push_back({get_slice(c->intensity, z), get_slice(icv, z)});
  }
  return out;
}

std::vector<nn::TrainSample> tissue_training_set(const Dataset& dataset, const ExperimentConfig& config,
                                                 nn::UNet<float>* icv_model) {
  const auto cases = dataset.select(Split::Train);
  const int multiple = config.tissue.net.size_multiple();
  std::vector<RoiBox> rois;
  int cw = 0, ch = 0;
  for (const DatasetCase* c : cases) {
    const RoiBox box = icv_model ? segment_icv(*icv_model, c->intensity, config).roi
                                 : compute_roi(icv_from_labels(c->truth), config.roi_margin, multiple);
    rois.push_back(box);
    cw = std::max(cw, box.width());
    ch = std::max(ch, box.height());
  }
  std::vector<nn::TrainSample> out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const DatasetCase& c = *cases[i];
    const RoiBox box = grow_roi(rois[i], cw, ch, c.intensity.width(), c.intensity.height());
    const auto image = crop_to_roi(c.intensity, box);
    const auto labels = crop_to_roi(c.truth, box);
    for (int z = 0; z < image.depth(); ++z) out.push_back({get_slice(image, z), get_slice(labels, z)});
  }
  return out;
}

namespace {

bool starts_with(const std::string& s, std::string_view prefix) { return s.rfind(prefix, 0) == 0; }

std::string describe_augment(const AugmentConfig& a) {
  std::ostringstream ss;
  ss << "augment.flip = " << (a.flip ? "true" : "false") << '\n';
  if (a.flip) ss << "augment.flip_prob = " << format_number(a.flip_prob) << '\n';
  ss << "augment.rotate = " << (a.rotate ? "true" : "false") << '\n';
  if (a.rotate) ss << "augment.rotation = " << format_number(a.rotation.lo) << ' ' << format_number(a.rotation.hi) << '\n';
  if (a.iia && a.iia->proportion > 0.0) {
    const auto& p = *a.iia;
    ss << "augment.iia = " << format_number(p.x0.lo) << ' ' << format_number(p.x0.hi) << ' ' << format_number(p.y0.lo)
       << ' ' << format_number(p.y0.hi) << ' ' << format_number(p.theta.lo) << ' ' << format_number(p.theta.hi)
       << " p=" << format_number(p.proportion) << '\n';
  } else {
    ss << "augment.iia = none\n";
  }
  return ss.str();
}

std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

std::vector<double> read_loss_history(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<double> out;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("bad loss history line: " + line);
    out.push_back(std::stod(line.substr(comma + 1)));
  }
  return out;
}

RandomStream stage_stream(const ExperimentConfig& config, std::string_view purpose, Stage stage) {
  return RandomStream(config.seed).derive(purpose).derive(stage_name(stage));
}

}  // namespace

std::string model_key(const ExperimentConfig& config, Stage stage, const AugmentConfig& augment) {
  const bool uses_icv = stage == Stage::Icv || !config.tissue_reference_roi;
  std::istringstream dump(dump_config(config));
  std::string key = "stage = " + std::string(stage_name(stage)) + "\n";
  std::string line;
  while (std::getline(dump, line)) {
    if (starts_with(line, "out ") || starts_with(line, "jobs ") || starts_with(line, "reuse_models ") ||
        starts_with(line, "sweep.") || starts_with(line, "iia.") || starts_with(line, "augment.") ||
        starts_with(line, "artifact.") || starts_with(line, "tissue.arm "))
      continue;
    if (stage == Stage::Icv && starts_with(line, "tissue.")) continue;
    if (stage == Stage::Icv && starts_with(line, "roi.")) continue;
    if (!uses_icv && (starts_with(line, "icv.") || starts_with(line, "postprocess."))) continue;
    if (stage == Stage::Icv && (starts_with(line, "icv.arm ") || starts_with(line, "postprocess."))) continue;
    key += line + '\n';
  }
  if (stage == Stage::Tissue && uses_icv)
    key += "icv.augment:\n" + describe_augment(config.augment_for(config.icv.arm));
  return key + describe_augment(augment);
}

TrainedModel train_stage(const ExperimentConfig& config, Stage stage, const AugmentConfig& augment,
                         const std::vector<nn::TrainSample>& samples, Logger& log, bool log_draws) {
  const StageConfig& st = config.stage(stage);
  const std::string key = model_key(config, stage, augment);
  const fs::path cache = config.out / "cache";
  const std::string stem = std::string(stage_name(stage)) + "_" + hex64(std::hash<std::string>{}(key));
  const fs::path ckpt = cache / (stem + ".unet");
  const fs::path key_file = cache / (stem + ".key");
  const fs::path loss_file = cache / (stem + "_loss.csv");

  if (config.reuse_models && !log_draws && fs::exists(ckpt) && fs::exists(key_file) && fs::exists(loss_file) &&
      read_text(key_file) == key) {
    log.info("reusing " + std::string(stage_name(stage)) + " model " + ckpt.string());
    return {nn::load_checkpoint(ckpt), read_loss_history(loss_file), {}, true, ckpt};
  }

  nn::UNet<float> model(st.net, stage_stream(config, "init", stage));
  nn::TrainOptions opt;
  opt.loss = stage == Stage::Icv ? nn::LossKind::CrossEntropy : nn::LossKind::SoftDice;
  opt.batch_size = st.batch_size;
  opt.epochs = st.epochs;
  opt.seed = stage_stream(config, "augment", stage).key();
  opt.augment = augment;
  opt.optimizer.learning_rate = config.learning_rate;
  opt.log_draws = log_draws;
  const std::string tag = std::string(stage_name(stage)) + " " + stem.substr(stem.size() - 8);
  opt.on_epoch = [&, tag](int epoch, double loss) {
    if ((epoch + 1) % 10 == 0 || epoch + 1 == st.epochs)
      log.info(tag + " epoch " + std::to_string(epoch + 1) + "/" + std::to_string(st.epochs) +
               " loss " + format_number(loss));
  };
  log.info("training " + tag + " on " + std::to_string(samples.size()) + " slices");
  auto result = nn::train(model, samples, opt);

  fs::create_directories(cache);
  const fs::path tmp = ckpt.string() + ".tmp";
  nn::save_checkpoint(model, tmp);
  fs::rename(tmp, ckpt);
  nn::write_loss_history(loss_file.string() + ".tmp", result.epoch_loss);
  fs::rename(loss_file.string() + ".tmp", loss_file);
  write_text(key_file, key);
  return {std::move(model), std::move(result.epoch_loss), std::move(result.draws), false, ckpt};
}

void write_draw_log(const std::vector<nn::DrawLogEntry>& draws, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,batch,sample,flip_h,flip_v,rotation_deg,iia_x0,iia_y0,iia_theta\n";
  for (const auto& d : draws) {
    out << (d.epoch + 1) << ',' << d.batch << ',' << d.sample << ',';
    if (d.draw.flip)
      out << int(d.draw.flip->horizontal) << ',' << int(d.draw.flip->vertical) << ',';
    else
      out << "NA,NA,";
    out << format_optional(d.draw.rotation_deg) << ',';
    if (d.draw.iia)
      out << format_number(d.draw.iia->x0_ref) << ',' << format_number(d.draw.iia->y0_ref) << ','
          << format_number(d.draw.iia->theta_deg) << '\n';
    else
      out << "NA,NA,NA\n";
  }
}

// ---- segmentation ------------------------------------------------------------

IcvResult segment_icv(nn::UNet<float>& icv_model, const IntensityVolume& volume, const ExperimentConfig& config) {
  IcvResult r;
  r.raw = BinaryMask3D(volume.width(), volume.height(), volume.depth(), volume.spacing());
  for (int z = 0; z < volume.depth(); ++z) {
    const Slice2D slice = get_slice(volume, z);
    // A constant slice shows no anatomy; the network output on it is meaningless.
    const auto [lo, hi] = std::minmax_element(slice.data().begin(), slice.data().end());
    if (*lo == *hi) continue;
    put_slice(r.raw, z, nn::segment_slice(icv_model, slice));
  }
  r.filtered = filter_small_components(r.raw, config.min_component_mm3, static_cast<Connectivity>(config.connectivity));
  r.roi = compute_roi(r.filtered, config.roi_margin, config.tissue.net.size_multiple());
  return r;
}

LabelVolume segment_tissue(nn::UNet<float>& tissue_model, const IntensityVolume& volume, const IcvResult& icv) {
  const auto crop = crop_to_roi(volume, icv.roi);
  LabelVolume labels(crop.width(), crop.height(), crop.depth(), crop.spacing());
  for (int z = 0; z < crop.depth(); ++z) put_slice(labels, z, nn::segment_slice(tissue_model, get_slice(crop, z)));
  LabelVolume out(volume.width(), volume.height(), volume.depth(), volume.spacing());
  embed_roi(out, labels, icv.roi);
  auto data = out.data();
  const auto mask = icv.filtered.data();
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!mask[i]) data[i] = 0;
  return out;
}

LabelVolume segment_volume(nn::UNet<float>& icv_model, nn::UNet<float>& tissue_model, const IntensityVolume& volume,
                           const ExperimentConfig& config) {
  return segment_tissue(tissue_model, volume, segment_icv(icv_model, volume, config));
}

// ---- commands ----------------------------------------------------------------

Dataset cmd_phantom(const ExperimentConfig& config, Logger& log) {
  Dataset ds = build_dataset(config);
  write_dataset(ds, config.out / "data");
  log.info("wrote " + std::to_string(ds.cases.size()) + " cases to " + (config.out / "data").string());
  return ds;
}

Dataset ensure_dataset(const ExperimentConfig& config, Logger& log) {
  const fs::path dir = config.out / "data";
  if (!fs::exists(dir / "manifest.txt")) return cmd_phantom(config, log);
  Dataset ds = read_dataset(dir);
  if (ds.seed != config.seed)
    throw ConfigError("dataset in " + dir.string() + " was generated with seed " + std::to_string(ds.seed));
  return ds;
}

namespace {

std::vector<nn::TrainSample> stage_samples(const ExperimentConfig& config, const Dataset& ds, Stage stage,
                                           Logger& log) {
  if (stage == Stage::Icv) return icv_training_set(ds);
  if (config.tissue_reference_roi) return tissue_training_set(ds, config);
  auto icv = train_stage(config, Stage::Icv, config.augment_for(config.icv.arm), icv_training_set(ds), log);
  return tissue_training_set(ds, config, &icv.model);
}

}  // namespace

TrainedModel cmd_train(const ExperimentConfig& config, Stage stage, Logger& log) {
  config.validate();
  const Dataset ds = ensure_dataset(config, log);
  auto samples = stage_samples(config, ds, stage, log);
  auto trained = train_stage(config, stage, config.augment_for(config.stage(stage).arm), samples, log, true);
  const std::string name(stage_name(stage));
  nn::save_checkpoint(trained.model, config.out / (name + ".unet"));
  nn::write_loss_history(config.out / (name + "_loss.csv"), trained.loss_history);
  write_draw_log(trained.draws, config.out / (name + "_draws.csv"));
  return trained;
}

std::map<int, LabelVolume> cmd_segment(const ExperimentConfig& config, Logger& log) {
  config.validate();
  const Dataset ds = ensure_dataset(config, log);
  auto icv = nn::load_checkpoint(config.out / "icv.unet");
  auto tissue = nn::load_checkpoint(config.out / "tissue.unet");
  if (icv.config().out_classes != 2 || tissue.config().out_classes != kNumClasses)
    throw FormatError("checkpoints do not match the icv/tissue stages");
  const fs::path dir = config.out / "pred";
  fs::create_directories(dir);
  std::map<int, LabelVolume> out;
  std::ostringstream rois;
  rois << "# case x0 y0 z0 x1 y1 z1\n";
  for (const DatasetCase* c : ds.select(Split::Test)) {
    const IcvResult r = segment_icv(icv, c->intensity, config);
    auto labels = segment_tissue(tissue, c->intensity, r);
    save_volume(labels, case_labels_path(dir, c->id));
    out.emplace(c->id, std::move(labels));
    rois << c->id << ' ' << r.roi.x0 << ' ' << r.roi.y0 << ' ' << r.roi.z0 << ' ' << r.roi.x1 << ' ' << r.roi.y1
         << ' ' << r.roi.z1 << '\n';
  }
  write_text(dir / "rois.txt", rois.str());
  log.info("segmented " + std::to_string(out.size()) + " test cases into " + dir.string());
  return out;
}

Evaluation evaluate_predictions(const Dataset& dataset, const std::map<int, LabelVolume>& predictions) {
  Evaluation ev;
  for (const DatasetCase* c : dataset.select(Split::Test)) {
    const auto it = predictions.find(c->id);
    if (it == predictions.end()) throw Error("no prediction for test case " + std::to_string(c->id));
    if (!it->second.same_geometry(c->truth)) throw ShapeError("prediction geometry differs for case " + std::to_string(c->id));
    auto s = score_volume(c->truth, it->second, c->id, c->artifact_flags);
    ev.scores.insert(ev.scores.end(), s.begin(), s.end());
  }
  ev.report = aggregate(ev.scores);
  return ev;
}

Evaluation cmd_evaluate(const ExperimentConfig& config, Logger& log) {
  const Dataset ds = ensure_dataset(config, log);
  std::map<int, LabelVolume> preds;
  for (const DatasetCase* c : ds.select(Split::Test))
    preds.emplace(c->id, load_labels(case_labels_path(config.out / "pred", c->id)));
  auto ev = evaluate_predictions(ds, preds);
  write_scores_csv(ev.scores, config.out / "scores.csv");
  write_report_csv(ev.report, config.out / "report.csv");
  log.info("mean DC (all slices) " + format_optional(ev.report.mean(Subset::All).dc));
  return ev;
}

void write_comparison_csv(const std::vector<ArmResult>& results, const std::string& key_column, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << key_column << ",class";
  for (Subset s : kSubsets) out << ",dc_" << subset_name(s) << ",msd_" << subset_name(s);
  out << '\n';
  for (const auto& r : results)
    for (int cls = 1; cls < kNumClasses; ++cls) {
      out << r.name << ',' << class_name(cls);
      for (Subset s : kSubsets) {
        const auto& cs = r.evaluation.report.at(s, cls);
        out << ',' << format_optional(cs.dc) << ',' << format_optional(cs.msd);
      }
      out << '\n';
    }
}

void write_comparison_summary(const std::vector<ArmResult>& results, const std::string& key_column,
                              const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << key_column << ",subset,dc,msd\n";
  for (const auto& r : results)
    for (Subset s : kSubsets) {
      const auto& m = r.evaluation.report.mean(s);
      out << r.name << ',' << subset_name(s) << ',' << format_optional(m.dc) << ',' << format_optional(m.msd) << '\n';
    }
}

namespace {

struct Variant {
  std::string name;
  AugmentConfig augment;
};

/// Trains the shared ICV network, segments the test ICVs once and then trains
/// and evaluates one tissue network per distinct variant.
std::vector<ArmResult> compare_variants(const ExperimentConfig& config, const std::vector<Variant>& variants,
                                        const fs::path& detail_dir, Logger& log) {
  config.validate();
  const Dataset ds = ensure_dataset(config, log);
  auto icv = train_stage(config, Stage::Icv, config.augment_for(config.icv.arm), icv_training_set(ds), log);
  const auto tissue_samples = config.tissue_reference_roi ? tissue_training_set(ds, config)
                                                          : tissue_training_set(ds, config, &icv.model);
  std::map<int, IcvResult> icv_results;
  for (const DatasetCase* c : ds.select(Split::Test)) icv_results.emplace(c->id, segment_icv(icv.model, c->intensity, config));

  // Variants with identical training settings share one model.
  std::vector<std::string> keys;
  std::vector<std::size_t> unique_of(variants.size());
  std::vector<std::size_t> unique;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const std::string k = model_key(config, Stage::Tissue, variants[i].augment);
    const auto it = std::find(keys.begin(), keys.end(), k);
    if (it == keys.end()) {
      unique_of[i] = keys.size();
      keys.push_back(k);
      unique.push_back(i);
    } else {
      unique_of[i] = static_cast<std::size_t>(it - keys.begin());
    }
  }

  std::vector<ArmResult> unique_results(unique.size());
  run_jobs(unique.size(), config.jobs, [&](std::size_t u) {
    const Variant& v = variants[unique[u]];
    auto trained = train_stage(config, Stage::Tissue, v.augment, tissue_samples, log);
    std::map<int, LabelVolume> preds;
    for (const auto& [id, icv_result] : icv_results) {
      const DatasetCase& c = *std::find_if(ds.cases.begin(), ds.cases.end(), [id = id](const auto& x) { return x.id == id; });
      preds.emplace(id, segment_tissue(trained.model, c.intensity, icv_result));
    }
    unique_results[u] = {v.name, evaluate_predictions(ds, preds), trained.reused};
    log.info("evaluated " + v.name + ": mean DC with artifact " +
             format_optional(unique_results[u].evaluation.report.mean(Subset::WithArtifact).dc));
  });

  std::vector<ArmResult> results;
  fs::create_directories(detail_dir);
  for (std::size_t i = 0; i < variants.size(); ++i) {
    ArmResult r = unique_results[unique_of[i]];
    r.name = variants[i].name;
    const fs::path dir = detail_dir / r.name;
    fs::create_directories(dir);
    write_scores_csv(r.evaluation.scores, dir / "scores.csv");
    write_report_csv(r.evaluation.report, dir / "report.csv");
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace

std::vector<ArmResult> cmd_ablation(const ExperimentConfig& config, Logger& log) {
  std::vector<Variant> variants;
  for (AblationArm a : kAblationArms) variants.push_back({std::string(arm_name(a)), config.augment_for(a)});
  auto results = compare_variants(config, variants, config.out / "ablation", log);
  write_comparison_csv(results, "arm", config.out / "ablation.csv");
  write_comparison_summary(results, "arm", config.out / "ablation_summary.csv");
  return results;
}

std::vector<ArmResult> cmd_sweep(const ExperimentConfig& config, Logger& log) {
  std::vector<Variant> variants;
  for (double p : config.sweep_proportions)
    variants.push_back({format_number(p), config.augment_for(AblationArm::FlipRotIIA, p)});
  auto results = compare_variants(config, variants, config.out / "sweep", log);
  write_comparison_csv(results, "proportion", config.out / "sweep.csv");
  write_comparison_summary(results, "proportion", config.out / "sweep_summary.csv");
  return results;
}

void cmd_augment_preview(const ExperimentConfig& config, int case_id, int slice, const fs::path& dir, Logger& log) {
  const Dataset ds = ensure_dataset(config, log);
  const auto it = std::find_if(ds.cases.begin(), ds.cases.end(), [&](const auto& c) { return c.id == case_id; });
  if (it == ds.cases.end()) throw ConfigError("no case " + std::to_string(case_id));
  if (slice < 0 || slice >= it->intensity.depth()) throw ConfigError("slice index out of range");
  const Slice2D original = normalize_slice(get_slice(it->intensity, slice));
  RandomStream rng = RandomStream(config.seed).derive("preview").derive({static_cast<std::uint64_t>(case_id),
                                                                         static_cast<std::uint64_t>(slice)});
  const auto iia = apply_iia(original, config.iia, rng);
  const auto field = field_for_draw(original.width(), original.height(), iia.draw);
  Slice2D field_slice(original.width(), original.height(), original.spacing_x(), original.spacing_y());
  for (std::size_t i = 0; i < field.values.size(); ++i) field_slice.values()[i] = static_cast<float>(field.values[i]);
  field_slice = normalize_slice(field_slice);

  const int w = original.width(), h = original.height();
  Slice2D strip(3 * w, h, original.spacing_x(), original.spacing_y());
  const Slice2D* panels[] = {&original, &iia.slice, &field_slice};
  for (int p = 0; p < 3; ++p)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) strip.at(p * w + x, y) = panels[p]->at(x, y);
  fs::create_directories(dir);
  const std::string stem = "case_" + std::to_string(case_id) + "_slice_" + std::to_string(slice);
  write_pgm(strip, dir / (stem + "_iia.pgm"));
  write_label_ppm(get_slice(it->truth, slice), dir / (stem + "_labels.ppm"));
  log.info("IIA draw x0=" + format_number(iia.draw.x0_ref) + " y0=" + format_number(iia.draw.y0_ref) +
           " theta=" + format_number(iia.draw.theta_deg));
}

}  // namespace fseg
