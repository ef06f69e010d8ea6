#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iterator>
#include <sstream>

#include "fetalseg/nnet/checkpoint.hpp"
#include "fetalseg/pipeline/commands.hpp"
#include "oracles.hpp"

using namespace fseg;
namespace fs = std::filesystem;

namespace {

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string f; std::getline(ss, f, sep);) out.push_back(f);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

// Small enough that a full train/segment/evaluate cycle takes seconds.
ExperimentConfig tiny_config(const std::string& name) {
  ExperimentConfig c;
  c.out = oracle::scratch_dir(name);
  c.seed = 3;
  c.phantom.n_volumes = 4;
  c.phantom.slices_per_volume = 8;
  for (StageConfig* st : {&c.icv, &c.tissue}) {
    st->net.depth = 2;
    st->net.base_channels = 2;
    st->epochs = 1;
    st->batch_size = 8;
  }
  c.sweep_proportions = {0.0, 1.0};
  c.validate();
  return c;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("arm names and augmentations") {
    for (AblationArm a : kAblationArms) CHECK(arm_from_name(arm_name(a)) == a);
    CHECK(arm_name(AblationArm::FlipRotIIA) == "flip+rot+IIA");
    CHECK_THROWS_AS(arm_from_name("rot"), ConfigError);
    CHECK(stage_from_name("tissue") == Stage::Tissue);
    CHECK_THROWS_AS(stage_from_name("brain"), ConfigError);

    const ExperimentConfig c;
    const auto none = c.augment_for(AblationArm::None);
    CHECK_FALSE(none.flip);
    CHECK_FALSE(none.rotate);
    CHECK_FALSE(none.iia.has_value());
    const auto flip = c.augment_for(AblationArm::Flip);
    CHECK(flip.flip);
    CHECK_FALSE(flip.rotate);
    const auto fr = c.augment_for(AblationArm::FlipRot);
    CHECK(fr.flip);
    CHECK(fr.rotate);
    CHECK_FALSE(fr.iia.has_value());
    const auto iia = c.augment_for(AblationArm::FlipRotIIA);
    REQUIRE(iia.iia.has_value());
    CHECK(iia.iia->proportion == c.iia.proportion);
    CHECK(c.augment_for(AblationArm::FlipRotIIA, 0.2).iia->proportion == 0.2);
  }

  TEST_CASE("config text round trip") {
    ExperimentConfig c;
    c.seed = 99;
    c.tissue.arm = AblationArm::Flip;
    c.iia.x0 = {1.5, 2.25};
    c.sweep_proportions = {0.1, 0.3};
    c.phantom.class_intensity[3].mean = 0.123456789;
    const std::string text = dump_config(c);
    std::istringstream in(text);
    const auto back = parse_config(in);
    CHECK(dump_config(back) == text);
    CHECK(back.seed == 99);
    CHECK(back.tissue.arm == AblationArm::Flip);
    CHECK(back.iia.x0.hi == 2.25);
  }

  TEST_CASE("config parsing errors") {
    auto parse = [](const std::string& s) {
      std::istringstream in(s);
      return parse_config(in);
    };
    CHECK(parse("# comment only\n\nseed = 5  # trailing\n").seed == 5);
    CHECK_THROWS_AS(parse("nonsense = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse("seed = five\n"), ConfigError);
    CHECK_THROWS_AS(parse("seed 5\n"), ConfigError);
    CHECK_THROWS_AS(parse("icv.arm = sideways\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/file.cfg"), ConfigError);
  }

  TEST_CASE("config validation") {
    ExperimentConfig c;
    CHECK_NOTHROW(c.validate());
    auto bad = c;
    bad.train_fraction = 0.7;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.tissue.batch_size = 1000;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.sweep_proportions = {1.5};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.tissue.net.out_classes = 3;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.connectivity = 8;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.connectivity = 6;
    CHECK_NOTHROW(bad.validate());
    CHECK(c.effective_phantom().seed == c.seed);
  }

  TEST_CASE("dataset is deterministic and the manifest matches the injection") {
    auto cfg = tiny_config("dataset");
    const auto a = build_dataset(cfg);
    const auto b = build_dataset(cfg);
    CHECK(manifest_text(a) == manifest_text(b));
    REQUIRE(a.cases.size() == 4);
    CHECK(a.select(Split::Train).size() == 2);
    CHECK(a.select(Split::Test).size() == 2);

    const auto ph = cfg.effective_phantom();
    int flagged = 0;
    for (const auto& c : a.cases) {
      const auto clean = generate_case(ph, c.id);
      CHECK(c.truth == clean.truth);
      REQUIRE(c.artifact_flags.size() == 8);
      for (int z = 0; z < 8; ++z) {
        const auto s0 = clean.intensity.slice_view(z);
        const auto s1 = c.intensity.slice_view(z);
        const bool changed = !std::equal(s0.begin(), s0.end(), s1.begin());
        CHECK(changed == (c.artifact_flags[z] != 0));
        if (c.split == Split::Train) CHECK(c.artifact_flags[z] == 0);
        flagged += c.artifact_flags[z];
      }
    }
    CHECK(flagged > 0);

    write_dataset(a, cfg.out / "data");
    const auto r = read_dataset(cfg.out / "data");
    CHECK(manifest_text(r) == manifest_text(a));
    for (std::size_t i = 0; i < a.cases.size(); ++i) {
      CHECK(r.cases[i].intensity == a.cases[i].intensity);
      CHECK(r.cases[i].truth == a.cases[i].truth);
    }
    const auto m = lines_of(cfg.out / "data" / "manifest.txt");
    CHECK(m[0] == "seed 3");
    CHECK(m[1].rfind("case 0 ", 0) == 0);

    cfg.seed = 4;
    CHECK_FALSE(manifest_text(build_dataset(cfg)) == manifest_text(a));
  }

  TEST_CASE("phantom command writes one image/label pair per volume") {
    ExperimentConfig cfg;
    cfg.out = oracle::scratch_dir("phantom12");
    Logger log;
    const auto ds = cmd_phantom(cfg, log);
    CHECK(ds.cases.size() == 12);
    int pairs = 0;
    for (const auto& c : ds.cases)
      pairs += fs::exists(case_image_path(cfg.out / "data", c.id)) && fs::exists(case_labels_path(cfg.out / "data", c.id));
    CHECK(pairs == 12);
    const std::string first = read_all(cfg.out / "data" / "manifest.txt");
    cmd_phantom(cfg, log);
    CHECK(read_all(cfg.out / "data" / "manifest.txt") == first);
    CHECK(ensure_dataset(cfg, log).cases.size() == 12);
    cfg.seed = 2;
    CHECK_THROWS_AS(ensure_dataset(cfg, log), ConfigError);
  }

  TEST_CASE("train command: draw logs and reproducible checkpoints") {
    auto cfg = tiny_config("train_cmd");
    Logger log;
    cfg.icv.arm = AblationArm::None;
    cmd_train(cfg, Stage::Icv, log);
    const auto none = lines_of(cfg.out / "icv_draws.csv");
    REQUIRE(none.size() > 1);
    CHECK(none[0] == "epoch,batch,sample,flip_h,flip_v,rotation_deg,iia_x0,iia_y0,iia_theta");
    for (std::size_t i = 1; i < none.size(); ++i) {
      const auto f = split(none[i], ',');
      REQUIRE(f.size() == 9);
      for (int k = 3; k < 9; ++k) CHECK(f[k] == "NA");
    }

    cfg.tissue.arm = AblationArm::FlipRotIIA;
    cfg.iia.proportion = 1.0;
    const auto t1 = cmd_train(cfg, Stage::Tissue, log);
    const auto iia = lines_of(cfg.out / "tissue_draws.csv");
    REQUIRE(iia.size() > 1);
    for (std::size_t i = 1; i < iia.size(); ++i) {
      const auto f = split(iia[i], ',');
      REQUIRE(f.size() == 9);
      for (int k = 3; k < 9; ++k) CHECK(f[k] != "NA");
    }
    const std::string ckpt = read_all(cfg.out / "tissue.unet");
    const std::string draws = read_all(cfg.out / "tissue_draws.csv");
    cmd_train(cfg, Stage::Tissue, log);
    CHECK(read_all(cfg.out / "tissue.unet") == ckpt);
    CHECK(read_all(cfg.out / "tissue_draws.csv") == draws);
    CHECK(lines_of(cfg.out / "tissue_loss.csv").size() == static_cast<std::size_t>(cfg.tissue.epochs) + 1);
  }

  TEST_CASE("model cache is keyed on the training settings") {
    const ExperimentConfig c;
    auto other = c;
    other.out = "elsewhere";
    other.jobs = 4;
    other.sweep_proportions = {0.5};
    const auto aug = c.augment_for(AblationArm::FlipRot);
    CHECK(model_key(c, Stage::Tissue, aug) == model_key(other, Stage::Tissue, aug));
    CHECK(model_key(c, Stage::Tissue, aug) == model_key(c, Stage::Tissue, c.augment_for(AblationArm::FlipRotIIA, 0.0)));
    CHECK(model_key(c, Stage::Tissue, aug) != model_key(c, Stage::Tissue, c.augment_for(AblationArm::FlipRotIIA)));
    other = c;
    other.learning_rate = 1e-3;
    CHECK(model_key(c, Stage::Icv, aug) != model_key(other, Stage::Icv, aug));
    other = c;
    other.tissue.epochs = 3;
    CHECK(model_key(c, Stage::Icv, aug) == model_key(other, Stage::Icv, aug));
    CHECK(model_key(c, Stage::Tissue, aug) != model_key(other, Stage::Tissue, aug));
  }

  TEST_CASE("train_stage reuses cached models") {
    auto cfg = tiny_config("cache");
    Logger log;
    const auto ds = build_dataset(cfg);
    const auto samples = icv_training_set(ds);
    CHECK(samples.size() == 16);
    const auto aug = cfg.augment_for(AblationArm::FlipRot);
    const auto a = train_stage(cfg, Stage::Icv, aug, samples, log);
    CHECK_FALSE(a.reused);
    const auto b = train_stage(cfg, Stage::Icv, aug, samples, log);
    CHECK(b.reused);
    CHECK(b.loss_history == a.loss_history);
    const auto sa = a.model.state_buffers(), sb = b.model.state_buffers();
    for (std::size_t i = 0; i < sa.size(); ++i) CHECK(std::equal(sa[i].begin(), sa[i].end(), sb[i].begin()));
    cfg.reuse_models = false;
    CHECK_FALSE(train_stage(cfg, Stage::Icv, aug, samples, log).reused);
  }

  TEST_CASE("tissue training set uses one canvas inside the ICV") {
    auto cfg = tiny_config("tissue_set");
    const auto ds = build_dataset(cfg);
    const auto samples = tissue_training_set(ds, cfg);
    REQUIRE(samples.size() == 16);
    for (const auto& s : samples) {
      CHECK(s.image.width() == samples[0].image.width());
      CHECK(s.image.height() == samples[0].image.height());
      CHECK(s.image.width() % 4 == 0);
      CHECK(s.image.height() % 4 == 0);
    }
  }

  TEST_CASE("tissue output stays inside the filtered ICV and keeps the geometry") {
    auto cfg = tiny_config("containment");
    const auto ds = build_dataset(cfg);
    const auto* c = ds.select(Split::Test).front();
    nn::UNet<float> tissue(cfg.tissue.net, RandomStream(8));
    IcvResult icv;
    icv.raw = icv_from_labels(c->truth);
    // keep only the upper half so containment is not trivially satisfied
    for (int z = 0; z < icv.raw.depth(); ++z)
      for (int y = icv.raw.height() / 2; y < icv.raw.height(); ++y)
        for (int x = 0; x < icv.raw.width(); ++x) icv.raw.at(x, y, z) = 0;
    icv.filtered = filter_small_components(icv.raw, 0.0);
    icv.roi = compute_roi(icv.filtered, cfg.roi_margin, cfg.tissue.net.size_multiple());
    const auto out = segment_tissue(tissue, c->intensity, icv);
    CHECK(out.same_geometry(c->intensity));
    for (std::size_t i = 0; i < out.size(); ++i)
      if (out.data()[i] != 0) REQUIRE(icv.filtered.data()[i] == 1);
  }

  TEST_CASE("segment, evaluate and all-zero input") {
    auto cfg = tiny_config("segment");
    Logger log;
    cmd_train(cfg, Stage::Icv, log);
    cmd_train(cfg, Stage::Tissue, log);
    auto icv = nn::load_checkpoint(cfg.out / "icv.unet");
    auto tissue = nn::load_checkpoint(cfg.out / "tissue.unet");

    const IntensityVolume zero(64, 64, 8, cfg.phantom.spacing, 0.0f);
    try {
      const auto out = segment_volume(icv, tissue, zero, cfg);
      CHECK(out.same_geometry(zero));
      for (auto v : out.data()) CHECK(v == 0);
    } catch (const NoIcvError&) {
      CHECK(true);
    }

    std::map<int, LabelVolume> preds;
    try {
      preds = cmd_segment(cfg, log);
    } catch (const NoIcvError&) {
      // one epoch of a two-channel net may not find any ICV; containment is covered above
      MESSAGE("tiny ICV network found no ICV; skipping the evaluation checks");
      return;
    }
    const auto ds = ensure_dataset(cfg, log);
    for (const auto* c : ds.select(Split::Test)) {
      REQUIRE(preds.count(c->id) == 1);
      CHECK(preds.at(c->id).same_geometry(c->truth));
      CHECK(load_labels(case_labels_path(cfg.out / "pred", c->id)) == preds.at(c->id));
    }
    std::ifstream rois(cfg.out / "pred" / "rois.txt");
    std::string line;
    std::getline(rois, line);
    CHECK(line.front() == '#');
    std::size_t n_rois = 0;
    while (std::getline(rois, line)) {
      std::istringstream ss(line);
      int id = -1;
      RoiBox box;
      ss >> id >> box.x0 >> box.y0 >> box.z0 >> box.x1 >> box.y1 >> box.z1;
      REQUIRE(ss);
      const auto tests = ds.select(Split::Test);
      const auto it = std::find_if(tests.begin(), tests.end(), [id](const auto* t) { return t->id == id; });
      REQUIRE(it != tests.end());
      const auto* c = *it;
      box.margin = cfg.roi_margin;
      CHECK(box == segment_icv(icv, c->intensity, cfg).roi);
      ++n_rois;
    }
    CHECK(n_rois == preds.size());
    const auto ev = cmd_evaluate(cfg, log);
    CHECK(fs::exists(cfg.out / "report.csv"));
    const auto csv = read_scores_csv(cfg.out / "scores.csv");
    CHECK(csv.size() == ev.scores.size());
    const auto again = aggregate(csv);
    for (Subset s : kSubsets) {
      CHECK(again.mean(s).dc == ev.report.mean(s).dc);
      CHECK(again.mean(s).msd == ev.report.mean(s).msd);
    }
  }

  TEST_CASE("perfect predictions and subset partition") {
    auto cfg = tiny_config("perfect");
    const auto ds = build_dataset(cfg);
    std::map<int, LabelVolume> preds;
    for (const auto* c : ds.select(Split::Test)) preds.emplace(c->id, c->truth);
    const auto ev = evaluate_predictions(ds, preds);
    CHECK(*ev.report.mean(Subset::All).dc == 1.0);
    CHECK(*ev.report.mean(Subset::All).msd == 0.0);
    CHECK(ev.report.slice_counts[0] == 16);
    CHECK(ev.report.slice_counts[1] + ev.report.slice_counts[2] == ev.report.slice_counts[0]);
    for (int cls = 1; cls < kNumClasses; ++cls)
      CHECK(ev.report.at(Subset::WithArtifact, cls).n_dc + ev.report.at(Subset::WithoutArtifact, cls).n_dc ==
            ev.report.at(Subset::All, cls).n_dc);
    preds.erase(preds.begin());
    CHECK_THROWS(evaluate_predictions(ds, preds));
  }

  TEST_CASE("ablation and sweep tables") {
    auto cfg = tiny_config("ablation");
    cfg.min_component_mm3 = 0.0;
    cfg.icv.epochs = 3;
    Logger log;
    std::vector<ArmResult> arms;
    try {
      arms = cmd_ablation(cfg, log);
    } catch (const NoIcvError&) {
      FAIL("tiny ICV network found no ICV");
    }
    REQUIRE(arms.size() == 4);
    const auto rows = lines_of(cfg.out / "ablation.csv");
    REQUIRE(rows.size() == 1 + 4 * 7);
    CHECK(rows[0] == "arm,class,dc_all,msd_all,dc_with_artifact,msd_with_artifact,dc_without_artifact,msd_without_artifact");
    const char* order[] = {"none", "flip", "flip+rot", "flip+rot+IIA"};
    for (int a = 0; a < 4; ++a)
      for (int k = 0; k < 7; ++k) {
        const auto f = split(rows[1 + a * 7 + k], ',');
        REQUIRE(f.size() == 8);
        CHECK(f[0] == order[a]);
        CHECK(f[1] == class_name(k + 1));
      }
    CHECK(fs::exists(cfg.out / "ablation_summary.csv"));

    cfg.reuse_models = false;
    const auto sweep = cmd_sweep(cfg, log);
    REQUIRE(sweep.size() == 2);
    const auto srows = lines_of(cfg.out / "sweep.csv");
    CHECK(srows.size() == 1 + 2 * 7);
    CHECK(srows[1].rfind("0,CB,", 0) == 0);
    const auto& fliprot = arms[2].evaluation.report;
    const auto& p0 = sweep[0].evaluation.report;
    for (Subset s : kSubsets)
      for (int cls = 1; cls < kNumClasses; ++cls) {
        const auto& x = fliprot.at(s, cls);
        const auto& y = p0.at(s, cls);
        REQUIRE(x.dc.has_value() == y.dc.has_value());
        if (x.dc) CHECK(std::abs(*x.dc - *y.dc) <= 1e-6);
        REQUIRE(x.msd.has_value() == y.msd.has_value());
        if (x.msd) CHECK(std::abs(*x.msd - *y.msd) <= 1e-6);
      }
  }

  TEST_CASE("run_jobs visits every index and propagates the first failure") {
    for (int jobs : {1, 3}) {
      std::vector<std::atomic<int>> hits(20);
      run_jobs(20, jobs, [&](std::size_t i) { ++hits[i]; });
      for (auto& h : hits) CHECK(h.load() == 1);
      std::atomic<int> done{0};
      try {
        run_jobs(10, jobs, [&](std::size_t i) {
          ++done;
          if (i == 3 || i == 7) throw std::runtime_error("task " + std::to_string(i));
        });
        FAIL("expected an exception");
      } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()) == "task 3");
      }
      CHECK(done.load() == 10);
    }
  }

  TEST_CASE("augment preview files") {
    auto cfg = tiny_config("preview");
    Logger log;
    cmd_phantom(cfg, log);
    cmd_augment_preview(cfg, 0, 3, cfg.out / "preview", log);
    int pgm = 0, ppm = 0;
    for (const auto& e : fs::directory_iterator(cfg.out / "preview")) {
      pgm += e.path().extension() == ".pgm";
      ppm += e.path().extension() == ".ppm";
    }
    CHECK(pgm == 1);
    CHECK(ppm == 1);
    CHECK_THROWS(cmd_augment_preview(cfg, 0, 99, cfg.out / "preview", log));
  }
}
