#include "fetalseg/pipeline/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "fetalseg/metrics.hpp"

namespace fseg {

std::string_view arm_name(AblationArm arm) noexcept {
  switch (arm) {
    case AblationArm::None: return "none";
    case AblationArm::Flip: return "flip";
    case AblationArm::FlipRot: return "flip+rot";
    case AblationArm::FlipRotIIA: return "flip+rot+IIA";
  }
  return "?";
}

AblationArm arm_from_name(std::string_view name) {
  for (auto a : kAblationArms)
    if (arm_name(a) == name) return a;
  throw ConfigError("unknown augmentation arm: " + std::string(name));
}

std::string_view stage_name(Stage s) noexcept { return s == Stage::Icv ? "icv" : "tissue"; }

Stage stage_from_name(std::string_view name) {
  if (name == "icv") return Stage::Icv;
  if (name == "tissue") return Stage::Tissue;
  throw ConfigError("unknown stage: " + std::string(name));
}

void ExperimentConfig::validate() const {
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (!(train_fraction > 0.0 && test_fraction > 0.0) || std::abs(train_fraction + test_fraction - 1.0) > 1e-9)
    throw ConfigError("split fractions must be positive and sum to 1");
  const int n_train = static_cast<int>(std::lround(train_fraction * phantom.n_volumes));
  if (n_train < 1 || n_train >= phantom.n_volumes) throw ConfigError("split leaves an empty train or test set");
  const int train_slices = n_train * phantom.slices_per_volume;
  for (Stage s : {Stage::Icv, Stage::Tissue}) {
    const auto& st = stage(s);
    if (st.batch_size > train_slices)
      throw ConfigError(std::string(stage_name(s)) + ".batch_size exceeds the number of training slices");
    st.net.validate();
    if (st.net.in_channels != 1) throw ConfigError(std::string(stage_name(s)) + ": in_channels must be 1");
    if (st.epochs < 0) throw ConfigError(std::string(stage_name(s)) + ".epochs must be >= 0");
    if (st.batch_size < 1) throw ConfigError(std::string(stage_name(s)) + ".batch_size must be >= 1");
  }
  if (icv.net.out_classes != 2) throw ConfigError("icv network must have 2 classes");
  if (tissue.net.out_classes != kNumClasses) throw ConfigError("tissue network must have 8 classes");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (roi_margin < 0) throw ConfigError("roi.margin must be >= 0");
  if (!(min_component_mm3 >= 0.0)) throw ConfigError("postprocess.min_volume_mm3 must be >= 0");
  if (connectivity != 6 && connectivity != 18 && connectivity != 26)
    throw ConfigError("postprocess.connectivity must be 6, 18 or 26");
  if (sweep_proportions.empty()) throw ConfigError("sweep.proportions is empty");
  for (double p : sweep_proportions)
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("sweep proportions must lie in [0, 1]");
  augment_for(AblationArm::FlipRotIIA).validate();
  effective_phantom().validate();
  artifact.validate();
}

PhantomConfig ExperimentConfig::effective_phantom() const {
  PhantomConfig p = phantom;
  p.seed = seed;
  p.net_depth = std::max(icv.net.depth, tissue.net.depth);
  return p;
}

AugmentConfig ExperimentConfig::augment_for(AblationArm arm) const { return augment_for(arm, iia.proportion); }

AugmentConfig ExperimentConfig::augment_for(AblationArm arm, double proportion) const {
  AugmentConfig a;
  a.flip = arm != AblationArm::None;
  a.flip_prob = flip_prob;
  a.rotate = arm == AblationArm::FlipRot || arm == AblationArm::FlipRotIIA;
  a.rotation = rotation;
  if (arm == AblationArm::FlipRotIIA) {
    a.iia = iia;
    a.iia->proportion = proportion;
  }
  return a;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw ConfigError("invalid value for " + std::string(key) + ": '" + std::string(value) + "'");
}

template <typename N>
N parse_number(std::string_view key, std::string_view value) {
  value = trim(value);
  N out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) bad_value(key, value);
  if constexpr (std::is_floating_point_v<N>)
    if (!std::isfinite(out)) bad_value(key, value);
  return out;
}

/// Numbers separated by commas and/or whitespace.
std::vector<double> parse_list(std::string_view key, std::string_view value) {
  std::vector<double> out;
  std::string buf(value);
  std::replace(buf.begin(), buf.end(), ',', ' ');
  std::istringstream ss(buf);
  std::string tok;
  while (ss >> tok) out.push_back(parse_number<double>(key, tok));
  return out;
}

Range parse_range(std::string_view key, std::string_view value) {
  const auto v = parse_list(key, value);
  if (v.size() != 2 || v[0] > v[1]) bad_value(key, value);
  return {v[0], v[1]};
}

bool parse_bool(std::string_view key, std::string_view value) {
  value = trim(value);
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value);
}

std::string fmt(double v) { return format_number(v); }
std::string fmt(Range r) { return format_number(r.lo) + " " + format_number(r.hi); }
std::string fmt(bool b) { return b ? "true" : "false"; }

struct Setting {
  std::string key;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename M>
Setting int_setting(std::string key, M member) {
  return {key, [key, member](ExperimentConfig& c, std::string_view v) { member(c) = parse_number<int>(key, v); },
          [member](const ExperimentConfig& c) { return std::to_string(member(const_cast<ExperimentConfig&>(c))); }};
}

template <typename M>
Setting double_setting(std::string key, M member) {
  return {key, [key, member](ExperimentConfig& c, std::string_view v) { member(c) = parse_number<double>(key, v); },
          [member](const ExperimentConfig& c) { return fmt(member(const_cast<ExperimentConfig&>(c))); }};
}

template <typename M>
Setting range_setting(std::string key, M member) {
  return {key, [key, member](ExperimentConfig& c, std::string_view v) { member(c) = parse_range(key, v); },
          [member](const ExperimentConfig& c) { return fmt(member(const_cast<ExperimentConfig&>(c))); }};
}

template <typename M>
Setting bool_setting(std::string key, M member) {
  return {key, [key, member](ExperimentConfig& c, std::string_view v) { member(c) = parse_bool(key, v); },
          [member](const ExperimentConfig& c) { return fmt(member(const_cast<ExperimentConfig&>(c))); }};
}

void add_stage(std::vector<Setting>& s, const std::string& p, StageConfig ExperimentConfig::*stage) {
  s.push_back(int_setting(p + ".depth", [stage](ExperimentConfig& c) -> int& { return (c.*stage).net.depth; }));
  s.push_back(int_setting(p + ".base_channels",
                          [stage](ExperimentConfig& c) -> int& { return (c.*stage).net.base_channels; }));
  s.push_back(int_setting(p + ".epochs", [stage](ExperimentConfig& c) -> int& { return (c.*stage).epochs; }));
  s.push_back(int_setting(p + ".batch_size", [stage](ExperimentConfig& c) -> int& { return (c.*stage).batch_size; }));
  s.push_back({p + ".arm", [stage](ExperimentConfig& c, std::string_view v) { (c.*stage).arm = arm_from_name(trim(v)); },
               [stage](const ExperimentConfig& c) { return std::string(arm_name((c.*stage).arm)); }});
}

const std::vector<Setting>& settings() {
  static const std::vector<Setting> table = [] {
    std::vector<Setting> s;
    s.push_back({"seed",
                 [](ExperimentConfig& c, std::string_view v) { c.seed = parse_number<std::uint64_t>("seed", v); },
                 [](const ExperimentConfig& c) { return std::to_string(c.seed); }});
    s.push_back({"out", [](ExperimentConfig& c, std::string_view v) { c.out = std::string(trim(v)); },
                 [](const ExperimentConfig& c) { return c.out.string(); }});
    s.push_back(int_setting("jobs", [](ExperimentConfig& c) -> int& { return c.jobs; }));

    s.push_back(int_setting("phantom.image_size", [](ExperimentConfig& c) -> int& { return c.phantom.image_size; }));
    s.push_back(int_setting("phantom.slices_per_volume",
                            [](ExperimentConfig& c) -> int& { return c.phantom.slices_per_volume; }));
    s.push_back(int_setting("phantom.n_volumes", [](ExperimentConfig& c) -> int& { return c.phantom.n_volumes; }));
    s.push_back(double_setting("phantom.spacing_x", [](ExperimentConfig& c) -> double& { return c.phantom.spacing.x; }));
    s.push_back(double_setting("phantom.spacing_y", [](ExperimentConfig& c) -> double& { return c.phantom.spacing.y; }));
    s.push_back(double_setting("phantom.spacing_z", [](ExperimentConfig& c) -> double& { return c.phantom.spacing.z; }));
    s.push_back(double_setting("phantom.max_rotation_deg",
                               [](ExperimentConfig& c) -> double& { return c.phantom.max_rotation_deg; }));
    s.push_back(double_setting("phantom.max_translation",
                               [](ExperimentConfig& c) -> double& { return c.phantom.max_translation; }));
    s.push_back(double_setting("phantom.background_texture_amplitude",
                               [](ExperimentConfig& c) -> double& { return c.phantom.background_texture_amplitude; }));
    s.push_back(double_setting("phantom.acquisition_shading",
                               [](ExperimentConfig& c) -> double& { return c.phantom.acquisition_shading; }));
    for (int code = 1; code < kNumClasses; ++code) {
      const std::string p = "phantom." + std::string(class_name(code));
      s.push_back(double_setting(
          p + ".mean", [code](ExperimentConfig& c) -> double& { return c.phantom.class_intensity[code].mean; }));
      s.push_back(double_setting(
          p + ".std", [code](ExperimentConfig& c) -> double& { return c.phantom.class_intensity[code].noise_std; }));
    }
    const std::pair<const char*, ClassIntensity PhantomConfig::*> regions[] = {
        {"maternal", &PhantomConfig::maternal}, {"amniotic", &PhantomConfig::amniotic},
        {"skull", &PhantomConfig::skull},       {"scalp", &PhantomConfig::scalp},
        {"air", &PhantomConfig::air}};
    for (const auto& [name, member] : regions) {
      const std::string p = std::string("phantom.") + name;
      s.push_back(double_setting(p + ".mean", [m = member](ExperimentConfig& c) -> double& { return (c.phantom.*m).mean; }));
      s.push_back(
          double_setting(p + ".std", [m = member](ExperimentConfig& c) -> double& { return (c.phantom.*m).noise_std; }));
    }

    s.push_back(double_setting("artifact.fraction", [](ExperimentConfig& c) -> double& { return c.artifact.fraction; }));
    s.push_back(double_setting("artifact.strength", [](ExperimentConfig& c) -> double& { return c.artifact.strength; }));
    s.push_back(range_setting("artifact.x0", [](ExperimentConfig& c) -> Range& { return c.artifact.x0; }));
    s.push_back(range_setting("artifact.y0", [](ExperimentConfig& c) -> Range& { return c.artifact.y0; }));
    s.push_back(range_setting("artifact.theta", [](ExperimentConfig& c) -> Range& { return c.artifact.theta; }));

    s.push_back(double_setting("split.train_fraction", [](ExperimentConfig& c) -> double& { return c.train_fraction; }));
    s.push_back(double_setting("split.test_fraction", [](ExperimentConfig& c) -> double& { return c.test_fraction; }));

    add_stage(s, "icv", &ExperimentConfig::icv);
    add_stage(s, "tissue", &ExperimentConfig::tissue);
    s.push_back(bool_setting("tissue.reference_roi", [](ExperimentConfig& c) -> bool& { return c.tissue_reference_roi; }));

    s.push_back(double_setting("learning_rate", [](ExperimentConfig& c) -> double& { return c.learning_rate; }));
    s.push_back(double_setting("augment.flip_prob", [](ExperimentConfig& c) -> double& { return c.flip_prob; }));
    s.push_back(range_setting("augment.rotation", [](ExperimentConfig& c) -> Range& { return c.rotation; }));
    s.push_back(range_setting("iia.x0", [](ExperimentConfig& c) -> Range& { return c.iia.x0; }));
    s.push_back(range_setting("iia.y0", [](ExperimentConfig& c) -> Range& { return c.iia.y0; }));
    s.push_back(range_setting("iia.theta", [](ExperimentConfig& c) -> Range& { return c.iia.theta; }));
    s.push_back(double_setting("iia.proportion", [](ExperimentConfig& c) -> double& { return c.iia.proportion; }));

    s.push_back(int_setting("roi.margin", [](ExperimentConfig& c) -> int& { return c.roi_margin; }));
    s.push_back(double_setting("postprocess.min_volume_mm3",
                               [](ExperimentConfig& c) -> double& { return c.min_component_mm3; }));
    s.push_back(int_setting("postprocess.connectivity", [](ExperimentConfig& c) -> int& { return c.connectivity; }));
    s.push_back({"sweep.proportions",
                 [](ExperimentConfig& c, std::string_view v) {
                   c.sweep_proportions = parse_list("sweep.proportions", v);
                   if (c.sweep_proportions.empty()) bad_value("sweep.proportions", v);
                 },
                 [](const ExperimentConfig& c) {
                   std::string out;
                   for (std::size_t i = 0; i < c.sweep_proportions.size(); ++i)
                     out += (i ? ", " : "") + fmt(c.sweep_proportions[i]);
                   return out;
                 }});
    s.push_back(bool_setting("reuse_models", [](ExperimentConfig& c) -> bool& { return c.reuse_models; }));
    return s;
  }();
  return table;
}

}  // namespace

void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value) {
  key = trim(key);
  for (const auto& s : settings())
    if (s.key == key) return s.set(config, value);
  throw ConfigError("unknown config key: " + std::string(key));
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view v(line);
    if (const auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
    v = trim(v);
    if (v.empty()) continue;
    const auto eq = v.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    apply_setting(config, v.substr(0, eq), trim(v.substr(eq + 1)));
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  return parse_config(in);
}

std::string dump_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& s : settings()) out += s.key + " = " + s.get(config) + "\n";
  return out;
}

}  // namespace fseg
