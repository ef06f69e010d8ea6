#include "fetalseg/phantom.hpp"

#include <cmath>
#include <numbers>

#include "fetalseg/postprocess.hpp"

namespace fseg {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Normalised elliptical radius of (u, v) for an ellipse with semi-axes (a, b).
double ell(double u, double v, double a, double b) { return std::sqrt((u / a) * (u / a) + (v / b) * (v / b)); }

struct Anatomy {
  double cx, cy;        // brain centre, pixels
  double cos_r, sin_r;  // pose rotation
  double a, b;          // brain semi-axes at the central slice
  double wave_amp, wave_freq, wave_phase;
  double vcsf_scale, bgt_scale, cb_scale;
  double shade_dir, shade_amp;
  struct Wave {
    double fx, fy, phase;
  };
  std::array<Wave, 3> texture;
};

Anatomy draw_anatomy(const PhantomConfig& cfg, RandomStream& rng) {
  const double n = cfg.image_size;
  Anatomy an{};
  an.cx = 0.5 * (n - 1) + rng.uniform(-1, 1) * cfg.max_translation * n;
  an.cy = 0.5 * (n - 1) + rng.uniform(-1, 1) * cfg.max_translation * n;
  const double rot = rng.uniform(-1, 1) * cfg.max_rotation_deg * std::numbers::pi / 180.0;
  an.cos_r = std::cos(rot);
  an.sin_r = std::sin(rot);
  an.a = n * rng.uniform(0.26, 0.29);
  an.b = n * rng.uniform(0.29, 0.32);
  an.wave_amp = rng.uniform(0.03, 0.05);
  an.wave_freq = static_cast<double>(5 + rng.below(4));
  an.wave_phase = rng.uniform(0, kTwoPi);
  an.vcsf_scale = rng.uniform(0.85, 1.2);
  an.bgt_scale = rng.uniform(0.9, 1.1);
  an.cb_scale = rng.uniform(0.9, 1.1);
  an.shade_dir = rng.uniform(0, kTwoPi);
  an.shade_amp = rng.uniform(-1, 1) * cfg.acquisition_shading;
  for (auto& w : an.texture) {
    const double f = rng.uniform(2.0, 5.0);
    const double dir = rng.uniform(0, kTwoPi);
    w = {f * std::cos(dir) / n, f * std::sin(dir) / n, rng.uniform(0, kTwoPi)};
  }
  return an;
}

// Regions outside the brain.
enum class Outside { Air, Maternal, Amniotic, Scalp, Skull };

struct Voxel {
  int label = 0;
  Outside outside = Outside::Air;
};

Voxel classify(const PhantomConfig& cfg, const Anatomy& an, double x, double y, int z) {
  const double n = cfg.image_size;
  const int depth = cfg.slices_per_volume;
  // In-plane shrink towards the ends of the stack.
  const double zc = 0.5 * (depth - 1);
  const double zr = 0.75 * depth;
  const double t = (z - zc) / zr;
  const double s = std::sqrt(std::max(0.0, 1.0 - t * t));

  // Brain-frame coordinates; +v points inferior.
  const double dx = x - an.cx, dy = y - an.cy;
  const double u = an.cos_r * dx + an.sin_r * dy;
  const double v = -an.sin_r * dx + an.cos_r * dy;
  const double a = an.a * s, b = an.b * s;
  const double r = ell(u, v, a, b);

  Voxel vox;
  if (r <= 1.0) {
    const double phi = std::atan2(v / b, u / a);
    const double ribbon = 0.70 + an.wave_amp * std::sin(an.wave_freq * phi + an.wave_phase);
    int label = static_cast<int>(TissueClass::WM);
    if (r > 0.86) label = static_cast<int>(TissueClass::eCSF);
    else if (r > ribbon) label = static_cast<int>(TissueClass::cGM);

    const double fz = depth > 1 ? static_cast<double>(z) / (depth - 1) : 0.5;  // 0 anterior .. 1 posterior
    if (r <= 0.86) {
      // Deep structures, anterior-to-posterior ordering along z.
      if (fz <= 0.8 && ell(u, v - 0.14 * b, 0.30 * a * an.bgt_scale, 0.14 * b * an.bgt_scale) <= 1.0)
        label = static_cast<int>(TissueClass::BGT);
      const double vs = an.vcsf_scale * (0.8 + 0.4 * (1.0 - std::abs(fz - 0.4)));
      if (ell(std::abs(u) - 0.27 * a, v + 0.14 * b, 0.09 * a * vs, 0.20 * b * vs) <= 1.0)
        label = static_cast<int>(TissueClass::vCSF);
      if (fz >= 0.25 && ell(u, v - 0.56 * b, 0.12 * a, 0.22 * b) <= 1.0) label = static_cast<int>(TissueClass::BS);
      if (fz >= 0.5) {
        const double grow = an.cb_scale * (0.7 + 0.6 * (fz - 0.5));
        if (ell(std::abs(u) - 0.25 * a, v - 0.60 * b, 0.16 * a * grow, 0.15 * b * grow) <= 1.0)
          label = static_cast<int>(TissueClass::CB);
      }
    }
    vox.label = label;
    return vox;
  }

  // Maternal body: a large ellipse around the image centre.
  const double mx = x - 0.5 * (n - 1), my = y - 0.5 * (n - 1);
  if (r <= 1.12) vox.outside = Outside::Skull;
  else if (r <= 1.25) vox.outside = Outside::Scalp;
  else if (r <= 1.45) vox.outside = Outside::Amniotic;
  else if (ell(mx, my, 0.49 * n, 0.47 * n) <= 1.0) vox.outside = Outside::Maternal;
  else vox.outside = Outside::Air;
  return vox;
}

}  // namespace

void PhantomConfig::validate() const {
  if (n_volumes < 1) throw ConfigError("phantom: n_volumes must be >= 1");
  if (image_size < 8) throw ConfigError("phantom: image_size must be >= 8");
  if (slices_per_volume < 1) throw ConfigError("phantom: slices_per_volume must be >= 1");
  if (net_depth < 0 || net_depth > 10) throw ConfigError("phantom: net_depth out of range");
  if (image_size % (1 << net_depth) != 0) throw ConfigError("phantom: image_size must be divisible by 2^net_depth");
  if (!(spacing.x > 0 && spacing.y > 0 && spacing.z > 0)) throw ConfigError("phantom: spacing must be positive");
  auto check = [](const ClassIntensity& c) {
    if (!(c.noise_std >= 0.0)) throw ConfigError("phantom: noise std must be >= 0");
  };
  for (int c = 1; c < kNumClasses; ++c) check(class_intensity[c]);
  for (const auto* c : {&maternal, &amniotic, &skull, &scalp, &air}) check(*c);
  if (max_translation < 0 || max_rotation_deg < 0) throw ConfigError("phantom: jitter must be >= 0");
}

void TestArtifactConfig::validate() const {
  if (!(fraction >= 0 && fraction <= 1)) throw ConfigError("artifact fraction must lie in [0, 1]");
  if (!(strength >= 0)) throw ConfigError("artifact strength must be >= 0");
  if (!(x0.lo <= x0.hi && y0.lo <= y0.hi && theta.lo <= theta.hi)) throw ConfigError("artifact ranges must be non-empty");
}

PhantomCase generate_case(const PhantomConfig& cfg, int index) {
  cfg.validate();
  RandomStream root = RandomStream(cfg.seed).derive("phantom").derive(static_cast<std::uint64_t>(index));
  RandomStream shape_rng = root.derive("anatomy");
  RandomStream noise_rng = root.derive("noise");
  const Anatomy an = draw_anatomy(cfg, shape_rng);

  const int n = cfg.image_size, depth = cfg.slices_per_volume;
  PhantomCase pc;
  pc.id = index;
  pc.intensity = IntensityVolume(n, n, depth, cfg.spacing, 0.0f);
  pc.truth = LabelVolume(n, n, depth, cfg.spacing, std::uint8_t{0});
  pc.has_injected_artifact.assign(static_cast<std::size_t>(depth), 0);
  pc.artifact_draws.assign(static_cast<std::size_t>(depth), std::nullopt);

  const double shade_cx = std::cos(an.shade_dir), shade_cy = std::sin(an.shade_dir);
  for (int z = 0; z < depth; ++z) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const Voxel vox = classify(cfg, an, x, y, z);
        ClassIntensity ci;
        double texture = 0.0;
        if (vox.label) {
          ci = cfg.class_intensity[vox.label];
        } else {
          switch (vox.outside) {
            case Outside::Air: ci = cfg.air; break;
            case Outside::Skull: ci = cfg.skull; break;
            case Outside::Scalp: ci = cfg.scalp; break;
            case Outside::Amniotic: ci = cfg.amniotic; break;
            case Outside::Maternal:
              ci = cfg.maternal;
              for (const auto& w : an.texture) texture += std::sin(kTwoPi * (w.fx * x + w.fy * y) + w.phase);
              texture *= cfg.background_texture_amplitude / 3.0;
              break;
          }
        }
        // Mild shading first, pixel noise afterwards.
        const double proj = ((x - 0.5 * (n - 1)) * shade_cx + (y - 0.5 * (n - 1)) * shade_cy) / (0.5 * n);
        const double shade = 1.0 + an.shade_amp * proj;
        const double value = (ci.mean + texture) * shade + noise_rng.normal(0.0, ci.noise_std);
        pc.intensity.at(x, y, z) = static_cast<float>(std::max(0.0, value));
        pc.truth.at(x, y, z) = static_cast<std::uint8_t>(vox.label);
      }
    }
  }
  return pc;
}

std::vector<PhantomCase> generate_dataset(const PhantomConfig& config) {
  config.validate();
  std::vector<PhantomCase> out;
  out.reserve(static_cast<std::size_t>(config.n_volumes));
  for (int i = 0; i < config.n_volumes; ++i) {
    PhantomCase c = generate_case(config, i);
    std::array<bool, kNumClasses> present{};
    for (auto code : c.truth.data()) present[code] = true;
    for (int k = 1; k < kNumClasses; ++k)
      if (!present[k])
        throw ConfigError("phantom geometry too small: class " + std::string(class_name(k)) + " missing in case " +
                          std::to_string(i));
    std::size_t icv = 0;
    for (auto code : c.truth.data()) icv += code != 0;
    if (static_cast<double>(icv) * config.spacing.voxel_volume() < kMinComponentVolumeMm3)
      throw ConfigError("phantom ICV is smaller than the connected-component threshold in case " + std::to_string(i));
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<double> test_artifact_multiplier(int width, int height, const IiaDraw& draw, double strength) {
  const MultiplierField f = field_for_draw(width, height, draw);
  double mean = 0.0;
  for (double v : f.values) mean += v;
  mean /= static_cast<double>(f.values.size());
  std::vector<double> out(f.values.size(), 1.0);
  if (strength == 0.0 || !(mean > 0.0)) return out;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::pow(f.values[i] / mean, strength);
  return out;
}

PhantomCase inject_test_artifact(const PhantomCase& c, RandomStream& rng, const TestArtifactConfig& config) {
  config.validate();
  PhantomCase out = c;
  const int w = c.intensity.width(), h = c.intensity.height();
  IIAParams ranges;
  ranges.x0 = config.x0;
  ranges.y0 = config.y0;
  ranges.theta = config.theta;
  for (int z = 0; z < c.intensity.depth(); ++z) {
    const bool flagged = rng.bernoulli(config.fraction);
    const IiaDraw draw = draw_iia(ranges, rng);
    if (!flagged) continue;
    out.has_injected_artifact[z] = 1;
    out.artifact_draws[z] = draw;
    const auto mult = test_artifact_multiplier(w, h, draw, config.strength);
    auto dst = out.intensity.slice_view(z);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>(dst[i] * mult[i]);
  }
  return out;
}

}  // namespace fseg
