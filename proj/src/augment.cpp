#include "fetalseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace fseg {

std::pair<double, double> cos_sin_deg(double deg) noexcept {
  double r = std::fmod(deg, 360.0);
  if (r < 0) r += 360.0;
  if (r == 0.0) return {1.0, 0.0};
  if (r == 90.0) return {0.0, 1.0};
  if (r == 180.0) return {-1.0, 0.0};
  if (r == 270.0) return {0.0, -1.0};
  const double rad = r * std::numbers::pi / 180.0;
  return {std::cos(rad), std::sin(rad)};
}

MultiplierField make_multiplier_field(int width, int height, double x0, double y0, double theta_deg) {
  if (width < 1 || height < 1) throw ShapeError("multiplier field needs a non-empty grid");
  MultiplierField f;
  f.width = width;
  f.height = height;
  f.x0 = x0;
  f.y0 = y0;
  f.x0_ref = x0 * kReferenceGridSize / width;
  f.y0_ref = y0 * kReferenceGridSize / height;
  f.theta_deg = theta_deg;
  f.values.resize(static_cast<std::size_t>(width) * height);

  const auto [c, s] = cos_sin_deg(theta_deg);
  const double cx = 0.5 * (width - 1);
  const double cy = 0.5 * (height - 1);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      const double xr = cx + c * dx - s * dy;
      const double yr = cy + s * dx + c * dy;
      const double a = xr + x0;
      const double b = yr + y0;
      f.values[static_cast<std::size_t>(y) * width + x] = a * a + b * b;
    }
  }
  return f;
}

void IIAParams::validate() const {
  if (!(x0.lo <= x0.hi) || !(y0.lo <= y0.hi) || !(theta.lo <= theta.hi))
    throw ConfigError("IIA ranges must be non-empty");
  if (!(proportion >= 0.0 && proportion <= 1.0)) throw ConfigError("IIA proportion must lie in [0, 1]");
}

IiaDraw draw_iia(const IIAParams& params, RandomStream& rng) {
  IiaDraw d;
  d.x0_ref = rng.uniform(params.x0.lo, params.x0.hi);
  d.y0_ref = rng.uniform(params.y0.lo, params.y0.hi);
  d.theta_deg = rng.uniform(params.theta.lo, params.theta.hi);
  return d;
}

MultiplierField field_for_draw(int width, int height, const IiaDraw& draw) {
  MultiplierField f = make_multiplier_field(width, height, draw.x0_ref * width / kReferenceGridSize,
                                            draw.y0_ref * height / kReferenceGridSize, draw.theta_deg);
  f.x0_ref = draw.x0_ref;
  f.y0_ref = draw.y0_ref;
  return f;
}

Slice2D apply_multiplier(const Slice2D& slice, std::span<const double> values) {
  if (values.size() != slice.size()) throw ShapeError("multiplier size does not match slice");
  std::vector<double> prod(slice.size());
  for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = static_cast<double>(slice.data()[i]) * values[i];

  std::vector<float> out(prod.size(), 0.0f);
  if (!prod.empty()) {
    auto [lo_it, hi_it] = std::minmax_element(prod.begin(), prod.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (hi > lo) {
      const double scale = static_cast<double>(kNormalizedMax) / (hi - lo);
      for (std::size_t i = 0; i < prod.size(); ++i) out[i] = static_cast<float>((prod[i] - lo) * scale);
    }
  }
  return Slice2D(slice.width(), slice.height(), slice.spacing_x(), slice.spacing_y(), std::move(out));
}

Slice2D apply_iia(const Slice2D& slice, const IiaDraw& draw) {
  if (slice.empty()) throw ShapeError("apply_iia needs a non-empty slice");
  return apply_multiplier(slice, field_for_draw(slice.width(), slice.height(), draw).values);
}

IiaResult apply_iia(const Slice2D& slice, const IIAParams& params, RandomStream& rng) {
  IiaDraw d = draw_iia(params, rng);
  return {apply_iia(slice, d), d};
}

// ---- flips / rotation ----------------------------------------------------------------

namespace {

void check_pair(const Slice2D& s, const LabelSlice& l) {
  if (s.width() != l.width() || s.height() != l.height())
    throw ShapeError("intensity and label slice geometry differ");
}

template <typename T>
Slice<T> flip_one(const Slice<T>& in, FlipDraw d) {
  Slice<T> out = in;
  const int w = in.width(), h = in.height();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.at(d.horizontal ? w - 1 - x : x, d.vertical ? h - 1 - y : y) = in.at(x, y);
  return out;
}

}  // namespace

std::pair<Slice2D, LabelSlice> flip(const Slice2D& slice, const LabelSlice& labels, FlipDraw draw) {
  check_pair(slice, labels);
  return {flip_one(slice, draw), flip_one(labels, draw)};
}

FlipResult random_flip(const Slice2D& slice, const LabelSlice& labels, RandomStream& rng, double prob) {
  check_pair(slice, labels);
  FlipDraw d;
  d.horizontal = rng.bernoulli(prob);
  d.vertical = rng.bernoulli(prob);
  auto [s, l] = flip(slice, labels, d);
  return {std::move(s), std::move(l), d};
}

std::pair<Slice2D, LabelSlice> rotate(const Slice2D& slice, const LabelSlice& labels, double angle_deg) {
  check_pair(slice, labels);
  const int w = slice.width(), h = slice.height();
  Slice2D out(w, h, slice.spacing_x(), slice.spacing_y(), 0.0f);
  LabelSlice lab(w, h, labels.spacing_x(), labels.spacing_y(), std::uint8_t{0});

  const auto [c, s] = cos_sin_deg(angle_deg);
  const double cx = 0.5 * (w - 1);
  const double cy = 0.5 * (h - 1);
  constexpr double tol = 1e-9;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Inverse mapping: rotate the output coordinate by -angle.
      const double dx = x - cx;
      const double dy = y - cy;
      double sx = cx + c * dx + s * dy;
      double sy = cy - s * dx + c * dy;

      const long nx = std::lround(sx);
      const long ny = std::lround(sy);
      if (nx >= 0 && nx < w && ny >= 0 && ny < h) lab.at(x, y) = labels.at(static_cast<int>(nx), static_cast<int>(ny));

      if (sx < -tol || sy < -tol || sx > w - 1 + tol || sy > h - 1 + tol) continue;
      sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
      sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
      const int x0 = std::min(static_cast<int>(sx), w - 1);
      const int y0 = std::min(static_cast<int>(sy), h - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const int y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - x0;
      const double fy = sy - y0;
      const double v = (1 - fy) * ((1 - fx) * slice.at(x0, y0) + fx * slice.at(x1, y0)) +
                       fy * ((1 - fx) * slice.at(x0, y1) + fx * slice.at(x1, y1));
      out.at(x, y) = static_cast<float>(v);
    }
  }
  return {std::move(out), std::move(lab)};
}

RotateResult random_rotate(const Slice2D& slice, const LabelSlice& labels, RandomStream& rng, Range angle_range) {
  const double angle = rng.uniform(angle_range.lo, angle_range.hi);
  auto [s, l] = rotate(slice, labels, angle);
  return {std::move(s), std::move(l), angle};
}

// ---- batches ---------------------------------------------------------------------------

void AugmentConfig::validate() const {
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("flip probability must lie in [0, 1]");
  if (!(rotation.lo <= rotation.hi)) throw ConfigError("rotation range must be non-empty");
  if (iia) iia->validate();
}

int iia_count(double proportion, int batch_size) {
  return static_cast<int>(std::lround(proportion * batch_size));
}

AugmentedBatch compose_batch(const std::vector<std::pair<Slice2D, LabelSlice>>& samples,
                             const AugmentConfig& config, const RandomStream& rng) {
  if (samples.empty()) throw ShapeError("compose_batch needs at least one slice");
  config.validate();
  const int n = static_cast<int>(samples.size());

  std::vector<bool> use_iia(n, false);
  if (config.iia) {
    const int k = iia_count(config.iia->proportion, n);
    // Partial Fisher-Yates: the first k entries are a uniform sample without replacement.
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    RandomStream sel = rng.derive("iia-select");
    for (int i = 0; i < k; ++i) {
      const int j = i + static_cast<int>(sel.below(static_cast<std::uint64_t>(n - i)));
      std::swap(order[i], order[j]);
      use_iia[order[i]] = true;
    }
  }

  AugmentedBatch batch;
  batch.images.reserve(n);
  batch.labels.reserve(n);
  batch.draws.reserve(n);
  for (int i = 0; i < n; ++i) {
    RandomStream geo = rng.derive({static_cast<std::uint64_t>(i), 1});
    Slice2D img = samples[i].first;
    LabelSlice lab = samples[i].second;
    check_pair(img, lab);
    DrawRecord rec;
    if (config.flip) {
      auto r = random_flip(img, lab, geo, config.flip_prob);
      img = std::move(r.slice);
      lab = std::move(r.labels);
      rec.flip = r.draw;
    }
    if (config.rotate) {
      auto r = random_rotate(img, lab, geo, config.rotation);
      img = std::move(r.slice);
      lab = std::move(r.labels);
      rec.rotation_deg = r.angle_deg;
    }
    if (use_iia[i]) {
      RandomStream iia_rng = rng.derive({static_cast<std::uint64_t>(i), 2});
      auto r = apply_iia(img, *config.iia, iia_rng);
      img = std::move(r.slice);
      rec.iia = r.draw;
    } else {
      img = normalize_slice(img);
    }
    batch.images.push_back(std::move(img));
    batch.labels.push_back(std::move(lab));
    batch.draws.push_back(rec);
  }
  return batch;
}

}  // namespace fseg
