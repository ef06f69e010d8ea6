#include "fetalseg/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <utility>

namespace fseg {

std::optional<double> dice_masks(std::span<const std::uint8_t> ref, std::span<const std::uint8_t> pred) {
  if (ref.size() != pred.size()) throw ShapeError("dice: mask sizes differ");
  std::size_t r = 0, p = 0, both = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const bool a = ref[i] != 0, b = pred[i] != 0;
    r += a;
    p += b;
    both += a && b;
  }
  if (r + p == 0) return std::nullopt;
  return 2.0 * static_cast<double>(both) / static_cast<double>(r + p);
}

std::vector<std::uint8_t> mask_boundary(std::span<const std::uint8_t> mask, int w, int h, int d, bool use_z) {
  if (mask.size() != static_cast<std::size_t>(w) * h * d) throw ShapeError("boundary: mask size mismatch");
  std::vector<std::uint8_t> out(mask.size(), 0);
  auto inside = [&](int x, int y, int z) {
    if (x < 0 || y < 0 || z < 0 || x >= w || y >= h || z >= d) return false;
    return mask[(static_cast<std::size_t>(z) * h + y) * w + x] != 0;
  };
  for (int z = 0; z < d; ++z)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = (static_cast<std::size_t>(z) * h + y) * w + x;
        if (!mask[i]) continue;
        bool edge = !inside(x - 1, y, z) || !inside(x + 1, y, z) || !inside(x, y - 1, z) || !inside(x, y + 1, z);
        if (use_z) edge = edge || !inside(x, y, z - 1) || !inside(x, y, z + 1);
        out[i] = edge ? 1 : 0;
      }
  return out;
}

std::vector<double> squared_distance_map(std::span<const std::uint8_t> targets, int w, int h, int d,
                                         const Spacing& spacing) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const std::size_t n = static_cast<std::size_t>(w) * h * d;
  if (targets.size() != n) throw ShapeError("distance map: mask size mismatch");
  auto idx = [w, h](int x, int y, int z) { return (static_cast<std::size_t>(z) * h + y) * w + x; };

  // Pass 1: nearest target along each row, exact integer offsets.
  std::vector<double> gx(n, inf);
  std::vector<int> off(static_cast<std::size_t>(w));
  for (int z = 0; z < d; ++z)
    for (int y = 0; y < h; ++y) {
      int last = -1;
      for (int x = 0; x < w; ++x) {
        if (targets[idx(x, y, z)]) last = x;
        off[x] = last < 0 ? -1 : x - last;
      }
      last = -1;
      for (int x = w - 1; x >= 0; --x) {
        if (targets[idx(x, y, z)]) last = x;
        if (last >= 0 && (off[x] < 0 || last - x < off[x])) off[x] = last - x;
      }
      for (int x = 0; x < w; ++x) {
        if (off[x] < 0) continue;
        const double dx = off[x] * spacing.x;
        gx[idx(x, y, z)] = dx * dx;
      }
    }

  // Pass 2: min over rows within each plane.
  std::vector<double> gy(n, inf);
  for (int z = 0; z < d; ++z)
    for (int x = 0; x < w; ++x)
      for (int y = 0; y < h; ++y) {
        double best = inf;
        for (int q = 0; q < h; ++q) {
          const double g = gx[idx(x, q, z)];
          if (g == inf) continue;
          const double dy = (y - q) * spacing.y;
          best = std::min(best, g + dy * dy);
        }
        gy[idx(x, y, z)] = best;
      }
  if (d == 1) return gy;

  // Pass 3: min over planes.
  std::vector<double> gz(n, inf);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int z = 0; z < d; ++z) {
        double best = inf;
        for (int r = 0; r < d; ++r) {
          const double g = gy[idx(x, y, r)];
          if (g == inf) continue;
          const double dz = (z - r) * spacing.z;
          best = std::min(best, g + dz * dz);
        }
        gz[idx(x, y, z)] = best;
      }
  return gz;
}

std::optional<double> msd_masks(std::span<const std::uint8_t> ref, std::span<const std::uint8_t> pred, int w, int h,
                                int d, const Spacing& spacing, bool use_z) {
  if (ref.size() != pred.size()) throw ShapeError("msd: mask sizes differ");
  const auto br = mask_boundary(ref, w, h, d, use_z);
  const auto bp = mask_boundary(pred, w, h, d, use_z);
  auto any = [](const std::vector<std::uint8_t>& v) {
    for (auto b : v)
      if (b) return true;
    return false;
  };
  if (!any(br) || !any(bp)) return std::nullopt;

  const auto dist_to_pred = squared_distance_map(bp, w, h, d, spacing);
  const auto dist_to_ref = squared_distance_map(br, w, h, d, spacing);
  auto directed = [](const std::vector<std::uint8_t>& from, const std::vector<double>& dist) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < from.size(); ++i)
      if (from[i]) {
        sum += std::sqrt(dist[i]);
        ++count;
      }
    return sum / static_cast<double>(count);
  };
  return 0.5 * (directed(br, dist_to_pred) + directed(bp, dist_to_ref));
}

namespace {

template <typename T>
std::vector<std::uint8_t> class_mask(std::span<const T> labels, int cls) {
  std::vector<std::uint8_t> m(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) m[i] = labels[i] == cls ? 1 : 0;
  return m;
}

void check_class(int cls) {
  if (!is_valid_code(cls)) throw InvariantError("class code out of range: " + std::to_string(cls));
}

}  // namespace

std::optional<double> dice_2d(const LabelSlice& ref, const LabelSlice& pred, int cls) {
  if (!ref.same_geometry(pred)) throw ShapeError("dice_2d: slice geometry differs");
  check_class(cls);
  return dice_masks(class_mask(ref.data(), cls), class_mask(pred.data(), cls));
}

std::optional<double> msd_2d(const LabelSlice& ref, const LabelSlice& pred, int cls, double sx, double sy) {
  if (!ref.same_geometry(pred)) throw ShapeError("msd_2d: slice geometry differs");
  check_class(cls);
  return msd_masks(class_mask(ref.data(), cls), class_mask(pred.data(), cls), ref.width(), ref.height(), 1,
                   Spacing{sx, sy, 1.0}, false);
}

std::optional<double> dice_3d(const LabelVolume& ref, const LabelVolume& pred, int cls) {
  if (!ref.same_geometry(pred)) throw ShapeError("dice_3d: volume geometry differs");
  check_class(cls);
  return dice_masks(class_mask(ref.data(), cls), class_mask(pred.data(), cls));
}

std::optional<double> msd_3d(const LabelVolume& ref, const LabelVolume& pred, int cls, const Spacing& spacing) {
  if (ref.width() != pred.width() || ref.height() != pred.height() || ref.depth() != pred.depth())
    throw ShapeError("msd_3d: volume geometry differs");
  check_class(cls);
  return msd_masks(class_mask(ref.data(), cls), class_mask(pred.data(), cls), ref.width(), ref.height(),
                   ref.depth(), spacing, true);
}

std::vector<SliceClassScore> score_volume(const LabelVolume& ref, const LabelVolume& pred, int volume_id,
                                          std::span<const std::uint8_t> artifact_flags) {
  if (!ref.same_geometry(pred)) throw ShapeError("score_volume: geometry differs");
  if (!artifact_flags.empty() && artifact_flags.size() != static_cast<std::size_t>(ref.depth()))
    throw ShapeError("score_volume: one artifact flag per slice expected");
  std::vector<SliceClassScore> out;
  for (int z = 0; z < ref.depth(); ++z) {
    const LabelSlice r = get_slice(ref, z);
    const LabelSlice p = get_slice(pred, z);
    for (int c = 1; c < kNumClasses; ++c) {
      SliceClassScore s;
      s.volume = volume_id;
      s.slice = z;
      s.cls = c;
      s.dc = dice_2d(r, p, c);
      s.msd = msd_2d(r, p, c, ref.spacing().x, ref.spacing().y);
      s.artifact = !artifact_flags.empty() && artifact_flags[z] != 0;
      out.push_back(s);
    }
  }
  return out;
}

std::string_view subset_name(Subset s) noexcept {
  switch (s) {
    case Subset::All: return "all";
    case Subset::WithArtifact: return "with_artifact";
    case Subset::WithoutArtifact: return "without_artifact";
  }
  return "?";
}

MetricsReport aggregate(std::span<const SliceClassScore> scores) {
  MetricsReport rep;
  std::array<std::array<std::pair<double, double>, kNumClasses>, 3> sums{};
  std::array<std::set<std::pair<int, int>>, 3> slices;
  for (const auto& s : scores) {
    check_class(s.cls);
    for (Subset sub : kSubsets) {
      if (sub == Subset::WithArtifact && !s.artifact) continue;
      if (sub == Subset::WithoutArtifact && s.artifact) continue;
      const int k = static_cast<int>(sub);
      slices[k].insert({s.volume, s.slice});
      auto& cs = rep.classes[k][s.cls];
      if (s.dc) {
        sums[k][s.cls].first += *s.dc;
        ++cs.n_dc;
      }
      if (s.msd) {
        sums[k][s.cls].second += *s.msd;
        ++cs.n_msd;
      }
    }
  }
  for (int k = 0; k < 3; ++k) {
    rep.slice_counts[k] = slices[k].size();
    double dc_sum = 0, msd_sum = 0;
    std::size_t dc_n = 0, msd_n = 0;
    for (int c = 1; c < kNumClasses; ++c) {
      auto& cs = rep.classes[k][c];
      if (cs.n_dc) {
        cs.dc = sums[k][c].first / static_cast<double>(cs.n_dc);
        dc_sum += *cs.dc;
        ++dc_n;
      }
      if (cs.n_msd) {
        cs.msd = sums[k][c].second / static_cast<double>(cs.n_msd);
        msd_sum += *cs.msd;
        ++msd_n;
      }
    }
    auto& g = rep.grand[k];
    g.n_dc = dc_n;
    g.n_msd = msd_n;
    if (dc_n) g.dc = dc_sum / static_cast<double>(dc_n);
    if (msd_n) g.msd = msd_sum / static_cast<double>(msd_n);
  }
  return rep;
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : "NA"; }

void write_scores_csv(std::span<const SliceClassScore> scores, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << "volume,slice,class,dc,msd,artifact\n";
  for (const auto& s : scores)
    out << s.volume << ',' << s.slice << ',' << class_name(s.cls) << ',' << format_optional(s.dc) << ','
        << format_optional(s.msd) << ',' << (s.artifact ? 1 : 0) << '\n';
}

std::vector<SliceClassScore> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "volume,slice,class,dc,msd,artifact") throw FormatError("unexpected scores CSV header");
  auto parse_opt = [](const std::string& f) -> std::optional<double> {
    if (f == "NA") return std::nullopt;
    double v = 0;
    auto r = std::from_chars(f.data(), f.data() + f.size(), v);
    if (r.ec != std::errc{}) throw FormatError("bad number in scores CSV: " + f);
    return v;
  };
  std::vector<SliceClassScore> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw FormatError("scores CSV row needs 6 fields: " + line);
    SliceClassScore s;
    s.volume = std::stoi(f[0]);
    s.slice = std::stoi(f[1]);
    auto c = class_from_name(f[2]);
    if (!c) throw FormatError("unknown class in scores CSV: " + f[2]);
    s.cls = static_cast<int>(*c);
    s.dc = parse_opt(f[3]);
    s.msd = parse_opt(f[4]);
    s.artifact = f[5] == "1";
    out.push_back(s);
  }
  return out;
}

void write_report_csv(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << "subset,metric";
  for (int c = 1; c < kNumClasses; ++c) out << ',' << class_name(c);
  out << ",mean\n";
  for (Subset sub : kSubsets) {
    for (int metric = 0; metric < 2; ++metric) {
      out << subset_name(sub) << ',' << (metric == 0 ? "DC" : "MSD");
      for (int c = 1; c < kNumClasses; ++c) {
        const auto& cs = report.at(sub, c);
        out << ',' << format_optional(metric == 0 ? cs.dc : cs.msd);
      }
      const auto& g = report.mean(sub);
      out << ',' << format_optional(metric == 0 ? g.dc : g.msd) << '\n';
    }
  }
}

}  // namespace fseg
