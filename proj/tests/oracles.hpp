#pragma once

// Straightforward reference implementations used to cross-check the library.
// They favour obviousness over speed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace oracle {

struct Mask {
  int w = 0, h = 0, d = 1;
  std::vector<std::uint8_t> v;
  [[nodiscard]] bool at(int x, int y, int z) const {
    if (x < 0 || y < 0 || z < 0 || x >= w || y >= h || z >= d) return false;
    return v[(static_cast<std::size_t>(z) * h + y) * w + x] != 0;
  }
};

inline std::optional<double> dice(const Mask& a, const Mask& b) {
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    na += a.v[i] != 0;
    nb += b.v[i] != 0;
    both += a.v[i] != 0 && b.v[i] != 0;
  }
  if (na + nb == 0) return std::nullopt;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

/// Foreground voxels with at least one face neighbour outside the mask; the
/// grid border counts as outside. With use_z = false only in-plane faces count.
inline std::vector<std::array<int, 3>> boundary(const Mask& m, bool use_z) {
  std::vector<std::array<int, 3>> out;
  for (int z = 0; z < m.d; ++z)
    for (int y = 0; y < m.h; ++y)
      for (int x = 0; x < m.w; ++x) {
        if (!m.at(x, y, z)) continue;
        bool edge = !m.at(x - 1, y, z) || !m.at(x + 1, y, z) || !m.at(x, y - 1, z) || !m.at(x, y + 1, z);
        if (use_z) edge = edge || !m.at(x, y, z - 1) || !m.at(x, y, z + 1);
        if (edge) out.push_back({x, y, z});
      }
  return out;
}

inline double mean_nearest(const std::vector<std::array<int, 3>>& from, const std::vector<std::array<int, 3>>& to,
                           double sx, double sy, double sz) {
  double sum = 0.0;
  for (const auto& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) {
      const double dx = (p[0] - q[0]) * sx, dy = (p[1] - q[1]) * sy, dz = (p[2] - q[2]) * sz;
      best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
    }
    sum += best;
  }
  return sum / static_cast<double>(from.size());
}

/// Symmetric mean surface distance between the boundaries of two masks.
inline std::optional<double> msd(const Mask& ref, const Mask& pred, double sx, double sy, double sz, bool use_z) {
  const auto br = boundary(ref, use_z);
  const auto bp = boundary(pred, use_z);
  if (br.empty() || bp.empty()) return std::nullopt;
  return 0.5 * (mean_nearest(br, bp, sx, sy, sz) + mean_nearest(bp, br, sx, sy, sz));
}

/// Breadth-first flood fill. IDs start at 1 in raster order of each
/// component's first voxel; `conn` is 6, 18 or 26.
inline std::vector<int> flood_fill(const Mask& m, int conn, std::vector<std::size_t>* counts = nullptr) {
  std::vector<int> ids(m.v.size(), 0);
  std::vector<std::array<int, 3>> offsets;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int n = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (n == 0) continue;
        if ((conn == 6 && n > 1) || (conn == 18 && n > 2)) continue;
        offsets.push_back({dx, dy, dz});
      }
  auto idx = [&](int x, int y, int z) { return (static_cast<std::size_t>(z) * m.h + y) * m.w + x; };
  int next = 0;
  if (counts) counts->clear();
  for (int z = 0; z < m.d; ++z)
    for (int y = 0; y < m.h; ++y)
      for (int x = 0; x < m.w; ++x) {
        if (!m.at(x, y, z) || ids[idx(x, y, z)]) continue;
        ++next;
        std::size_t count = 0;
        std::vector<std::array<int, 3>> queue{{x, y, z}};
        ids[idx(x, y, z)] = next;
        for (std::size_t q = 0; q < queue.size(); ++q) {
          ++count;
          const auto [cx, cy, cz] = queue[q];
          for (const auto& o : offsets) {
            const int nx = cx + o[0], ny = cy + o[1], nz = cz + o[2];
            if (m.at(nx, ny, nz) && !ids[idx(nx, ny, nz)]) {
              ids[idx(nx, ny, nz)] = next;
              queue.push_back({nx, ny, nz});
            }
          }
        }
        if (counts) counts->push_back(count);
      }
  return ids;
}

/// (x' + x0)^2 + (y' + y0)^2 with (x', y') the pixel rotated by theta degrees
/// about the grid centre, evaluated pixel by pixel.
inline double field_value(int x, int y, int w, int h, double x0, double y0, double theta_deg) {
  const double rad = theta_deg * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
  const double dx = x - cx, dy = y - cy;
  const double xr = cx + c * dx - s * dy;
  const double yr = cy + s * dx + c * dy;
  return (xr + x0) * (xr + x0) + (yr + y0) * (yr + y0);
}

inline Mask random_mask(int w, int h, int d, double density, std::mt19937_64& gen) {
  std::bernoulli_distribution b(density);
  Mask m{w, h, d, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * d)};
  for (auto& v : m.v) v = b(gen) ? 1 : 0;
  return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("fetalseg_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
