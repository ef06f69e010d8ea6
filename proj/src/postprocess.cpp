#include "fetalseg/postprocess.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <numeric>

namespace fseg {

namespace {

struct Offset {
  int dx, dy, dz;
};

// Neighbours that precede the current voxel in scan order.
std::vector<Offset> backward_neighbours(Connectivity conn) {
  std::vector<Offset> out;
  for (int dz = -1; dz <= 0; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dz == 0 && (dy > 0 || (dy == 0 && dx >= 0))) continue;
        const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (conn == Connectivity::Six && manhattan > 1) continue;
        if (conn == Connectivity::Eighteen && manhattan > 2) continue;
        out.push_back({dx, dy, dz});
      }
    }
  }
  return out;
}

int find_root(std::vector<int>& parent, int a) {
  while (parent[a] != a) {
    parent[a] = parent[parent[a]];
    a = parent[a];
  }
  return a;
}

}  // namespace

Components connected_components_3d(const BinaryMask3D& mask, Connectivity conn) {
  const int w = mask.width(), h = mask.height(), d = mask.depth();
  const auto nbrs = backward_neighbours(conn);

  // Two-pass labelling with union-find over provisional labels.
  std::vector<int> prov(mask.size(), 0);
  std::vector<int> parent{0};
  for (int z = 0; z < d; ++z) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = mask.index(x, y, z);
        if (!mask.data()[i]) continue;
        int label = 0;
        for (const auto& o : nbrs) {
          const int nx = x + o.dx, ny = y + o.dy, nz = z + o.dz;
          if (nx < 0 || ny < 0 || nz < 0 || nx >= w || ny >= h) continue;
          const int nl = prov[mask.index(nx, ny, nz)];
          if (!nl) continue;
          if (!label) {
            label = find_root(parent, nl);
          } else {
            const int a = find_root(parent, label), b = find_root(parent, nl);
            if (a != b) {
              parent[std::max(a, b)] = std::min(a, b);
              label = std::min(a, b);
            }
          }
        }
        if (!label) {
          label = static_cast<int>(parent.size());
          parent.push_back(label);
        }
        prov[i] = label;
      }
    }
  }

  // Roots are the smallest provisional label of their set, which is also the
  // first one met in scan order, so numbering roots in increasing order gives
  // IDs in scan order of each component's first voxel.
  std::vector<int> dense(parent.size(), 0);
  int next = 0;
  for (std::size_t l = 1; l < parent.size(); ++l) {
    const int r = find_root(parent, static_cast<int>(l));
    if (r == static_cast<int>(l)) dense[l] = ++next;
  }
  Components c;
  c.ids.assign(mask.size(), 0);
  c.counts.assign(static_cast<std::size_t>(next), 0);
  for (std::size_t i = 0; i < prov.size(); ++i) {
    if (!prov[i]) continue;
    const int id = dense[find_root(parent, prov[i])];
    c.ids[i] = id;
    ++c.counts[static_cast<std::size_t>(id - 1)];
  }
  return c;
}

BinaryMask3D filter_small_components(const BinaryMask3D& mask, double min_volume_mm3, Connectivity conn) {
  const Components comps = connected_components_3d(mask, conn);
  const double voxel = mask.spacing().voxel_volume();
  std::vector<bool> keep(comps.size() + 1, false);
  for (std::size_t k = 0; k < comps.size(); ++k)
    keep[k + 1] = static_cast<double>(comps.counts[k]) * voxel >= min_volume_mm3;

  BinaryMask3D out(mask.width(), mask.height(), mask.depth(), mask.spacing(), std::uint8_t{0});
  for (std::size_t i = 0; i < comps.ids.size(); ++i)
    if (comps.ids[i] && keep[static_cast<std::size_t>(comps.ids[i])]) out.data()[i] = 1;
  return out;
}

namespace {

void grow_axis(int& lo, int& hi, int target, int limit) {
  const int size = hi - lo + 1;
  if (size >= target) return;
  if (target > limit) throw ShapeError("ROI cannot be grown beyond the volume extent");
  const int extra = target - size;
  lo -= extra / 2;
  hi += extra - extra / 2;
  if (lo < 0) {
    hi -= lo;
    lo = 0;
  }
  if (hi > limit - 1) {
    lo -= hi - (limit - 1);
    hi = limit - 1;
  }
}

}  // namespace

RoiBox compute_roi(const BinaryMask3D& mask, int margin, int multiple) {
  if (margin < 0) throw InvariantError("ROI margin must be non-negative");
  if (multiple < 1) throw InvariantError("ROI size multiple must be positive");
  RoiBox b{mask.width(), mask.height(), mask.depth(), -1, -1, -1, margin};
  bool any = false;
  for (int z = 0; z < mask.depth(); ++z)
    for (int y = 0; y < mask.height(); ++y)
      for (int x = 0; x < mask.width(); ++x)
        if (mask.at(x, y, z)) {
          any = true;
          b.x0 = std::min(b.x0, x);
          b.y0 = std::min(b.y0, y);
          b.z0 = std::min(b.z0, z);
          b.x1 = std::max(b.x1, x);
          b.y1 = std::max(b.y1, y);
          b.z1 = std::max(b.z1, z);
        }
  if (!any) throw NoIcvError();

  b.x0 = std::max(0, b.x0 - margin);
  b.y0 = std::max(0, b.y0 - margin);
  b.x1 = std::min(mask.width() - 1, b.x1 + margin);
  b.y1 = std::min(mask.height() - 1, b.y1 + margin);

  auto round_up = [multiple](int v) { return (v + multiple - 1) / multiple * multiple; };
  grow_axis(b.x0, b.x1, round_up(b.width()), mask.width());
  grow_axis(b.y0, b.y1, round_up(b.height()), mask.height());
  return b;
}

RoiBox grow_roi(const RoiBox& box, int width, int height, int width_limit, int height_limit) {
  RoiBox b = box;
  grow_axis(b.x0, b.x1, width, width_limit);
  grow_axis(b.y0, b.y1, height, height_limit);
  return b;
}

template <typename T>
Volume<T> crop_to_roi(const Volume<T>& volume, const RoiBox& box) {
  if (box.x0 < 0 || box.y0 < 0 || box.z0 < 0 || box.x1 >= volume.width() || box.y1 >= volume.height() ||
      box.z1 >= volume.depth() || box.x0 > box.x1 || box.y0 > box.y1 || box.z0 > box.z1)
    throw ShapeError("ROI box outside volume bounds");
  Volume<T> out(box.width(), box.height(), box.depth(), volume.spacing());
  for (int z = 0; z < out.depth(); ++z)
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x) out.at(x, y, z) = volume.at(box.x0 + x, box.y0 + y, box.z0 + z);
  return out;
}

template <typename T>
void embed_roi(Volume<T>& target, const Volume<T>& cropped, const RoiBox& box) {
  if (cropped.width() != box.width() || cropped.height() != box.height() || cropped.depth() != box.depth())
    throw ShapeError("cropped volume does not match ROI box");
  if (box.x0 < 0 || box.y0 < 0 || box.z0 < 0 || box.x1 >= target.width() || box.y1 >= target.height() ||
      box.z1 >= target.depth())
    throw ShapeError("ROI box outside target bounds");
  for (int z = 0; z < cropped.depth(); ++z)
    for (int y = 0; y < cropped.height(); ++y)
      for (int x = 0; x < cropped.width(); ++x) target.at(box.x0 + x, box.y0 + y, box.z0 + z) = cropped.at(x, y, z);
}

template Volume<float> crop_to_roi(const Volume<float>&, const RoiBox&);
template Volume<std::uint8_t> crop_to_roi(const Volume<std::uint8_t>&, const RoiBox&);
template void embed_roi(Volume<float>&, const Volume<float>&, const RoiBox&);
template void embed_roi(Volume<std::uint8_t>&, const Volume<std::uint8_t>&, const RoiBox&);

BinaryMask3D icv_from_labels(const LabelVolume& labels) {
  BinaryMask3D out(labels.width(), labels.height(), labels.depth(), labels.spacing(), std::uint8_t{0});
  for (std::size_t i = 0; i < labels.size(); ++i) out.data()[i] = labels.data()[i] != 0 ? 1 : 0;
  return out;
}

}  // namespace fseg
