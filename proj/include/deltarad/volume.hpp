#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace deltarad {

struct Dims {
  int nx = 0, ny = 0, nz = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  bool operator==(const Dims&) const = default;
};

struct Spacing {
  double sx = 1.0, sy = 1.0, sz = 1.0;
  bool operator==(const Spacing&) const = default;
};

/// 3D scalar grid with physical voxel spacing. Data is stored x-fastest,
/// then y, then z.
struct Volume3D {
  Dims dims;
  Spacing spacing;
  std::vector<float> data;

  Volume3D() = default;
  Volume3D(Dims d, Spacing s, float fill = 0.0f)
      : dims(d), spacing(s), data(d.count(), fill) {}

  std::size_t idx(int x, int y, int z) const {
    return static_cast<std::size_t>(z) * dims.ny * dims.nx +
           static_cast<std::size_t>(y) * dims.nx + static_cast<std::size_t>(x);
  }
  float& at(int x, int y, int z) { return data[idx(x, y, z)]; }
  float at(int x, int y, int z) const { return data[idx(x, y, z)]; }
};

/// Binary grid aligned to a Volume3D; values are 0 or 1.
struct Mask3D {
  Dims dims;
  Spacing spacing;
  std::vector<std::uint8_t> data;

  Mask3D() = default;
  Mask3D(Dims d, Spacing s, std::uint8_t fill = 0)
      : dims(d), spacing(s), data(d.count(), fill) {}

  std::size_t idx(int x, int y, int z) const {
    return static_cast<std::size_t>(z) * dims.ny * dims.nx +
           static_cast<std::size_t>(y) * dims.nx + static_cast<std::size_t>(x);
  }
  std::uint8_t& at(int x, int y, int z) { return data[idx(x, y, z)]; }
  std::uint8_t at(int x, int y, int z) const { return data[idx(x, y, z)]; }

  std::size_t count_set() const;
  bool empty_mask() const { return count_set() == 0; }
};

/// Axis-aligned box of voxel indices, inclusive on both ends.
struct BoundingBox {
  std::array<int, 3> lo{0, 0, 0};
  std::array<int, 3> hi{0, 0, 0};

  int extent(int axis) const { return hi[axis] - lo[axis] + 1; }
  bool operator==(const BoundingBox&) const = default;
};

/// Tightest box covering all set voxels; std::nullopt for an all-zero mask
/// (a legitimate outcome: tumours can disappear entirely).
std::optional<BoundingBox> bounding_box(const Mask3D& m);

/// Sub-grid over `b` expanded by `margin` voxels and clamped to the grid.
/// Spacing is preserved.
Volume3D crop(const Volume3D& v, const BoundingBox& b, int margin = 0);
Mask3D crop(const Mask3D& m, const BoundingBox& b, int margin = 0);

/// Trilinear resampling onto `target` dims using the corner-aligned mapping
/// src = dst * (n_src-1)/(n_dst-1) (a single output sample maps to index 0).
/// Spacing is rescaled so the physical extent n*spacing is preserved.
Volume3D resize_trilinear(const Volume3D& v, Dims target);

/// Nearest-neighbour resampling with the same grid mapping; output stays
/// binary.
Mask3D resize_nearest(const Mask3D& m, Dims target);

// --- MetaImage I/O -------------------------------------------------------
//
// Canonical on-disk format: a text header (.mhd) plus a raw little-endian
// payload, x-fastest. Volumes are MET_FLOAT, masks MET_UCHAR.

using MetaImage = std::variant<Volume3D, Mask3D>;

MetaImage load_metaimage(const std::string& header_path);
Volume3D load_volume(const std::string& header_path);
Mask3D load_mask(const std::string& header_path);

void save_metaimage(const Volume3D& v, const std::string& header_path);
void save_metaimage(const Mask3D& m, const std::string& header_path);

}  // namespace deltarad
