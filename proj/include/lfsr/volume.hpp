/**
 * @file volume.hpp
 * @brief Geometry-aware 3D scalar and label volumes plus resampling primitives.
 *
 * Memory layout is a single array with x fastest, then y, then z:
 * linear index = i + nx * (j + ny * k).
 */
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lfsr {

using Index3 = std::array<int, 3>;
using Vec3 = std::array<double, 3>;

/// 4x4 homogeneous voxel-to-world transform, stored row-major:
/// world = M * (i, j, k, 1)^T, element (r, c) at m[4 * r + c].
class AffineTransform {
 public:
  AffineTransform();  // identity
  explicit AffineTransform(const std::array<double, 16>& row_major);

  static AffineTransform identity() { return {}; }
  static AffineTransform scaling(const Vec3& spacing, const Vec3& origin = {0, 0, 0});
  static AffineTransform translation(const Vec3& offset);

  double operator()(int row, int col) const { return m_[4 * row + col]; }
  const std::array<double, 16>& matrix() const { return m_; }

  Vec3 apply(const Vec3& p) const;
  /// Applies only the linear 3x3 part.
  Vec3 apply_linear(const Vec3& v) const;
  double determinant3() const;
  bool invertible() const;
  /// Throws GeometryError when the 3x3 block is singular.
  AffineTransform inverse() const;
  AffineTransform operator*(const AffineTransform& rhs) const;
  bool operator==(const AffineTransform&) const = default;

 private:
  std::array<double, 16> m_;
};

/// Sampling lattice: voxel counts, spacing in mm and voxel-to-world affine.
struct Grid {
  Index3 dims{1, 1, 1};
  Vec3 spacing{1, 1, 1};
  AffineTransform affine;

  /// Axis-aligned grid with `spacing` and world origin at voxel (0,0,0).
  static Grid make(const Index3& dims, const Vec3& spacing, const Vec3& origin = {0, 0, 0});

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t linear(int i, int j, int k) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(dims[0]) * (j + static_cast<std::size_t>(dims[1]) * k);
  }
  Vec3 world(double i, double j, double k) const { return affine.apply({i, j, k}); }
  double voxel_volume() const { return spacing[0] * spacing[1] * spacing[2]; }

  /// Throws GeometryError on non-positive dims/spacing or singular affine.
  void validate() const;
  bool operator==(const Grid&) const = default;
};

/// True when dims are equal and spacing/affine agree to `tol`.
bool same_geometry(const Grid& a, const Grid& b, double tol = 1e-6);

struct LabelEntry {
  std::int32_t id = 0;
  std::string name;
  bool operator==(const LabelEntry&) const = default;
};
using LabelTable = std::vector<LabelEntry>;

/// Immutable scalar volume. All values finite.
class Volume {
 public:
  Volume() = default;
  Volume(Grid grid, std::vector<double> data);
  /// Constant-filled volume.
  Volume(Grid grid, double value);

  const Grid& grid() const { return grid_; }
  const Index3& dims() const { return grid_.dims; }
  std::span<const double> data() const { return data_; }
  std::size_t size() const { return data_.size(); }
  double operator[](std::size_t n) const { return data_[n]; }
  double at(int i, int j, int k) const { return data_[grid_.linear(i, j, k)]; }

  double min() const;
  double max() const;

 private:
  Grid grid_;
  std::vector<double> data_;
};

/// Immutable integer label volume. Every voxel label appears in the table;
/// label 0 is background.
class LabelVolume {
 public:
  LabelVolume() = default;
  LabelVolume(Grid grid, std::vector<std::int32_t> labels, LabelTable table);

  const Grid& grid() const { return grid_; }
  const Index3& dims() const { return grid_.dims; }
  std::span<const std::int32_t> labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  std::int32_t operator[](std::size_t n) const { return labels_[n]; }
  std::int32_t at(int i, int j, int k) const { return labels_[grid_.linear(i, j, k)]; }
  const LabelTable& table() const { return table_; }

  /// Position of `id` in the label table, or -1.
  int table_index(std::int32_t id) const;
  std::vector<std::int32_t> present_labels() const;

 private:
  Grid grid_;
  std::vector<std::int32_t> labels_;
  LabelTable table_;
};

/// Label table built from the distinct values in `labels` ("background" for 0,
/// "label_<id>" otherwise).
LabelTable default_label_table(std::span<const std::int32_t> labels);

/// Trilinear sample of `src` at continuous voxel coordinate (ci, cj, ck).
/// Points within half a voxel of the outer voxel centres are edge-clamped;
/// anything further out returns 0.
double sample_trilinear(const Volume& src, double ci, double cj, double ck);

/// Resamples `src` onto `target` by trilinear interpolation at each target
/// voxel's world position. Out-of-bounds samples are 0.
Volume resample_trilinear(const Volume& src, const Grid& target);

/// Nearest-neighbour resampling; exact half-way ties go to the lower index.
/// Out-of-bounds voxels become background (0).
LabelVolume resample_nearest(const LabelVolume& src, const Grid& target);

/// (v - min) / (max - min); a constant volume maps to all zeros.
Volume min_max_normalize(const Volume& v);

/// Sub-volume starting at voxel `origin` with `size` voxels per axis. The
/// affine is shifted so every retained voxel keeps its world coordinate.
Volume crop(const Volume& v, const Index3& origin, const Index3& size);
LabelVolume crop(const LabelVolume& v, const Index3& origin, const Index3& size);
Grid crop_grid(const Grid& g, const Index3& origin, const Index3& size);

}  // namespace lfsr
