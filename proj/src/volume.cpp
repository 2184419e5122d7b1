#include "lfsr/volume.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "lfsr/errors.hpp"

namespace lfsr {

// ---------------------------------------------------------------------------
// AffineTransform

AffineTransform::AffineTransform() : m_{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1} {}

AffineTransform::AffineTransform(const std::array<double, 16>& row_major) : m_(row_major) {
  if (m_[12] != 0.0 || m_[13] != 0.0 || m_[14] != 0.0 || m_[15] != 1.0)
    throw GeometryError("affine last row must be (0, 0, 0, 1)");
  for (double x : m_)
    if (!std::isfinite(x)) throw GeometryError("affine has non-finite entries");
}

AffineTransform AffineTransform::scaling(const Vec3& spacing, const Vec3& origin) {
  return AffineTransform({spacing[0], 0, 0, origin[0], 0, spacing[1], 0, origin[1], 0, 0,
                          spacing[2], origin[2], 0, 0, 0, 1});
}

AffineTransform AffineTransform::translation(const Vec3& offset) {
  return AffineTransform({1, 0, 0, offset[0], 0, 1, 0, offset[1], 0, 0, 1, offset[2], 0, 0, 0, 1});
}

Vec3 AffineTransform::apply(const Vec3& p) const {
  return {m_[0] * p[0] + m_[1] * p[1] + m_[2] * p[2] + m_[3],
          m_[4] * p[0] + m_[5] * p[1] + m_[6] * p[2] + m_[7],
          m_[8] * p[0] + m_[9] * p[1] + m_[10] * p[2] + m_[11]};
}

Vec3 AffineTransform::apply_linear(const Vec3& v) const {
  return {m_[0] * v[0] + m_[1] * v[1] + m_[2] * v[2],
          m_[4] * v[0] + m_[5] * v[1] + m_[6] * v[2],
          m_[8] * v[0] + m_[9] * v[1] + m_[10] * v[2]};
}

double AffineTransform::determinant3() const {
  return m_[0] * (m_[5] * m_[10] - m_[6] * m_[9]) - m_[1] * (m_[4] * m_[10] - m_[6] * m_[8]) +
         m_[2] * (m_[4] * m_[9] - m_[5] * m_[8]);
}

bool AffineTransform::invertible() const {
  const double det = determinant3();
  return std::isfinite(det) && det != 0.0;
}

AffineTransform AffineTransform::inverse() const {
  const double det = determinant3();
  if (!std::isfinite(det) || det == 0.0) throw GeometryError("affine is not invertible");
  const auto& a = m_;
  std::array<double, 9> inv{
      (a[5] * a[10] - a[6] * a[9]) / det,  (a[2] * a[9] - a[1] * a[10]) / det,
      (a[1] * a[6] - a[2] * a[5]) / det,   (a[6] * a[8] - a[4] * a[10]) / det,
      (a[0] * a[10] - a[2] * a[8]) / det,  (a[2] * a[4] - a[0] * a[6]) / det,
      (a[4] * a[9] - a[5] * a[8]) / det,   (a[1] * a[8] - a[0] * a[9]) / det,
      (a[0] * a[5] - a[1] * a[4]) / det};
  const double tx = -(inv[0] * a[3] + inv[1] * a[7] + inv[2] * a[11]);
  const double ty = -(inv[3] * a[3] + inv[4] * a[7] + inv[5] * a[11]);
  const double tz = -(inv[6] * a[3] + inv[7] * a[7] + inv[8] * a[11]);
  return AffineTransform(
      {inv[0], inv[1], inv[2], tx, inv[3], inv[4], inv[5], ty, inv[6], inv[7], inv[8], tz, 0, 0, 0, 1});
}

AffineTransform AffineTransform::operator*(const AffineTransform& rhs) const {
  std::array<double, 16> out{};
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      double s = 0;
      for (int k = 0; k < 4; ++k) s += m_[4 * r + k] * rhs.m_[4 * k + c];
      out[4 * r + c] = s;
    }
  out[12] = out[13] = out[14] = 0.0;
  out[15] = 1.0;
  return AffineTransform(out);
}

// ---------------------------------------------------------------------------
// Grid

Grid Grid::make(const Index3& dims, const Vec3& spacing, const Vec3& origin) {
  Grid g{dims, spacing, AffineTransform::scaling(spacing, origin)};
  g.validate();
  return g;
}

void Grid::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) throw GeometryError("grid dims must be >= 1");
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
      throw GeometryError("grid spacing must be positive and finite");
  }
  if (!affine.invertible()) throw GeometryError("grid affine is not invertible");
}

bool same_geometry(const Grid& a, const Grid& b, double tol) {
  if (a.dims != b.dims) return false;
  for (int i = 0; i < 3; ++i)
    if (std::abs(a.spacing[i] - b.spacing[i]) > tol) return false;
  for (int i = 0; i < 16; ++i)
    if (std::abs(a.affine.matrix()[i] - b.affine.matrix()[i]) > tol) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Volume / LabelVolume

Volume::Volume(Grid grid, std::vector<double> data) : grid_(std::move(grid)), data_(std::move(data)) {
  grid_.validate();
  if (data_.size() != grid_.voxel_count())
    throw ShapeError("volume data length does not match grid dims");
  for (double v : data_)
    if (!std::isfinite(v)) throw InputError("volume data must be finite");
}

Volume::Volume(Grid grid, double value) : Volume(grid, std::vector<double>(grid.voxel_count(), value)) {}

double Volume::min() const { return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end()); }
double Volume::max() const { return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end()); }

LabelVolume::LabelVolume(Grid grid, std::vector<std::int32_t> labels, LabelTable table)
    : grid_(std::move(grid)), labels_(std::move(labels)), table_(std::move(table)) {
  grid_.validate();
  if (labels_.size() != grid_.voxel_count())
    throw ShapeError("label data length does not match grid dims");
  std::set<std::int32_t> ids;
  for (const auto& e : table_) {
    if (e.id < 0) throw InputError("label ids must be non-negative");
    if (!ids.insert(e.id).second) throw InputError("duplicate label id " + std::to_string(e.id));
  }
  for (auto l : labels_)
    if (!ids.count(l)) throw InputError("voxel label " + std::to_string(l) + " missing from label table");
}

int LabelVolume::table_index(std::int32_t id) const {
  for (std::size_t n = 0; n < table_.size(); ++n)
    if (table_[n].id == id) return static_cast<int>(n);
  return -1;
}

std::vector<std::int32_t> LabelVolume::present_labels() const {
  std::set<std::int32_t> s(labels_.begin(), labels_.end());
  return {s.begin(), s.end()};
}

LabelTable default_label_table(std::span<const std::int32_t> labels) {
  std::set<std::int32_t> s(labels.begin(), labels.end());
  s.insert(0);
  LabelTable t;
  for (auto id : s) t.push_back({id, id == 0 ? "background" : "label_" + std::to_string(id)});
  return t;
}

// ---------------------------------------------------------------------------
// Resampling

namespace {

// Lower corner index and fractional weight along one axis. Returns false
// when the coordinate lies more than half a voxel outside the lattice.
bool axis_weights(double c, int n, int& i0, double& frac) {
  if (!(c >= -0.5 && c <= n - 0.5)) return false;
  if (n == 1) {
    i0 = 0;
    frac = 0.0;
    return true;
  }
  c = std::clamp(c, 0.0, static_cast<double>(n - 1));
  i0 = std::min(static_cast<int>(std::floor(c)), n - 2);
  frac = c - i0;
  return true;
}

// Round half toward the lower index; the small slack absorbs the rounding
// error of world->voxel round trips on exactly-aligned grids.
int nearest_index(double c) { return static_cast<int>(std::ceil(c - 0.5 - 1e-9)); }

}  // namespace

double sample_trilinear(const Volume& src, double ci, double cj, double ck) {
  const auto& d = src.dims();
  int i0, j0, k0;
  double fx, fy, fz;
  if (!axis_weights(ci, d[0], i0, fx) || !axis_weights(cj, d[1], j0, fy) || !axis_weights(ck, d[2], k0, fz))
    return 0.0;
  const int i1 = d[0] > 1 ? i0 + 1 : i0;
  const int j1 = d[1] > 1 ? j0 + 1 : j0;
  const int k1 = d[2] > 1 ? k0 + 1 : k0;
  const double c000 = src.at(i0, j0, k0), c100 = src.at(i1, j0, k0);
  const double c010 = src.at(i0, j1, k0), c110 = src.at(i1, j1, k0);
  const double c001 = src.at(i0, j0, k1), c101 = src.at(i1, j0, k1);
  const double c011 = src.at(i0, j1, k1), c111 = src.at(i1, j1, k1);
  const double c00 = c000 + fx * (c100 - c000);
  const double c10 = c010 + fx * (c110 - c010);
  const double c01 = c001 + fx * (c101 - c001);
  const double c11 = c011 + fx * (c111 - c011);
  const double c0 = c00 + fy * (c10 - c00);
  const double c1 = c01 + fy * (c11 - c01);
  return c0 + fz * (c1 - c0);
}

Volume resample_trilinear(const Volume& src, const Grid& target) {
  target.validate();
  src.grid().validate();
  // target voxel -> source voxel
  const AffineTransform map = src.grid().affine.inverse() * target.affine;
  std::vector<double> out(target.voxel_count());
  const auto& d = target.dims;
#pragma omp parallel for schedule(static)
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        const Vec3 c = map.apply({double(i), double(j), double(k)});
        out[target.linear(i, j, k)] = sample_trilinear(src, c[0], c[1], c[2]);
      }
  return Volume(target, std::move(out));
}

LabelVolume resample_nearest(const LabelVolume& src, const Grid& target) {
  target.validate();
  src.grid().validate();
  const AffineTransform map = src.grid().affine.inverse() * target.affine;
  const auto& sd = src.dims();
  const auto& d = target.dims;
  std::vector<std::int32_t> out(target.voxel_count(), 0);
#pragma omp parallel for schedule(static)
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        const Vec3 c = map.apply({double(i), double(j), double(k)});
        const int si = nearest_index(c[0]), sj = nearest_index(c[1]), sk = nearest_index(c[2]);
        if (si < 0 || sj < 0 || sk < 0 || si >= sd[0] || sj >= sd[1] || sk >= sd[2]) continue;
        out[target.linear(i, j, k)] = src.at(si, sj, sk);
      }
  LabelTable table = src.table();
  bool has_background = false;
  for (const auto& e : table) has_background |= (e.id == 0);
  if (!has_background) table.insert(table.begin(), LabelEntry{0, "background"});
  return LabelVolume(target, std::move(out), std::move(table));
}

Volume min_max_normalize(const Volume& v) {
  const double lo = v.min(), hi = v.max();
  std::vector<double> out(v.size(), 0.0);
  if (hi > lo) {
    const double inv = 1.0 / (hi - lo);
    for (std::size_t n = 0; n < out.size(); ++n) out[n] = (v[n] - lo) * inv;
    // pin the endpoints exactly
    for (std::size_t n = 0; n < out.size(); ++n) {
      if (v[n] == lo) out[n] = 0.0;
      if (v[n] == hi) out[n] = 1.0;
    }
  }
  return Volume(v.grid(), std::move(out));
}

Grid crop_grid(const Grid& g, const Index3& origin, const Index3& size) {
  for (int a = 0; a < 3; ++a) {
    if (origin[a] < 0 || size[a] < 1 || origin[a] + size[a] > g.dims[a])
      throw BoundsError("crop region exceeds volume bounds on axis " + std::to_string(a));
  }
  Grid out = g;
  out.dims = size;
  out.affine = g.affine * AffineTransform::translation({double(origin[0]), double(origin[1]), double(origin[2])});
  return out;
}

namespace {

template <typename T>
std::vector<T> crop_data(std::span<const T> src, const Grid& g, const Index3& origin, const Index3& size) {
  std::vector<T> out(static_cast<std::size_t>(size[0]) * size[1] * size[2]);
  std::size_t n = 0;
  for (int k = 0; k < size[2]; ++k)
    for (int j = 0; j < size[1]; ++j) {
      const std::size_t row = g.linear(origin[0], origin[1] + j, origin[2] + k);
      std::copy_n(src.begin() + row, size[0], out.begin() + n);
      n += size[0];
    }
  return out;
}

}  // namespace

Volume crop(const Volume& v, const Index3& origin, const Index3& size) {
  Grid g = crop_grid(v.grid(), origin, size);
  return Volume(g, crop_data(v.data(), v.grid(), origin, size));
}

LabelVolume crop(const LabelVolume& v, const Index3& origin, const Index3& size) {
  Grid g = crop_grid(v.grid(), origin, size);
  return LabelVolume(g, crop_data(v.labels(), v.grid(), origin, size), v.table());
}

}  // namespace lfsr
