#include "lfsr/generator.hpp"

#include <algorithm>
#include <cmath>

#include "lfsr/errors.hpp"

namespace lfsr::gen {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kFwhmToSigma = 0.42466090014400953;  // 1 / (2 sqrt(2 ln 2))

Vec3 grid_center_world(const Grid& g) {
  return g.world(0.5 * (g.dims[0] - 1), 0.5 * (g.dims[1] - 1), 0.5 * (g.dims[2] - 1));
}

AffineTransform rotation_xyz(double ax, double ay, double az) {
  const double cx = std::cos(ax), sx = std::sin(ax);
  const double cy = std::cos(ay), sy = std::sin(ay);
  const double cz = std::cos(az), sz = std::sin(az);
  const AffineTransform rx({1, 0, 0, 0, 0, cx, -sx, 0, 0, sx, cx, 0, 0, 0, 0, 1});
  const AffineTransform ry({cy, 0, sy, 0, 0, 1, 0, 0, -sy, 0, cy, 0, 0, 0, 0, 1});
  const AffineTransform rz({cz, -sz, 0, 0, sz, cz, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
  return rz * ry * rx;
}

// Per-axis interpolation positions for corner-aligned lattice upsampling.
void lattice_coord(int i, int n, int m, int& q0, double& f) {
  if (m == 1 || n == 1) {
    q0 = 0;
    f = 0.0;
    return;
  }
  const double u = static_cast<double>(i) * (m - 1) / (n - 1);
  q0 = std::min(static_cast<int>(std::floor(u)), m - 2);
  f = u - q0;
}

template <typename T, typename Lerp>
std::vector<T> upsample_lattice(std::span<const T> control, const Index3& cd, const Index3& dims, Lerp lerp) {
  std::vector<T> out(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
  auto at = [&](int a, int b, int c) { return control[a + static_cast<std::size_t>(cd[0]) * (b + static_cast<std::size_t>(cd[1]) * c)]; };
  for (int k = 0; k < dims[2]; ++k) {
    int k0;
    double fz;
    lattice_coord(k, dims[2], cd[2], k0, fz);
    const int k1 = cd[2] > 1 ? k0 + 1 : k0;
    for (int j = 0; j < dims[1]; ++j) {
      int j0;
      double fy;
      lattice_coord(j, dims[1], cd[1], j0, fy);
      const int j1 = cd[1] > 1 ? j0 + 1 : j0;
      for (int i = 0; i < dims[0]; ++i) {
        int i0;
        double fx;
        lattice_coord(i, dims[0], cd[0], i0, fx);
        const int i1 = cd[0] > 1 ? i0 + 1 : i0;
        const T c00 = lerp(at(i0, j0, k0), at(i1, j0, k0), fx);
        const T c10 = lerp(at(i0, j1, k0), at(i1, j1, k0), fx);
        const T c01 = lerp(at(i0, j0, k1), at(i1, j0, k1), fx);
        const T c11 = lerp(at(i0, j1, k1), at(i1, j1, k1), fx);
        out[i + static_cast<std::size_t>(dims[0]) * (j + static_cast<std::size_t>(dims[1]) * k)] =
            lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz);
      }
    }
  }
  return out;
}

double lerp_d(double a, double b, double f) { return a + f * (b - a); }
Vec3 lerp_v(const Vec3& a, const Vec3& b, double f) {
  return {a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]), a[2] + f * (b[2] - a[2])};
}

}  // namespace

// ---------------------------------------------------------------------------
// Deformation

double DeformationField::max_magnitude() const {
  double m = 0.0;
  for (const auto& d : displacement) m = std::max(m, std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]));
  return m;
}

DeformationField DeformationField::from_affine(const Grid& grid, const AffineTransform& world_map) {
  DeformationField f;
  f.grid = grid;
  f.affine = world_map;
  f.displacement.resize(grid.voxel_count());
  for (int k = 0; k < grid.dims[2]; ++k)
    for (int j = 0; j < grid.dims[1]; ++j)
      for (int i = 0; i < grid.dims[0]; ++i) {
        const Vec3 x = grid.world(i, j, k);
        const Vec3 y = world_map.apply(x);
        f.displacement[grid.linear(i, j, k)] = {y[0] - x[0], y[1] - x[1], y[2] - x[2]};
      }
  return f;
}

double displacement_bound(const Grid& grid, const DeformationParams& p) {
  // |(R S - I) r| <= (|S - I| + |R - I|) |r|, with |R - I| = 2 sin(angle / 2)
  // and the composed angle at most the sum of the three axis angles.
  const Vec3 c = grid_center_world(grid);
  double radius = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    const Vec3 w = grid.world((corner & 1) ? grid.dims[0] - 1 : 0, (corner & 2) ? grid.dims[1] - 1 : 0,
                              (corner & 4) ? grid.dims[2] - 1 : 0);
    radius = std::max(radius, std::sqrt((w[0] - c[0]) * (w[0] - c[0]) + (w[1] - c[1]) * (w[1] - c[1]) +
                                        (w[2] - c[2]) * (w[2] - c[2])));
  }
  const double angle = std::min(3.0 * p.max_rotation_deg * kPi / 180.0, kPi);
  const double linear = p.max_scaling + 2.0 * std::sin(0.5 * angle);
  const double control = 3.0 * p.control_std_mm * std::sqrt(3.0);
  return radius * linear + p.max_translation_mm * std::sqrt(3.0) + control;
}

DeformationField sample_deformation(Rng& rng, const Grid& grid, const DeformationParams& p) {
  grid.validate();
  if (p.control_grid < 2) throw InputError("deformation control grid must be >= 2");
  const double rad = p.max_rotation_deg * kPi / 180.0;
  const double ax = rng.uniform(-rad, rad), ay = rng.uniform(-rad, rad), az = rng.uniform(-rad, rad);
  const Vec3 scale{rng.uniform(1.0 - p.max_scaling, 1.0 + p.max_scaling),
                   rng.uniform(1.0 - p.max_scaling, 1.0 + p.max_scaling),
                   rng.uniform(1.0 - p.max_scaling, 1.0 + p.max_scaling)};
  const Vec3 t{rng.uniform(-p.max_translation_mm, p.max_translation_mm),
               rng.uniform(-p.max_translation_mm, p.max_translation_mm),
               rng.uniform(-p.max_translation_mm, p.max_translation_mm)};
  const Vec3 c = grid_center_world(grid);
  const AffineTransform linear = rotation_xyz(ax, ay, az) * AffineTransform::scaling(scale);
  const Vec3 lc = linear.apply_linear(c);
  // x -> c + L (x - c) + t
  const AffineTransform world_map =
      AffineTransform::translation({c[0] - lc[0] + t[0], c[1] - lc[1] + t[1], c[2] - lc[2] + t[2]}) * linear;

  DeformationField f = DeformationField::from_affine(grid, world_map);
  const int m = p.control_grid;
  f.control_dims = {m, m, m};
  f.control.resize(static_cast<std::size_t>(m) * m * m);
  for (auto& v : f.control)
    v = {rng.truncated_normal(0.0, p.control_std_mm, 3.0), rng.truncated_normal(0.0, p.control_std_mm, 3.0),
         rng.truncated_normal(0.0, p.control_std_mm, 3.0)};
  const auto dense = upsample_lattice<Vec3>(f.control, f.control_dims, grid.dims, lerp_v);
  for (std::size_t n = 0; n < dense.size(); ++n)
    for (int a = 0; a < 3; ++a) f.displacement[n][a] += dense[n][a];
  return f;
}

namespace {

void check_field(const Grid& g, const DeformationField& f) {
  if (!same_geometry(g, f.grid)) throw GeometryError("deformation field grid differs from the image grid");
}

}  // namespace

Volume apply_deformation(const Volume& image, const DeformationField& field) {
  check_field(image.grid(), field);
  const Grid& g = image.grid();
  const AffineTransform to_voxel = g.affine.inverse();
  std::vector<double> out(g.voxel_count());
#pragma omp parallel for schedule(static)
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        const std::size_t n = g.linear(i, j, k);
        const Vec3 x = g.world(i, j, k);
        const Vec3& d = field.displacement[n];
        const Vec3 v = to_voxel.apply({x[0] + d[0], x[1] + d[1], x[2] + d[2]});
        out[n] = sample_trilinear(image, v[0], v[1], v[2]);
      }
  return Volume(g, std::move(out));
}

LabelVolume apply_deformation(const LabelVolume& seg, const DeformationField& field) {
  check_field(seg.grid(), field);
  const Grid& g = seg.grid();
  const AffineTransform to_voxel = g.affine.inverse();
  std::vector<std::int32_t> out(g.voxel_count(), 0);
  auto nearest = [](double c) { return static_cast<int>(std::ceil(c - 0.5 - 1e-9)); };
#pragma omp parallel for schedule(static)
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        const std::size_t n = g.linear(i, j, k);
        const Vec3 x = g.world(i, j, k);
        const Vec3& d = field.displacement[n];
        const Vec3 v = to_voxel.apply({x[0] + d[0], x[1] + d[1], x[2] + d[2]});
        const int si = nearest(v[0]), sj = nearest(v[1]), sk = nearest(v[2]);
        if (si < 0 || sj < 0 || sk < 0 || si >= g.dims[0] || sj >= g.dims[1] || sk >= g.dims[2]) continue;
        out[n] = seg.at(si, sj, sk);
      }
  LabelTable table = seg.table();
  if (seg.table_index(0) < 0) table.insert(table.begin(), LabelEntry{0, "background"});
  return LabelVolume(g, std::move(out), std::move(table));
}

std::pair<Volume, LabelVolume> apply_deformation(const Volume& image, const LabelVolume& seg,
                                                 const DeformationField& field) {
  if (!same_geometry(image.grid(), seg.grid())) throw GeometryError("image and label grids differ");
  return {apply_deformation(image, field), apply_deformation(seg, field)};
}

// ---------------------------------------------------------------------------
// GMM sampling

std::pair<Volume, Volume> sample_gmm_image(Rng& rng, const LabelVolume& seg, const GmmHyperParams& hyper) {
  const auto present = seg.present_labels();
  struct Draw {
    double mean, sd;
  };
  std::vector<std::array<Draw, 2>> draws(present.size());
  for (std::size_t l = 0; l < present.size(); ++l) {
    const LabelPrior* prior = hyper.find(present[l]);
    if (!prior) throw InputError("no GMM hyperparameters for label " + std::to_string(present[l]));
    for (int c = 0; c < 2; ++c) {
      const ChannelPrior& p = prior->channel[c];
      const double mean = rng.normal(p.mean_center, p.mean_spread);
      const double sd = std::max(rng.normal(p.std_center, p.std_spread), hyper.std_floor[c]);
      draws[l][c] = {mean, sd};
    }
  }
  std::vector<int> slot(seg.size());
  for (std::size_t n = 0; n < seg.size(); ++n)
    slot[n] = static_cast<int>(std::lower_bound(present.begin(), present.end(), seg[n]) - present.begin());
  std::array<std::vector<double>, 2> img;
  for (int c = 0; c < 2; ++c) {
    img[c].resize(seg.size());
    for (std::size_t n = 0; n < seg.size(); ++n) {
      const Draw& d = draws[slot[n]][c];
      img[c][n] = rng.normal(d.mean, d.sd);
    }
  }
  return {Volume(seg.grid(), std::move(img[0])), Volume(seg.grid(), std::move(img[1]))};
}

// ---------------------------------------------------------------------------
// Resolution and noise model

Grid low_resolution_grid(const Grid& hr, const Vec3& target) {
  Grid lr;
  std::array<double, 16> m{};
  for (int a = 0; a < 3; ++a) {
    const double ratio = target[a] / hr.spacing[a];
    const int n = std::max(1, static_cast<int>(std::ceil(hr.dims[a] / ratio - 1e-9)));
    lr.dims[a] = n;
    lr.spacing[a] = target[a];
    m[5 * a] = ratio;
    m[4 * a + 3] = 0.5 * ((hr.dims[a] - 1) - (n - 1) * ratio);
  }
  m[15] = 1.0;
  lr.affine = hr.affine * AffineTransform(m);
  lr.validate();
  return lr;
}

Volume gaussian_blur(const Volume& v, const Vec3& sigma_vox) {
  const Grid& g = v.grid();
  std::vector<double> cur(v.data().begin(), v.data().end());
  std::vector<double> next(cur.size());
  const std::size_t stride[3] = {1, static_cast<std::size_t>(g.dims[0]),
                                 static_cast<std::size_t>(g.dims[0]) * g.dims[1]};
  for (int a = 0; a < 3; ++a) {
    if (!(sigma_vox[a] > 0.0)) continue;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_vox[a])));
    std::vector<double> w(2 * radius + 1);
    for (int t = -radius; t <= radius; ++t) w[t + radius] = std::exp(-0.5 * t * t / (sigma_vox[a] * sigma_vox[a]));
    const int n = g.dims[a];
#pragma omp parallel for schedule(static)
    for (int k = 0; k < g.dims[2]; ++k)
      for (int j = 0; j < g.dims[1]; ++j)
        for (int i = 0; i < g.dims[0]; ++i) {
          const int pos = a == 0 ? i : (a == 1 ? j : k);
          const std::size_t base = g.linear(i, j, k) - pos * stride[a];
          double s = 0.0, ws = 0.0;
          for (int t = std::max(-radius, -pos); t <= std::min(radius, n - 1 - pos); ++t) {
            s += w[t + radius] * cur[base + (pos + t) * stride[a]];
            ws += w[t + radius];
          }
          next[g.linear(i, j, k)] = s / ws;
        }
    std::swap(cur, next);
  }
  return Volume(g, std::move(cur));
}

Volume add_rician_noise(Rng& rng, const Volume& v, double sigma) {
  std::vector<double> out(v.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    const double re = v[n] + rng.normal(0.0, sigma);
    const double im = rng.normal(0.0, sigma);
    out[n] = std::sqrt(re * re + im * im);
  }
  return Volume(v.grid(), std::move(out));
}

LowFieldStages simulate_low_field_stages(Rng& rng, const Volume& hr, const Vec3& target, double noise_sigma) {
  const Grid& g = hr.grid();
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw InputError("noise sigma must be finite and >= 0");
  Vec3 sigma_vox{0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    if (!(target[a] > 0.0)) throw InputError("target spacing must be > 0");
    if (target[a] < g.spacing[a] * (1.0 - 1e-9))
      throw InputError("target spacing is finer than the source spacing on axis " + std::to_string(a));
    if (target[a] > g.spacing[a] * (1.0 + 1e-9)) sigma_vox[a] = target[a] * kFwhmToSigma / g.spacing[a];
  }
  LowFieldStages s;
  s.blurred = gaussian_blur(hr, sigma_vox);
  s.low_res = resample_trilinear(s.blurred, low_resolution_grid(g, target));
  s.noisy = noise_sigma > 0.0 ? add_rician_noise(rng, s.low_res, noise_sigma) : s.low_res;
  s.upsampled = resample_trilinear(s.noisy, g);
  return s;
}

Volume simulate_low_field(Rng& rng, const Volume& hr, const Vec3& target, double noise_sigma) {
  return simulate_low_field_stages(rng, hr, target, noise_sigma).upsampled;
}

// ---------------------------------------------------------------------------
// Bias field

std::vector<double> upsample_control_grid(std::span<const double> control, const Index3& cd, const Index3& dims) {
  if (control.size() != static_cast<std::size_t>(cd[0]) * cd[1] * cd[2])
    throw ShapeError("control lattice size does not match its dims");
  return upsample_lattice<double>(control, cd, dims, lerp_d);
}

BiasField sample_bias_field(Rng& rng, const Grid& grid, const BiasFieldSpec& spec) {
  grid.validate();
  for (int a = 0; a < 3; ++a)
    if (spec.control_dims[a] < 2) throw InputError("bias control dims must be >= 2 per axis");
  if (!(spec.log_std >= 0.0)) throw InputError("bias log std must be >= 0");
  BiasField b;
  b.control_dims = spec.control_dims;
  b.control_log.resize(static_cast<std::size_t>(spec.control_dims[0]) * spec.control_dims[1] * spec.control_dims[2]);
  for (double& v : b.control_log) v = rng.normal(0.0, spec.log_std);
  auto log_field = upsample_control_grid(b.control_log, b.control_dims, grid.dims);
  for (double& v : log_field) v = std::exp(v);
  b.field = Volume(grid, std::move(log_field));
  return b;
}

// ---------------------------------------------------------------------------
// Sample assembly

namespace {

Volume multiply(const Volume& a, const Volume& b) {
  std::vector<double> out(a.size());
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = a[n] * b[n];
  return Volume(a.grid(), std::move(out));
}

}  // namespace

TrainingSample spatial_sample(std::uint64_t seed, const Volume& image, const LabelVolume& seg,
                              const GeneratorConfig& cfg, const Index3& crop_size) {
  if (!same_geometry(image.grid(), seg.grid())) throw GeometryError("source image and segmentation grids differ");
  const Rng root(seed);

  Rng deform_rng = root.child("deform");
  const DeformationField field = sample_deformation(deform_rng, image.grid(), cfg.deformation);
  auto [img_d, seg_d] = apply_deformation(image, seg, field);

  Index3 origin{0, 0, 0};
  Rng crop_rng = root.child("crop");
  for (int a = 0; a < 3; ++a) {
    if (crop_size[a] < 1 || crop_size[a] > img_d.dims()[a]) throw BoundsError("crop size exceeds the source volume dims");
    origin[a] = static_cast<int>(crop_rng.index(static_cast<std::size_t>(img_d.dims()[a] - crop_size[a] + 1)));
  }
  if (crop_size != img_d.dims()) {
    img_d = crop(img_d, origin, crop_size);
    seg_d = crop(seg_d, origin, crop_size);
  }
  TrainingSample s;
  s.target = min_max_normalize(img_d);
  s.seg = std::move(seg_d);
  s.seed = seed;
  return s;
}

TrainingSample generate_sample(std::uint64_t seed, const Volume& image, const LabelVolume& seg,
                               const GmmHyperParams& hyper, const GeneratorConfig& cfg, const Index3& crop_size) {
  TrainingSample s = spatial_sample(seed, image, seg, cfg, crop_size);
  const Rng root(seed);

  Rng gmm_rng = root.child("gmm");
  auto [t1_hr, t2_hr] = sample_gmm_image(gmm_rng, s.seg, hyper);

  Rng noise_rng = root.child("noise");
  const double frac_t1 = noise_rng.uniform(cfg.noise_sigma[0], cfg.noise_sigma[1]);
  const double frac_t2 = noise_rng.uniform(cfg.noise_sigma[0], cfg.noise_sigma[1]);

  Rng lf1 = root.child("lf_t1"), lf2 = root.child("lf_t2");
  Volume lf_t1 = simulate_low_field(lf1, t1_hr, cfg.t1_spacing, frac_t1 * (t1_hr.max() - t1_hr.min()));
  Volume lf_t2 = simulate_low_field(lf2, t2_hr, cfg.t2_spacing, frac_t2 * (t2_hr.max() - t2_hr.min()));

  Rng b1 = root.child("bias_t1"), b2 = root.child("bias_t2");
  lf_t1 = multiply(lf_t1, sample_bias_field(b1, lf_t1.grid(), cfg.bias_t1).field);
  lf_t2 = multiply(lf_t2, sample_bias_field(b2, lf_t2.grid(), cfg.bias_t2).field);

  s.lf_t1 = min_max_normalize(lf_t1);
  s.lf_t2 = min_max_normalize(lf_t2);
  return s;
}

SampleFactory::SampleFactory(std::vector<SourceScan> pool, GmmHyperParams hyper, GeneratorConfig config,
                             Index3 crop_size, std::uint64_t root_seed)
    : pool_(std::move(pool)), hyper_(std::move(hyper)), config_(config), crop_size_(crop_size), root_seed_(root_seed) {
  if (pool_.empty()) throw InputError("sample factory needs at least one source scan");
  hyper_.validate();
}

std::uint64_t SampleFactory::sample_seed(std::uint64_t index) const { return Rng(root_seed_).child(index).seed(); }

std::size_t SampleFactory::source_index(std::uint64_t index) const {
  Rng pick = Rng(sample_seed(index)).child("source");
  return pick.index(pool_.size());
}

TrainingSample SampleFactory::make(std::uint64_t index) const {
  const auto& src = pool_[source_index(index)];
  return generate_sample(sample_seed(index), src.image, src.seg, hyper_, config_, crop_size_);
}

TrainingSample SampleFactory::make_spatial(std::uint64_t index) const {
  const auto& src = pool_[source_index(index)];
  return spatial_sample(sample_seed(index), src.image, src.seg, config_, crop_size_);
}

// ---------------------------------------------------------------------------
// SampleStream

SampleStream::SampleStream(const SampleFactory& factory, std::uint64_t first, std::uint64_t count, int workers,
                           std::size_t capacity, bool spatial_only)
    : factory_(factory), first_(first), count_(count), spatial_only_(spatial_only), running_(std::max(1, workers)), buffer_(capacity) {
  const int n = std::max(1, workers);
  for (int w = 0; w < n; ++w) threads_.emplace_back([this] { produce(); });
}

SampleStream::~SampleStream() {
  buffer_.close();
  for (auto& t : threads_) t.join();
}

void SampleStream::produce() {
  try {
    for (;;) {
      const std::uint64_t i = claimed_.fetch_add(1);
      if (i >= count_) break;
      const std::uint64_t index = first_ + i;
      if (!buffer_.push(spatial_only_ ? factory_.make_spatial(index) : factory_.make(index))) break;
    }
  } catch (...) {
    std::lock_guard lock(error_mu_);
    if (!error_) error_ = std::current_exception();
  }
  if (running_.fetch_sub(1) == 1) buffer_.close();
}

std::optional<TrainingSample> SampleStream::next() {
  auto item = buffer_.pop();
  if (!item) {
    std::lock_guard lock(error_mu_);
    if (error_) std::rethrow_exception(error_);
  }
  return item;
}

}  // namespace lfsr::gen
