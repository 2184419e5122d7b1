/**
 * @file generator.hpp
 * @brief On-the-fly synthetic training data: spatial augmentation, label-conditioned
 * GMM intensities, low-field resolution/noise model and bias fields.
 */
#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

#include "lfsr/config.hpp"
#include "lfsr/hyperparams.hpp"
#include "lfsr/rng.hpp"
#include "lfsr/volume.hpp"

namespace lfsr::gen {

/// Dense displacement (mm) on a grid. A voxel at world position x is pulled
/// from x + displacement(x) in the source image.
struct DeformationField {
  Grid grid;
  std::vector<Vec3> displacement;
  /// World-space affine part: x -> center + R S (x - center) + t.
  AffineTransform affine;
  Index3 control_dims{0, 0, 0};
  std::vector<Vec3> control;  // control-grid displacements, x fastest

  double max_magnitude() const;
  /// Field whose displacement is `world_map(x) - x` everywhere.
  static DeformationField from_affine(const Grid& grid, const AffineTransform& world_map);
};

/// Upper bound on |displacement| for any draw of `sample_deformation`.
double displacement_bound(const Grid& grid, const DeformationParams& params);

/// Random affine (rotation, scaling, translation about the grid centre)
/// composed with a trilinearly upsampled control-grid displacement.
DeformationField sample_deformation(Rng& rng, const Grid& grid, const DeformationParams& params);

/// Intensities pulled back trilinearly, labels by nearest neighbour; geometry
/// is left unchanged.
std::pair<Volume, LabelVolume> apply_deformation(const Volume& image, const LabelVolume& seg,
                                                 const DeformationField& field);
LabelVolume apply_deformation(const LabelVolume& seg, const DeformationField& field);
Volume apply_deformation(const Volume& image, const DeformationField& field);

/// Two-channel (T1, T2) image drawn from the label-conditioned GMM. For every
/// present label and channel a mean and stddev are drawn from the priors
/// (stddev floored at the channel floor), then every voxel is drawn
/// independently. Throws InputError naming a label without priors.
std::pair<Volume, Volume> sample_gmm_image(Rng& rng, const LabelVolume& seg, const GmmHyperParams& hyper);

/// Low-resolution lattice covering the field of view of `hr` with voxels of
/// `target_spacing` mm, centred on the same world point.
Grid low_resolution_grid(const Grid& hr, const Vec3& target_spacing);

/// Separable Gaussian smoothing; sigma in voxels per axis (0 skips an axis).
/// Kernel weights are renormalised where the support leaves the volume.
Volume gaussian_blur(const Volume& v, const Vec3& sigma_vox);

/// sqrt((v + n1)^2 + n2^2) with n1, n2 ~ Normal(0, sigma) per voxel.
Volume add_rician_noise(Rng& rng, const Volume& v, double sigma);

struct LowFieldStages {
  Volume blurred;  // HR grid
  Volume low_res;  // LR grid, noise free
  Volume noisy;    // LR grid, Rician magnitude
  Volume upsampled;  // back on the HR grid
};

/// Blur with FWHM equal to the target spacing on axes that get coarser,
/// resample to the low-resolution grid, add Rician noise (skipped for
/// sigma == 0) and resample back to the HR grid. Throws InputError when any
/// target spacing is finer than the source.
LowFieldStages simulate_low_field_stages(Rng& rng, const Volume& hr, const Vec3& target_spacing, double noise_sigma);
Volume simulate_low_field(Rng& rng, const Volume& hr, const Vec3& target_spacing, double noise_sigma);

struct BiasField {
  Volume field;
  Index3 control_dims{0, 0, 0};
  std::vector<double> control_log;  // Gaussian control values, x fastest
};

/// exp of the trilinearly upsampled control lattice. Control point q sits at
/// voxel coordinate q * (n - 1) / (m - 1) on each axis.
BiasField sample_bias_field(Rng& rng, const Grid& grid, const BiasFieldSpec& spec);

/// Corner-aligned trilinear upsampling of a control lattice to `dims`.
std::vector<double> upsample_control_grid(std::span<const double> control, const Index3& control_dims,
                                          const Index3& dims);

struct TrainingSample {
  Volume lf_t1;
  Volume lf_t2;
  Volume target;
  LabelVolume seg;
  std::uint64_t seed = 0;
};

/// One generator draw. Order: deformation, random crop to `crop_size`, GMM
/// sampling of both channels, per-channel low-field simulation, per-channel
/// bias field, min-max normalisation of both channels and the target.
/// The target intensities are only ever copied, never read into the inputs.
TrainingSample generate_sample(std::uint64_t seed, const Volume& image, const LabelVolume& seg,
                               const GmmHyperParams& hyper, const GeneratorConfig& config, const Index3& crop_size);

/// Deformation and crop only: `target` and `seg` of `generate_sample` with the
/// same seed; the low-field channels are left empty.
TrainingSample spatial_sample(std::uint64_t seed, const Volume& image, const LabelVolume& seg,
                              const GeneratorConfig& config, const Index3& crop_size);

struct SourceScan {
  Volume image;
  LabelVolume seg;
};

/// Deterministic sample-by-index factory over a pool of source scans.
class SampleFactory {
 public:
  SampleFactory(std::vector<SourceScan> pool, GmmHyperParams hyper, GeneratorConfig config, Index3 crop_size,
                std::uint64_t root_seed);

  /// Seed of sample `index`; the source is chosen from this seed too.
  std::uint64_t sample_seed(std::uint64_t index) const;
  std::size_t source_index(std::uint64_t index) const;
  TrainingSample make(std::uint64_t index) const;
  TrainingSample make_spatial(std::uint64_t index) const;
  const std::vector<SourceScan>& pool() const { return pool_; }
  const GmmHyperParams& hyper() const { return hyper_; }

 private:
  std::vector<SourceScan> pool_;
  GmmHyperParams hyper_;
  GeneratorConfig config_;
  Index3 crop_size_;
  std::uint64_t root_seed_;
};

/// Fixed-capacity FIFO; push blocks while full, pop blocks while empty.
template <typename T>
class BoundedBuffer {
 public:
  explicit BoundedBuffer(std::size_t capacity) : capacity_(capacity ? capacity : 1) {}

  /// Returns false if the buffer was closed.
  bool push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  /// Empty optional once closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_full_.notify_all();
    not_empty_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
  bool closed_ = false;
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
};

/// Producer pool feeding samples [first, first + count) into a bounded buffer.
/// With one worker samples arrive in index order (the deterministic mode);
/// with several they arrive in completion order.
class SampleStream {
 public:
  SampleStream(const SampleFactory& factory, std::uint64_t first, std::uint64_t count, int workers,
               std::size_t capacity = 4, bool spatial_only = false);
  ~SampleStream();
  SampleStream(const SampleStream&) = delete;
  SampleStream& operator=(const SampleStream&) = delete;

  /// Next sample, or nullopt when the range is exhausted. Rethrows a
  /// producer's exception.
  std::optional<TrainingSample> next();

 private:
  void produce();

  const SampleFactory& factory_;
  std::uint64_t first_, count_;
  bool spatial_only_;
  std::atomic<std::uint64_t> claimed_{0};
  std::atomic<int> running_;
  BoundedBuffer<TrainingSample> buffer_;
  std::mutex error_mu_;
  std::exception_ptr error_;
  std::vector<std::thread> threads_;
};

}  // namespace lfsr::gen
