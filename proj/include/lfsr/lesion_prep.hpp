#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lfsr/volume.hpp"

namespace lfsr::lesions {

struct GmmComponent {
  double weight = 1.0;
  double mean = 0.0;
  double stddev = 1.0;
};

/// One-dimensional Gaussian mixture. Weights sum to 1, stddevs > 0.
struct Gmm1D {
  std::vector<GmmComponent> components;

  double log_likelihood(std::span<const double> samples) const;
  /// sqrt(sum_k w_k sigma_k^2)
  double pooled_stddev() const;
};

struct EmOptions {
  double tol = 1e-6;  // relative log-likelihood change
  int max_iters = 200;
  std::uint64_t seed = 0;  // only used to re-seed collapsed components
};

struct EmResult {
  Gmm1D model;
  /// Posterior responsibilities, row-major [sample][component].
  std::vector<double> responsibilities;
  /// Log-likelihood of the parameters entering each iteration, followed by
  /// that of the returned model.
  std::vector<double> log_likelihood_history;
  /// Iterations after which a collapsed component was re-seeded; the
  /// likelihood may drop across these.
  std::vector<int> reseed_iterations;
  int iterations = 0;
  bool converged = false;
  double std_floor = 0.0;

  double responsibility(std::size_t sample, std::size_t component) const {
    return responsibilities[sample * model.components.size() + component];
  }
};

/// Expectation-maximisation fit of a K-component mixture.
///
/// Initialisation splits the sorted samples at the 90th percentile: the top
/// 10% seed the last component and the rest is divided evenly among the
/// others. Stddevs are floored at 1e-4 of the sample range; a component that
/// falls below the floor is re-seeded at a random sample. Throws InputError
/// for fewer than 2K samples or non-finite values.
EmResult fit_gmm_em(std::span<const double> samples, int k, const EmOptions& options = {});

struct WhiteMatterSplit {
  LabelVolume labels;
  std::int32_t abnormal_label = 0;
  std::size_t wm_voxels = 0;
  std::size_t abnormal_voxels = 0;
  /// False when the two component means differ by less than one pooled
  /// stddev; no voxel is relabelled in that case.
  bool reliable_lesion_class = false;
  Gmm1D model;
};

/// Two-component EM on the intensities under `wm_labels`. Voxels whose
/// higher-responsibility component is the one whose mean lies further from the
/// white-matter median receive a new label, appended to the table as
/// "<name>-abnormal". Labels outside the mask are untouched.
WhiteMatterSplit split_white_matter(const Volume& intensities, const LabelVolume& seg,
                                    std::span<const std::int32_t> wm_labels, const EmOptions& options = {});

struct InpaintOptions {
  int search_radius = 5;
  int patch_radius = 1;
};

/// One byte per voxel, non-zero marks a voxel to replace.
std::vector<std::uint8_t> mask_from_labels(const LabelVolume& seg, std::span<const std::int32_t> labels);

/// Best-match patch copy: every masked voxel takes the centre value of the
/// unmasked patch inside its search window whose known neighbourhood matches
/// best (mean squared difference over unmasked offsets; ties to the nearest
/// candidate, then the lower index). Reads only the original image, so the
/// result is independent of processing order. Throws InputError when the mask
/// comes closer than `patch_radius` to the volume boundary.
Volume inpaint(const Volume& image, std::span<const std::uint8_t> mask, const InpaintOptions& options = {});

}  // namespace lfsr::lesions
