#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lfsr/volume.hpp"

namespace lfsr {

namespace stats {

/// Median; the mean of the two middle values for even counts.
double robust_location(std::span<const double> samples);

/// 1.4826 * median absolute deviation about the median.
double robust_scale(std::span<const double> samples);

constexpr double kMadToSigma = 1.4826;

}  // namespace stats

enum Channel : int { kT1 = 0, kT2 = 1 };

/// Hyperparameters of one label in one channel: the per-sample mean is drawn
/// from Normal(mean_center, mean_spread), the per-sample stddev from
/// Normal(std_center, std_spread).
struct ChannelPrior {
  double mean_center = 0.0;
  double mean_spread = 0.0;
  double std_center = 1.0;
  double std_spread = 0.0;
  bool operator==(const ChannelPrior&) const = default;
};

struct LabelPrior {
  std::int32_t id = 0;
  std::string name;
  std::array<ChannelPrior, 2> channel;
  bool operator==(const LabelPrior&) const = default;
};

struct GmmHyperParams {
  std::vector<LabelPrior> labels;
  /// Lower bound on any sampled stddev, per channel.
  std::array<double, 2> std_floor{1e-3, 1e-3};
  double inflation = 5.0;

  /// nullptr when absent.
  const LabelPrior* find(std::int32_t id) const;
  void validate() const;
  bool operator==(const GmmHyperParams&) const = default;
};

struct ExampleScan {
  Volume t1;
  Volume t2;
  LabelVolume seg;
};

/// Robust per-label, per-channel priors from example scans with coarse
/// segmentations.
///
/// Centres pool the label's voxels over all scans (median, 1.4826 x MAD, the
/// latter floored at 1e-3 of the channel's intensity range). Spreads are the
/// cross-scan robust scale of the per-scan statistics times `inflation`; a
/// label seen in a single scan gets 0.2 x its raw robust scale instead.
/// Throws EstimationError naming any label in `labels` with no voxels.
GmmHyperParams estimate_hyperparams(std::span<const ExampleScan> scans, const LabelTable& labels,
                                    double inflation = 5.0);

std::string hyperparams_to_json(const GmmHyperParams& h);
GmmHyperParams hyperparams_from_json(const std::string& text);
void save_hyperparams(const GmmHyperParams& h, const std::filesystem::path& path);
GmmHyperParams load_hyperparams(const std::filesystem::path& path);

}  // namespace lfsr
