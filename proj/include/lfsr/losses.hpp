/**
 * @file losses.hpp
 * @brief Intensity L1 loss, soft Dice and their combination.
 *
 * The span overloads are templated so the network code can run them in float
 * or double and get gradients alongside; the Volume overloads are the plain
 * double-precision interface.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lfsr/errors.hpp"
#include "lfsr/volume.hpp"

namespace lfsr {

constexpr double kDiceEpsilon = 1e-6;

struct LossWeights {
  double lambda = 0.25;
  void validate() const;
};

/// Per-voxel probabilities over the labels of a table, channel-major:
/// prob[l * voxels + n].
class SoftSegmentation {
 public:
  SoftSegmentation() = default;
  /// Throws ShapeError on size mismatch, InputError when a probability leaves
  /// [0, 1] or a voxel's sum is off by more than 1e-5.
  SoftSegmentation(Grid grid, LabelTable table, std::vector<double> prob);

  static SoftSegmentation one_hot(const LabelVolume& seg);

  const Grid& grid() const { return grid_; }
  const LabelTable& table() const { return table_; }
  std::size_t labels() const { return table_.size(); }
  std::size_t voxels() const { return grid_.voxel_count(); }
  std::span<const double> prob() const { return prob_; }
  std::span<const double> channel(std::size_t l) const {
    return std::span<const double>(prob_).subspan(l * voxels(), voxels());
  }
  /// Hard labels by per-voxel argmax (first label wins ties).
  LabelVolume argmax() const;

 private:
  Grid grid_;
  LabelTable table_;
  std::vector<double> prob_;
};

struct DiceResult {
  std::vector<double> per_label;
  double mean = 0.0;
};

/// Mean absolute error. With `grad` non-empty it receives d(loss)/d(pred),
/// sign(pred - target) / N (0 where equal).
template <typename T>
T intensity_loss(std::span<const T> pred, std::span<const T> target, std::span<T> grad = {}) {
  if (pred.size() != target.size() || pred.empty()) throw ShapeError("intensity loss: size mismatch");
  const T inv = T(1) / static_cast<T>(pred.size());
  double sum = 0.0;
  for (std::size_t n = 0; n < pred.size(); ++n) sum += std::abs(static_cast<double>(pred[n]) - target[n]);
  if (!grad.empty()) {
    if (grad.size() != pred.size()) throw ShapeError("intensity loss: gradient size mismatch");
    for (std::size_t n = 0; n < pred.size(); ++n)
      grad[n] = pred[n] > target[n] ? inv : (pred[n] < target[n] ? -inv : T(0));
  }
  return static_cast<T>(sum / static_cast<double>(pred.size()));
}

/// Soft Dice per label, (2 sum p t + eps) / (sum p + sum t + eps), and the mean
/// over all `labels` channels. `prob` is channel-major, `truth` holds the
/// channel index of every voxel. With `grad` non-empty it receives
/// d(mean Dice)/d(prob).
template <typename T>
DiceResult soft_dice(std::span<const T> prob, std::span<const std::int32_t> truth, std::size_t labels,
                     std::span<T> grad = {}, double eps = kDiceEpsilon) {
  const std::size_t n_vox = truth.size();
  if (labels == 0 || prob.size() != labels * n_vox) throw ShapeError("soft dice: channel/label mismatch");
  for (std::int32_t t : truth)
    if (t < 0 || static_cast<std::size_t>(t) >= labels) throw ShapeError("soft dice: truth index out of range");
  if (!grad.empty() && grad.size() != prob.size()) throw ShapeError("soft dice: gradient size mismatch");
  DiceResult r;
  r.per_label.resize(labels);
  for (std::size_t l = 0; l < labels; ++l) {
    const T* p = prob.data() + l * n_vox;
    double inter = 0.0, psum = 0.0, tsum = 0.0;
    for (std::size_t n = 0; n < n_vox; ++n) {
      const bool t = static_cast<std::size_t>(truth[n]) == l;
      psum += p[n];
      if (t) {
        inter += p[n];
        tsum += 1.0;
      }
    }
    const double num = 2.0 * inter + eps, den = psum + tsum + eps;
    r.per_label[l] = num / den;
    if (!grad.empty()) {
      const double scale = 1.0 / static_cast<double>(labels);
      const double g_in = scale * 2.0 / den, g_out = -scale * num / (den * den);
      T* g = grad.data() + l * n_vox;
      for (std::size_t n = 0; n < n_vox; ++n)
        g[n] = static_cast<T>((static_cast<std::size_t>(truth[n]) == l ? g_in : 0.0) + g_out);
    }
  }
  double s = 0.0;
  for (double d : r.per_label) s += d;
  r.mean = s / static_cast<double>(labels);
  return r;
}

/// Channel index of every voxel of `seg` within `table`; throws ShapeError
/// for a label the table lacks.
std::vector<std::int32_t> table_indices(const LabelVolume& seg, const LabelTable& table);

double intensity_loss(const Volume& pred, const Volume& target);

/// Throws GeometryError on grid mismatch and ShapeError when the prediction's
/// table differs from the truth's.
DiceResult soft_dice(const SoftSegmentation& pred, const LabelVolume& truth);

/// The same score on hard label maps (Dice of equality masks, eps-smoothed).
DiceResult hard_dice(const LabelVolume& pred, const LabelVolume& truth);

using Segmenter = std::function<SoftSegmentation(const Volume&)>;

struct CombinedLoss {
  double total = 0.0;
  double intensity = 0.0;
  DiceResult dice;
};

/// intensity_loss(pred, target) - lambda * mean soft Dice of seg_net(pred).
/// The segmenter is not evaluated when lambda is 0.
CombinedLoss combined_loss(const Volume& pred, const Volume& target, const Segmenter& seg_net,
                           const LabelVolume& truth, const LossWeights& w);

}  // namespace lfsr
