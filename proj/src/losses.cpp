#include "lfsr/losses.hpp"

#include <algorithm>
#include <string>

namespace lfsr {

void LossWeights::validate() const {
  if (!std::isfinite(lambda) || lambda < 0.0) throw ConfigError("loss weight lambda must be finite and >= 0");
}

SoftSegmentation::SoftSegmentation(Grid grid, LabelTable table, std::vector<double> prob)
    : grid_(std::move(grid)), table_(std::move(table)), prob_(std::move(prob)) {
  grid_.validate();
  const std::size_t n = grid_.voxel_count();
  if (table_.empty() || prob_.size() != table_.size() * n)
    throw ShapeError("soft segmentation: expected " + std::to_string(table_.size()) + " channels of " +
                     std::to_string(n) + " voxels");
  for (double p : prob_)
    if (!(p >= 0.0 && p <= 1.0)) throw InputError("soft segmentation: probability outside [0, 1]");
  for (std::size_t v = 0; v < n; ++v) {
    double s = 0.0;
    for (std::size_t l = 0; l < table_.size(); ++l) s += prob_[l * n + v];
    if (std::abs(s - 1.0) > 1e-5) throw InputError("soft segmentation: probabilities do not sum to 1");
  }
}

SoftSegmentation SoftSegmentation::one_hot(const LabelVolume& seg) {
  const std::size_t n = seg.size();
  std::vector<double> prob(seg.table().size() * n, 0.0);
  for (std::size_t v = 0; v < n; ++v) prob[static_cast<std::size_t>(seg.table_index(seg[v])) * n + v] = 1.0;
  return SoftSegmentation(seg.grid(), seg.table(), std::move(prob));
}

LabelVolume SoftSegmentation::argmax() const {
  const std::size_t n = voxels();
  std::vector<std::int32_t> out(n);
  for (std::size_t v = 0; v < n; ++v) {
    std::size_t best = 0;
    for (std::size_t l = 1; l < labels(); ++l)
      if (prob_[l * n + v] > prob_[best * n + v]) best = l;
    out[v] = table_[best].id;
  }
  return LabelVolume(grid_, std::move(out), table_);
}

std::vector<std::int32_t> table_indices(const LabelVolume& seg, const LabelTable& table) {
  std::vector<std::int32_t> idx(seg.size());
  for (std::size_t v = 0; v < seg.size(); ++v) {
    const auto it = std::find_if(table.begin(), table.end(), [&](const LabelEntry& e) { return e.id == seg[v]; });
    if (it == table.end()) throw ShapeError("label " + std::to_string(seg[v]) + " missing from the label table");
    idx[v] = static_cast<std::int32_t>(it - table.begin());
  }
  return idx;
}

double intensity_loss(const Volume& pred, const Volume& target) {
  if (!same_geometry(pred.grid(), target.grid())) throw GeometryError("intensity loss: grids differ");
  return intensity_loss<double>(pred.data(), target.data());
}

namespace {

bool same_table(const LabelTable& a, const LabelTable& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].id != b[i].id) return false;
  return true;
}

}  // namespace

DiceResult soft_dice(const SoftSegmentation& pred, const LabelVolume& truth) {
  if (!same_geometry(pred.grid(), truth.grid())) throw GeometryError("soft dice: grids differ");
  if (!same_table(pred.table(), truth.table()))
    throw ShapeError("soft dice: prediction channels do not match the truth label table");
  const auto idx = table_indices(truth, pred.table());
  return soft_dice<double>(pred.prob(), idx, pred.labels());
}

DiceResult hard_dice(const LabelVolume& pred, const LabelVolume& truth) {
  if (!same_geometry(pred.grid(), truth.grid())) throw GeometryError("hard dice: grids differ");
  if (!same_table(pred.table(), truth.table())) throw ShapeError("hard dice: label tables differ");
  return soft_dice(SoftSegmentation::one_hot(pred), truth);
}

CombinedLoss combined_loss(const Volume& pred, const Volume& target, const Segmenter& seg_net,
                           const LabelVolume& truth, const LossWeights& w) {
  w.validate();
  CombinedLoss out;
  out.intensity = intensity_loss(pred, target);
  out.total = out.intensity;
  if (w.lambda > 0.0) {
    out.dice = soft_dice(seg_net(pred), truth);
    out.total = out.intensity - w.lambda * out.dice.mean;
  }
  return out;
}

}  // namespace lfsr
