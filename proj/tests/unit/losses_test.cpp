#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "lfsr/errors.hpp"
#include "lfsr/losses.hpp"
#include "lfsr/rng.hpp"
#include "lfsr/training.hpp"
#include "lfsr/unet.hpp"

using namespace lfsr;

namespace {

Volume uniform_volume(const Grid& g, Rng& rng) {
  std::vector<double> d(g.voxel_count());
  for (auto& v : d) v = rng.uniform(0, 1);
  return Volume(g, d);
}

LabelVolume random_labels(const Grid& g, Rng& rng, int labels) {
  std::vector<std::int32_t> lab(g.voxel_count());
  for (auto& l : lab) l = static_cast<std::int32_t>(rng.index(labels));
  LabelTable t;
  for (int l = 0; l < labels; ++l) t.push_back({l, "l" + std::to_string(l)});
  return LabelVolume(g, lab, t);
}

// Softmax of fixed per-label affine functions of the intensity: a smooth,
// deterministic stand-in for a segmentation network.
SoftSegmentation toy_segmenter(const Volume& v, const LabelTable& table) {
  const std::size_t L = table.size(), N = v.size();
  std::vector<double> p(L * N);
  for (std::size_t n = 0; n < N; ++n) {
    double z = 0.0;
    for (std::size_t l = 0; l < L; ++l) z += p[l * N + n] = std::exp(3.0 * v[n] * (l + 1) - 1.5 * l);
    for (std::size_t l = 0; l < L; ++l) p[l * N + n] /= z;
  }
  return SoftSegmentation(v.grid(), table, p);
}

double dice_oracle(const SoftSegmentation& s, const LabelVolume& truth) {
  double total = 0.0;
  for (std::size_t l = 0; l < s.labels(); ++l) {
    double i = 0, p = 0, t = 0;
    for (std::size_t n = 0; n < s.voxels(); ++n) {
      const double tn = truth[n] == s.table()[l].id ? 1.0 : 0.0;
      i += s.channel(l)[n] * tn;
      p += s.channel(l)[n];
      t += tn;
    }
    total += (2 * i + 1e-6) / (p + t + 1e-6);
  }
  return total / s.labels();
}

}  // namespace

TEST(IntensityLoss, ZeroAndConstantOffset) {
  Rng rng(1);
  const Grid g = Grid::make({5, 5, 5}, {1, 1, 1});
  const Volume t = uniform_volume(g, rng);
  EXPECT_EQ(intensity_loss(t, t), 0.0);
  std::vector<double> shifted(t.data().begin(), t.data().end());
  for (auto& v : shifted) v += 0.3;
  EXPECT_NEAR(intensity_loss(Volume(g, shifted), t), 0.3, 1e-12);
}

TEST(IntensityLoss, MatchesElementwiseSum) {
  Rng rng(2);
  const Grid g = Grid::make({8, 8, 8}, {1, 1, 1});
  const Volume p = uniform_volume(g, rng), t = uniform_volume(g, rng);
  double s = 0.0;
  for (std::size_t n = 0; n < p.size(); ++n) s += std::abs(p[n] - t[n]);
  EXPECT_NEAR(intensity_loss(p, t), s / 512.0, 1e-7);
  EXPECT_GT(intensity_loss(p, t), 0.0);
}

TEST(IntensityLoss, GridMismatch) {
  const Volume a(Grid::make({2, 2, 2}, {1, 1, 1}), 0.0), b(Grid::make({2, 2, 2}, {2, 1, 1}), 0.0);
  EXPECT_THROW(intensity_loss(a, b), GeometryError);
}

TEST(SoftDice, OneHotTruthIsPerfect) {
  Rng rng(3);
  const LabelVolume t = random_labels(Grid::make({6, 6, 6}, {1, 1, 1}), rng, 4);
  const DiceResult d = soft_dice(SoftSegmentation::one_hot(t), t);
  for (double v : d.per_label) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(d.mean, 1.0);
}

TEST(SoftDice, DisjointIsNearZero) {
  const Grid g = Grid::make({4, 4, 1}, {1, 1, 1});
  std::vector<std::int32_t> a(16), b(16);
  for (int n = 0; n < 16; ++n) {
    a[n] = n < 8;
    b[n] = n >= 8;
  }
  const LabelTable table{{0, "bg"}, {1, "x"}};
  const DiceResult d = soft_dice(SoftSegmentation::one_hot(LabelVolume(g, b, table)), LabelVolume(g, a, table));
  EXPECT_LE(d.per_label[1], 1e-6 / 16);
}

TEST(SoftDice, HalfOverlap) {
  // |A| = |B| = 8 with 4 shared voxels
  const Grid g = Grid::make({16, 1, 1}, {1, 1, 1});
  std::vector<std::int32_t> a(16, 0), b(16, 0);
  for (int n = 0; n < 8; ++n) a[n] = 1;
  for (int n = 4; n < 12; ++n) b[n] = 1;
  const LabelTable table{{0, "bg"}, {1, "x"}};
  const LabelVolume A(g, a, table), B(g, b, table);
  EXPECT_NEAR(soft_dice(SoftSegmentation::one_hot(B), A).per_label[1], 0.5, 1e-7);
  EXPECT_NEAR(hard_dice(B, A).per_label[1], 0.5, 1e-7);
}

TEST(SoftDice, PermutationInvariantAndBounded) {
  Rng rng(4);
  const Grid g = Grid::make({5, 4, 3}, {1, 1, 1});
  const LabelVolume t = random_labels(g, rng, 3);
  const Volume v = uniform_volume(g, rng);
  const SoftSegmentation s = toy_segmenter(v, t.table());
  const DiceResult d = soft_dice(s, t);
  for (double x : d.per_label) {
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
  std::vector<std::size_t> perm(g.voxel_count());
  for (std::size_t n = 0; n < perm.size(); ++n) perm[n] = n;
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  std::vector<double> pv(v.size());
  std::vector<std::int32_t> pt(v.size());
  for (std::size_t n = 0; n < perm.size(); ++n) {
    pv[n] = v[perm[n]];
    pt[n] = t[perm[n]];
  }
  const DiceResult e = soft_dice(toy_segmenter(Volume(g, pv), t.table()), LabelVolume(g, pt, t.table()));
  for (std::size_t l = 0; l < 3; ++l) EXPECT_NEAR(d.per_label[l], e.per_label[l], 1e-12);
}

TEST(SoftDice, ChannelMismatch) {
  Rng rng(5);
  const Grid g = Grid::make({3, 3, 3}, {1, 1, 1});
  const LabelVolume t = random_labels(g, rng, 3);
  const LabelVolume other = random_labels(g, rng, 2);
  EXPECT_THROW(soft_dice(SoftSegmentation::one_hot(other), t), ShapeError);
}

TEST(SoftSegmentation, ValidatesSimplex) {
  const Grid g = Grid::make({1, 1, 1}, {1, 1, 1});
  const LabelTable t{{0, "a"}, {1, "b"}};
  EXPECT_THROW(SoftSegmentation(g, t, {0.7, 0.7}), InputError);
  EXPECT_THROW(SoftSegmentation(g, t, {1.2, -0.2}), InputError);
  EXPECT_THROW(SoftSegmentation(g, t, {1.0}), ShapeError);
  EXPECT_NO_THROW(SoftSegmentation(g, t, {0.3, 0.7 + 5e-6}));
}

TEST(CombinedLoss, PerfectCase) {
  Rng rng(6);
  const Grid g = Grid::make({4, 4, 4}, {1, 1, 1});
  const LabelVolume truth = random_labels(g, rng, 4);
  const Volume v = uniform_volume(g, rng);
  const Segmenter perfect = [&](const Volume&) { return SoftSegmentation::one_hot(truth); };
  EXPECT_EQ(combined_loss(v, v, perfect, truth, {0.25}).total, -0.25);
}

TEST(CombinedLoss, LambdaZeroIsIntensityLossAndSkipsSegmenter) {
  Rng rng(7);
  const Grid g = Grid::make({4, 4, 4}, {1, 1, 1});
  const LabelVolume truth = random_labels(g, rng, 3);
  const Volume p = uniform_volume(g, rng), t = uniform_volume(g, rng);
  int calls = 0;
  const Segmenter counting = [&](const Volume& x) {
    ++calls;
    return toy_segmenter(x, truth.table());
  };
  EXPECT_EQ(combined_loss(p, t, counting, truth, {0.0}).total, intensity_loss(p, t));
  EXPECT_EQ(calls, 0);
  EXPECT_THROW(combined_loss(p, t, counting, truth, {-1.0}), ConfigError);
}

TEST(CombinedLoss, MatchesCompositionOracle) {
  Rng rng(8);
  const Grid g = Grid::make({5, 4, 3}, {1, 1, 1});
  const LabelVolume truth = random_labels(g, rng, 3);
  const Volume p = uniform_volume(g, rng), t = uniform_volume(g, rng);
  const Segmenter seg = [&](const Volume& x) { return toy_segmenter(x, truth.table()); };
  double l1 = 0.0;
  for (std::size_t n = 0; n < p.size(); ++n) l1 += std::abs(p[n] - t[n]);
  l1 /= p.size();
  const double expect = l1 - 0.25 * dice_oracle(toy_segmenter(p, truth.table()), truth);
  EXPECT_NEAR(combined_loss(p, t, seg, truth, {0.25}).total, expect, 1e-6);
}

TEST(CombinedLoss, MonotoneInDice) {
  const Grid g = Grid::make({16, 1, 1}, {1, 1, 1});
  std::vector<std::int32_t> a(16, 0);
  for (int n = 0; n < 8; ++n) a[n] = 1;
  const LabelTable table{{0, "bg"}, {1, "x"}};
  const LabelVolume truth(g, a, table);
  const Volume v(g, 0.5);
  double prev = INFINITY;
  for (int shift = 8; shift >= 0; --shift) {
    std::vector<std::int32_t> b(16, 0);
    for (int n = shift; n < shift + 8; ++n) b[n] = 1;
    const LabelVolume guess(g, b, table);
    const Segmenter seg = [&](const Volume&) { return SoftSegmentation::one_hot(guess); };
    const double total = combined_loss(v, v, seg, truth, {0.25}).total;
    EXPECT_LT(total, prev);
    prev = total;
  }
}

namespace {

// Central-difference check of d(sr_loss)/d(pred) at 20 voxels on a 6^3
// instance with a small softmax U-net as the frozen segmenter.
template <typename T>
double worst_gradient_error(double h) {
  Rng rng(9);
  const nn::UNetSpec spec{2, 1, 3, 1, 3, nn::Head::Softmax};
  const nn::UNet<T> seg = nn::UNet<T>::build(spec, rng);
  nn::Tensor<T> pred(1, {6, 6, 6});
  std::vector<T> target(216);
  std::vector<std::int32_t> truth(216);
  for (std::size_t n = 0; n < 216; ++n) {
    pred.data[n] = static_cast<T>(rng.uniform(0, 1));
    // keep every voxel well away from the L1 kink
    target[n] = static_cast<T>(pred.data[n] + (rng.uniform(0, 1) < 0.5 ? -1 : 1) * rng.uniform(0.05, 0.5));
    truth[n] = static_cast<std::int32_t>(rng.index(3));
  }
  nn::Tensor<T> grad;
  train::sr_loss<T>(pred, target, &seg, truth, 0.25, &grad);
  double worst = 0.0;
  for (int s = 0; s < 20; ++s) {
    const std::size_t n = rng.index(216);
    nn::Tensor<T> up = pred, dn = pred;
    up.data[n] += static_cast<T>(h);
    dn.data[n] -= static_cast<T>(h);
    const double step = static_cast<double>(up.data[n]) - static_cast<double>(dn.data[n]);
    const double fd = (train::sr_loss<T>(up, target, &seg, truth, 0.25, nullptr).total -
                       train::sr_loss<T>(dn, target, &seg, truth, 0.25, nullptr).total) /
                      step;
    worst = std::max(worst, std::abs(fd - grad.data[n]) / std::max(std::abs(fd), 1e-12));
  }
  return worst;
}

}  // namespace

TEST(CombinedLoss, GradientMatchesFiniteDifferencesDouble) { EXPECT_LT(worst_gradient_error<double>(1e-6), 1e-5); }

TEST(CombinedLoss, GradientMatchesFiniteDifferencesFloat) { EXPECT_LT(worst_gradient_error<float>(1e-3), 1e-2); }
