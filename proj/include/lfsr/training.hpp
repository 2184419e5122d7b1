/**
 * @file training.hpp
 * @brief Adam, segmenter pre-training, super-resolution training and inference.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lfsr/generator.hpp"
#include "lfsr/losses.hpp"
#include "lfsr/unet.hpp"

namespace lfsr::train {

template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double beta1, double beta2, double eps);

  /// One bias-corrected update; a learning rate of 0 leaves params untouched.
  void step(std::vector<T>& params, const std::vector<T>& grads, double learning_rate);
  std::uint64_t steps() const { return t_; }

 private:
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::uint64_t t_ = 0;
  std::vector<T> m_, v_;
};

struct Schedule {
  double learning_rate = 1e-4;
  std::uint64_t iterations = 0;
  int batch_size = 1;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  /// Generator workers; 1 is the deterministic mode.
  int workers = 1;
};

/// Called after every iteration with (iteration just completed, loss).
using Progress = std::function<void(std::uint64_t, double)>;

struct LossEval {
  double total = 0.0;
  double intensity = 0.0;
  double dice = 0.0;  // mean soft Dice, 0 without a segmenter
};

/// Combined objective on a one-channel prediction. The segmenter (may be
/// null, skipped at lambda 0) only receives an input gradient; its parameters
/// are never touched. `truth` holds per-voxel label-table indices. Writes d(loss)/d(pred) into
/// `grad_pred` when non-null.
template <typename T>
LossEval sr_loss(const nn::Tensor<T>& pred, std::span<const T> target, const nn::UNet<T>* segmenter,
                 std::span<const std::int32_t> truth, double lambda, nn::Tensor<T>* grad_pred);

struct SegmenterResult {
  nn::UNet<float> net;
  LabelTable labels;
  std::vector<double> loss_history;
  double heldout_dice = 0.0;
  bool met_floor = false;
  std::string report;
};

/// Trains a softmax U-net on (deformed HR intensity, deformed labels) pairs
/// with loss 1 - mean soft Dice. Held-out Dice is measured on `heldout_count`
/// samples of `heldout`. Missing the floor is reported, not thrown.
SegmenterResult pretrain_segmenter(const nn::UNetSpec& spec, const gen::SampleFactory& data,
                                   const gen::SampleFactory& heldout, int heldout_count, const Schedule& schedule,
                                   std::uint64_t init_seed, double dice_floor, const Progress& progress = {});

/// Mean soft Dice of `segmenter` on `image` against `truth`.
double segmenter_dice(const nn::UNet<float>& segmenter, const LabelTable& labels, const Volume& image,
                      const LabelVolume& truth);

struct SrState {
  nn::UNet<float> net;
  Adam<float> optimizer;
  std::uint64_t iteration = 0;
  double learning_rate = 1e-4;
  std::vector<double> loss_history;
  std::vector<double> intensity_history;
  std::vector<double> dice_history;
};

SrState init_sr(const nn::UNetSpec& spec, std::uint64_t init_seed, const Schedule& schedule);

/// Runs `schedule.iterations` more iterations, drawing samples
/// [iteration * batch, ...) from `data`. Throws TrainingError on a non-finite
/// loss (with a JSON snapshot) or if the segmenter's parameter hash changes;
/// the hash is checked every `hash_every` iterations and at the end.
void train_sr(SrState& state, const gen::SampleFactory& data, const nn::UNet<float>* segmenter, double lambda,
              const Schedule& schedule, const Progress& progress = {}, int hash_every = 100);

/// Zero-pads to the divisibility the network needs, runs it and crops back.
nn::Tensor<float> run_padded(const nn::UNet<float>& net, const nn::Tensor<float>& input);

/// Synthetic HR volume on the T1 grid. T2 is resampled onto the T1 grid when
/// the geometries differ; both are min-max normalised first.
Volume infer(const nn::UNet<float>& net, const Volume& t1, const Volume& t2);

/// Softmax output of a segmentation network as a SoftSegmentation.
SoftSegmentation segment(const nn::UNet<float>& net, const LabelTable& labels, const Volume& image);

}  // namespace lfsr::train
