#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lfsr/volume.hpp"

namespace lfsr {

/// Random spatial augmentation ranges. Rotation about each axis is uniform in
/// +-max_rotation_deg, per-axis scaling uniform in [1 - s, 1 + s], translation
/// uniform in +-max_translation_mm, and a control_grid^3 lattice of
/// displacement vectors with per-component Normal(0, control_std_mm),
/// truncated at 3 standard deviations.
struct DeformationParams {
  double max_rotation_deg = 15.0;
  double max_scaling = 0.15;
  double max_translation_mm = 10.0;
  int control_grid = 5;
  double control_std_mm = 3.0;
  bool operator==(const DeformationParams&) const = default;
};

struct BiasFieldSpec {
  Index3 control_dims{4, 4, 4};
  double log_std = 0.3;
  bool operator==(const BiasFieldSpec&) const = default;
};

struct GeneratorConfig {
  DeformationParams deformation;
  Vec3 t1_spacing{1.6, 1.6, 5.0};
  Vec3 t2_spacing{1.5, 1.5, 5.0};
  /// Rician noise sigma range as a fraction of each channel's intensity range.
  std::array<double, 2> noise_sigma{0.01, 0.10};
  BiasFieldSpec bias_t1;
  BiasFieldSpec bias_t2;
  bool operator==(const GeneratorConfig&) const = default;
};

struct NetworkConfig {
  int levels = 2;
  int layers_per_level = 2;
  int base_filters = 8;
  bool operator==(const NetworkConfig&) const = default;
};

struct TrainingConfig {
  double learning_rate = 1e-4;
  std::uint64_t iterations = 2000;
  Index3 crop_size{32, 32, 32};
  int batch_size = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double segmenter_learning_rate = 1e-3;
  std::uint64_t segmenter_iterations = 2000;
  double segmenter_dice_floor = 0.8;
  bool operator==(const TrainingConfig&) const = default;
};

/// Built-in phantom anatomy used when no real sources are configured.
struct PhantomPoolConfig {
  int count = 8;
  Index3 dims{32, 32, 32};
  Vec3 spacing{1.0, 1.0, 1.0};
  double texture_std = 0.02;
  bool operator==(const PhantomPoolConfig&) const = default;
};

struct SourcePair {
  std::string image;
  std::string seg;
  bool operator==(const SourcePair&) const = default;
};

struct PipelineConfig {
  std::string preset = "toy";
  double lambda = 0.25;
  GeneratorConfig generator;
  NetworkConfig network;
  TrainingConfig training;
  PhantomPoolConfig phantoms;
  std::vector<SourcePair> sources;
  std::string hyperparams;  // optional path to an estimate-hyperparams JSON file
  std::uint64_t seed = 0;
  int workers = 1;

  /// Throws ConfigError naming the violated invariant.
  void validate() const;
  bool operator==(const PipelineConfig&) const = default;
};

/// Desk-scale defaults (2 levels, 8 filters, 32^3 crops, 2000 iterations).
PipelineConfig toy_preset();
/// Published-scale defaults (5 levels, 24 filters, 160^3 crops, 200000 iterations).
PipelineConfig full_preset();

/// Parses JSON text. Unknown keys are rejected with their dotted path; a
/// "preset" key ("toy" or "full") selects the defaults the other keys override.
PipelineConfig parse_config(const std::string& json_text);
PipelineConfig load_config(const std::filesystem::path& path);
std::string dump_config(const PipelineConfig& cfg);

}  // namespace lfsr
