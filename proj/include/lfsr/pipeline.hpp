/**
 * @file pipeline.hpp
 * @brief Glue between a PipelineConfig and the library: source pools,
 * hyperparameters, sample factories and network specs.
 */
#pragma once

#include <cstdint>
#include <vector>

#include "lfsr/config.hpp"
#include "lfsr/generator.hpp"
#include "lfsr/hyperparams.hpp"
#include "lfsr/training.hpp"
#include "lfsr/unet.hpp"

namespace lfsr::pipeline {

/// `count` brain phantoms; the rendered image plays the HR MPRAGE.
std::vector<gen::SourceScan> phantom_pool(const PhantomPoolConfig& cfg, std::uint64_t seed);

/// Low-field-like T1/T2 example scans over brain phantoms: per-label
/// contrasts with per-scan jitter and voxel noise.
std::vector<ExampleScan> phantom_example_scans(const PhantomPoolConfig& cfg, std::uint64_t seed, int count);

/// Priors estimated from `phantom_example_scans`.
GmmHyperParams phantom_hyperparams(const PhantomPoolConfig& cfg, std::uint64_t seed, double inflation = 5.0);

/// Configured NIfTI sources (labels merged into one table across sources), or
/// the phantom pool when none are configured.
std::vector<gen::SourceScan> load_sources(const PipelineConfig& cfg);

/// The configured hyperparameter file, or phantom-derived priors when none
/// is set and the sources are phantoms. Throws ConfigError otherwise.
GmmHyperParams load_or_derive_hyperparams(const PipelineConfig& cfg);

/// Factory over the configured sources with its own stream seed.
gen::SampleFactory make_factory(const PipelineConfig& cfg, std::vector<gen::SourceScan> pool, GmmHyperParams hyper,
                                std::uint64_t stream_seed);

nn::UNetSpec synthesis_spec(const NetworkConfig& net);
nn::UNetSpec segmenter_spec(const NetworkConfig& net, int labels);

train::Schedule sr_schedule(const PipelineConfig& cfg);
train::Schedule segmenter_schedule(const PipelineConfig& cfg);

}  // namespace lfsr::pipeline
