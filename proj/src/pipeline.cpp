#include "lfsr/pipeline.hpp"

#include <algorithm>
#include <map>

#include "lfsr/errors.hpp"
#include "lfsr/nifti.hpp"
#include "lfsr/phantoms.hpp"

namespace lfsr::pipeline {

namespace {

// Nominal low-field contrasts per phantom label: background, cortex, WM, ventricles.
constexpr double kT1Contrast[4] = {0.02, 0.45, 0.70, 0.15};
constexpr double kT2Contrast[4] = {0.02, 0.55, 0.40, 0.90};
constexpr double kScanJitter = 0.03;
constexpr double kVoxelNoise = 0.04;

}  // namespace

std::vector<gen::SourceScan> phantom_pool(const PhantomPoolConfig& cfg, std::uint64_t seed) {
  if (cfg.count < 1) throw ConfigError("phantom pool count must be >= 1");
  std::vector<gen::SourceScan> pool;
  const Rng root(seed);
  for (int n = 0; n < cfg.count; ++n) {
    Rng r = root.child(static_cast<std::uint64_t>(n));
    Rng geo = r.child("geometry"), tex = r.child("texture");
    const auto spec = phantoms::brain_phantom_spec(geo, cfg.dims, cfg.spacing, cfg.texture_std);
    auto ph = phantoms::render(spec, tex);
    pool.push_back({std::move(ph.image), LabelVolume(ph.labels.grid(),
                                                     std::vector<std::int32_t>(ph.labels.labels().begin(),
                                                                               ph.labels.labels().end()),
                                                     phantoms::brain_label_table())});
  }
  return pool;
}

std::vector<ExampleScan> phantom_example_scans(const PhantomPoolConfig& cfg, std::uint64_t seed, int count) {
  PhantomPoolConfig c = cfg;
  c.count = count;
  c.texture_std = 0.0;
  auto pool = phantom_pool(c, seed);
  const Rng root = Rng(seed).child("contrast");
  std::vector<ExampleScan> scans;
  for (int n = 0; n < count; ++n) {
    Rng r = root.child(static_cast<std::uint64_t>(n));
    double t1[4], t2[4];
    for (int l = 0; l < 4; ++l) {
      t1[l] = kT1Contrast[l] + r.normal(0.0, kScanJitter);
      t2[l] = kT2Contrast[l] + r.normal(0.0, kScanJitter);
    }
    const LabelVolume& seg = pool[n].seg;
    std::vector<double> a(seg.size()), b(seg.size());
    for (std::size_t v = 0; v < seg.size(); ++v) {
      const int l = std::clamp(seg[v], 0, 3);
      a[v] = t1[l] + r.normal(0.0, kVoxelNoise);
      b[v] = t2[l] + r.normal(0.0, kVoxelNoise);
    }
    scans.push_back({Volume(seg.grid(), std::move(a)), Volume(seg.grid(), std::move(b)), seg});
  }
  return scans;
}

GmmHyperParams phantom_hyperparams(const PhantomPoolConfig& cfg, std::uint64_t seed, double inflation) {
  const auto scans = phantom_example_scans(cfg, seed, 5);
  return estimate_hyperparams(scans, phantoms::brain_label_table(), inflation);
}

std::vector<gen::SourceScan> load_sources(const PipelineConfig& cfg) {
  if (cfg.sources.empty()) return phantom_pool(cfg.phantoms, Rng(cfg.seed).child("phantom-pool").seed());
  std::vector<Volume> images;
  std::vector<LabelVolume> segs;
  std::map<std::int32_t, std::string> names;
  for (const auto& s : cfg.sources) {
    images.push_back(io::read_volume(s.image));
    segs.push_back(io::read_label_volume(s.seg));
    if (!same_geometry(images.back().grid(), segs.back().grid()))
      throw GeometryError("source " + s.image + " and " + s.seg + " have different grids");
    for (const auto& e : segs.back().table()) names.emplace(e.id, e.name);
  }
  LabelTable table;
  for (const auto& [id, name] : names) table.push_back({id, name});
  if (names.find(0) == names.end()) table.insert(table.begin(), LabelEntry{0, "background"});
  std::vector<gen::SourceScan> pool;
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto& l = segs[n].labels();
    pool.push_back({std::move(images[n]),
                    LabelVolume(segs[n].grid(), std::vector<std::int32_t>(l.begin(), l.end()), table)});
  }
  return pool;
}

GmmHyperParams load_or_derive_hyperparams(const PipelineConfig& cfg) {
  if (!cfg.hyperparams.empty()) return load_hyperparams(cfg.hyperparams);
  if (!cfg.sources.empty())
    throw ConfigError("config key \"hyperparams\" is required when real sources are configured");
  return phantom_hyperparams(cfg.phantoms, Rng(cfg.seed).child("example-scans").seed());
}

gen::SampleFactory make_factory(const PipelineConfig& cfg, std::vector<gen::SourceScan> pool, GmmHyperParams hyper,
                                std::uint64_t stream_seed) {
  return gen::SampleFactory(std::move(pool), std::move(hyper), cfg.generator, cfg.training.crop_size, stream_seed);
}

nn::UNetSpec synthesis_spec(const NetworkConfig& net) {
  return {net.levels, net.layers_per_level, net.base_filters, 2, 1, nn::Head::Linear};
}

nn::UNetSpec segmenter_spec(const NetworkConfig& net, int labels) {
  return {net.levels, net.layers_per_level, net.base_filters, 1, labels, nn::Head::Softmax};
}

train::Schedule sr_schedule(const PipelineConfig& cfg) {
  train::Schedule s;
  s.learning_rate = cfg.training.learning_rate;
  s.iterations = cfg.training.iterations;
  s.batch_size = cfg.training.batch_size;
  s.beta1 = cfg.training.adam_beta1;
  s.beta2 = cfg.training.adam_beta2;
  s.epsilon = cfg.training.adam_epsilon;
  s.workers = cfg.workers;
  return s;
}

train::Schedule segmenter_schedule(const PipelineConfig& cfg) {
  train::Schedule s = sr_schedule(cfg);
  s.learning_rate = cfg.training.segmenter_learning_rate;
  s.iterations = cfg.training.segmenter_iterations;
  return s;
}

}  // namespace lfsr::pipeline
