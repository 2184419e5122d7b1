#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lfsr/rng.hpp"
#include "lfsr/volume.hpp"

namespace lfsr::phantoms {

enum class Shape { Sphere, Box, Ellipsoid };

/// One solid primitive. `size_mm` holds the radius in [0] for spheres, full
/// edge lengths for boxes and semi-axes for ellipsoids.
struct Primitive {
  Shape shape = Shape::Sphere;
  std::int32_t label = 1;
  std::string name;
  Vec3 center_mm{0, 0, 0};
  Vec3 size_mm{1, 1, 1};
  double intensity = 1.0;
};

/// Later primitives overwrite earlier ones where they overlap.
struct PhantomSpec {
  Grid grid;
  std::vector<Primitive> primitives;
  double texture_std = 0.0;
};

struct Phantom {
  Volume image;
  LabelVolume labels;
  std::map<std::int32_t, std::size_t> voxel_counts;  // ground truth, includes background
};

/// Voxel-centre membership rasterisation plus optional Normal texture.
/// Throws InputError for label 0 or a primitive that leaves the grid.
Phantom render(const PhantomSpec& spec, Rng& rng);

/// Analytic volume of a primitive in mm^3.
double analytic_volume(const Primitive& p);

/// Brain-like phantom: cortex shell, white matter core, paired ventricles.
/// Labels 1 "cortex", 2 "white-matter", 3 "ventricles"; geometry jittered by `rng`.
PhantomSpec brain_phantom_spec(Rng& rng, const Index3& dims, const Vec3& spacing, double texture_std);

constexpr std::int32_t kCortex = 1;
constexpr std::int32_t kWhiteMatter = 2;
constexpr std::int32_t kVentricles = 3;
/// Label table shared by every brain phantom (background + 3 structures).
LabelTable brain_label_table();

PhantomSpec parse_phantom_spec(const std::string& json_text);
PhantomSpec load_phantom_spec(const std::filesystem::path& path);

}  // namespace lfsr::phantoms
