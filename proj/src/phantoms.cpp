#include "lfsr/phantoms.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lfsr/errors.hpp"

namespace lfsr::phantoms {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool contains(const Primitive& p, const Vec3& x) {
  const double dx = x[0] - p.center_mm[0], dy = x[1] - p.center_mm[1], dz = x[2] - p.center_mm[2];
  switch (p.shape) {
    case Shape::Sphere: return dx * dx + dy * dy + dz * dz <= p.size_mm[0] * p.size_mm[0];
    case Shape::Box:
      return std::abs(dx) <= 0.5 * p.size_mm[0] && std::abs(dy) <= 0.5 * p.size_mm[1] &&
             std::abs(dz) <= 0.5 * p.size_mm[2];
    case Shape::Ellipsoid: {
      const double a = dx / p.size_mm[0], b = dy / p.size_mm[1], c = dz / p.size_mm[2];
      return a * a + b * b + c * c <= 1.0;
    }
  }
  return false;
}

Vec3 half_extent(const Primitive& p) {
  switch (p.shape) {
    case Shape::Sphere: return {p.size_mm[0], p.size_mm[0], p.size_mm[0]};
    case Shape::Box: return {0.5 * p.size_mm[0], 0.5 * p.size_mm[1], 0.5 * p.size_mm[2]};
    case Shape::Ellipsoid: return p.size_mm;
  }
  return {0, 0, 0};
}

// World-space bounding box of the grid's voxel extents.
void grid_bounds(const Grid& g, Vec3& lo, Vec3& hi) {
  lo = {1e300, 1e300, 1e300};
  hi = {-1e300, -1e300, -1e300};
  for (int c = 0; c < 8; ++c) {
    const Vec3 v{(c & 1) ? g.dims[0] - 0.5 : -0.5, (c & 2) ? g.dims[1] - 0.5 : -0.5, (c & 4) ? g.dims[2] - 0.5 : -0.5};
    const Vec3 w = g.affine.apply(v);
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], w[a]);
      hi[a] = std::max(hi[a], w[a]);
    }
  }
}

}  // namespace

double analytic_volume(const Primitive& p) {
  switch (p.shape) {
    case Shape::Sphere: return 4.0 / 3.0 * kPi * std::pow(p.size_mm[0], 3);
    case Shape::Box: return p.size_mm[0] * p.size_mm[1] * p.size_mm[2];
    case Shape::Ellipsoid: return 4.0 / 3.0 * kPi * p.size_mm[0] * p.size_mm[1] * p.size_mm[2];
  }
  return 0.0;
}

Phantom render(const PhantomSpec& spec, Rng& rng) {
  const Grid& g = spec.grid;
  g.validate();
  Vec3 lo, hi;
  grid_bounds(g, lo, hi);
  LabelTable table{{0, "background"}};
  std::set<std::int32_t> ids{0};
  for (const auto& p : spec.primitives) {
    if (p.label <= 0) throw InputError("phantom primitive labels must be > 0");
    for (int a = 0; a < 3; ++a)
      if (!(p.size_mm[a] > 0.0)) throw InputError("phantom primitive sizes must be > 0");
    const Vec3 h = half_extent(p);
    for (int a = 0; a < 3; ++a)
      if (p.center_mm[a] - h[a] < lo[a] - 1e-9 || p.center_mm[a] + h[a] > hi[a] + 1e-9)
        throw InputError("phantom primitive \"" + p.name + "\" extends outside the grid");
    if (ids.insert(p.label).second)
      table.push_back({p.label, p.name.empty() ? "label_" + std::to_string(p.label) : p.name});
  }
  std::sort(table.begin(), table.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

  std::vector<std::int32_t> labels(g.voxel_count(), 0);
  std::vector<double> image(g.voxel_count(), 0.0);
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        const Vec3 x = g.world(i, j, k);
        const std::size_t n = g.linear(i, j, k);
        for (const auto& p : spec.primitives)
          if (contains(p, x)) {
            labels[n] = p.label;
            image[n] = p.intensity;
          }
      }
  if (spec.texture_std > 0.0)
    for (double& v : image) v += rng.normal(0.0, spec.texture_std);

  Phantom out;
  for (auto l : labels) ++out.voxel_counts[l];
  out.image = Volume(g, std::move(image));
  out.labels = LabelVolume(g, std::move(labels), std::move(table));
  return out;
}

LabelTable brain_label_table() {
  return {{0, "background"}, {kCortex, "cortex"}, {kWhiteMatter, "white-matter"}, {kVentricles, "ventricles"}};
}

PhantomSpec brain_phantom_spec(Rng& rng, const Index3& dims, const Vec3& spacing, double texture_std) {
  PhantomSpec s;
  s.grid = Grid::make(dims, spacing);
  s.texture_std = texture_std;
  Vec3 c, half;
  for (int a = 0; a < 3; ++a) {
    half[a] = 0.5 * dims[a] * spacing[a];
    c[a] = 0.5 * (dims[a] - 1) * spacing[a];
  }
  auto jitter = [&](double frac) { return 1.0 + rng.uniform(-frac, frac); };
  Vec3 center{c[0] + rng.uniform(-1, 1) * spacing[0], c[1] + rng.uniform(-1, 1) * spacing[1],
              c[2] + rng.uniform(-1, 1) * spacing[2]};

  Primitive outer{Shape::Ellipsoid, kCortex, "cortex", center,
                  {0.78 * half[0] * jitter(0.08), 0.86 * half[1] * jitter(0.08), 0.74 * half[2] * jitter(0.08)}, 0.55};
  for (int a = 0; a < 3; ++a) {
    // keep one voxel of background margin on small grids
    const double room = std::min(center[a], (dims[a] - 1) * spacing[a] - center[a]);
    outer.size_mm[a] = std::min(outer.size_mm[a], room - 0.5 * spacing[a]);
  }
  Primitive wm{Shape::Ellipsoid, kWhiteMatter, "white-matter", center,
               {outer.size_mm[0] * 0.72 * jitter(0.06), outer.size_mm[1] * 0.74 * jitter(0.06),
                outer.size_mm[2] * 0.70 * jitter(0.06)},
               0.85};
  s.primitives = {outer, wm};
  const double offset = 0.22 * wm.size_mm[0] * jitter(0.15);
  const Vec3 vr{0.16 * outer.size_mm[0] * jitter(0.15), 0.42 * outer.size_mm[1] * jitter(0.15),
                0.24 * outer.size_mm[2] * jitter(0.15)};
  for (double side : {-1.0, 1.0}) {
    Vec3 vc = center;
    vc[0] += side * offset;
    vc[1] += rng.uniform(-0.5, 0.5) * spacing[1];
    s.primitives.push_back({Shape::Ellipsoid, kVentricles, "ventricles", vc, vr, 0.15});
  }
  return s;
}

PhantomSpec parse_phantom_spec(const std::string& text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed phantom JSON: ") + e.what());
  }
  try {
    PhantomSpec s;
    const auto dims = j.at("dims").get<Index3>();
    const auto spacing = j.value("spacing", Vec3{1, 1, 1});
    const auto origin = j.value("origin", Vec3{0, 0, 0});
    s.grid = Grid::make(dims, spacing, origin);
    s.texture_std = j.value("texture_std", 0.0);
    for (const auto& p : j.at("primitives")) {
      Primitive q;
      const auto shape = p.at("shape").get<std::string>();
      if (shape == "sphere") q.shape = Shape::Sphere;
      else if (shape == "box") q.shape = Shape::Box;
      else if (shape == "ellipsoid") q.shape = Shape::Ellipsoid;
      else throw ConfigError("unknown phantom shape \"" + shape + "\"");
      q.label = p.at("label").get<std::int32_t>();
      q.name = p.value("name", std::string());
      q.center_mm = p.at("center").get<Vec3>();
      if (q.shape == Shape::Sphere) {
        const double r = p.at("radius").get<double>();
        q.size_mm = {r, r, r};
      } else {
        q.size_mm = p.at("size").get<Vec3>();
      }
      q.intensity = p.value("intensity", 1.0);
      s.primitives.push_back(q);
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid phantom spec: ") + e.what());
  }
}

PhantomSpec load_phantom_spec(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_phantom_spec(ss.str());
}

}  // namespace lfsr::phantoms
