#include "lfsr/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lfsr/errors.hpp"

namespace lfsr {

using nlohmann::json;

namespace {

// Reads fields out of one JSON object and rejects anything left unread.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be a JSON object");
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown config key \"" + qualified(it.key()) + "\"");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key \"" + qualified(key) + "\" has the wrong type");
    }
  }

  void read_u64(const std::string& key, std::uint64_t& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned()) throw ConfigError("config key \"" + qualified(key) + "\" must be an unsigned integer");
    out = v.get<std::uint64_t>();
  }

  template <typename T, std::size_t N>
  void read_array(const std::string& key, std::array<T, N>& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_array() || v.size() != N)
      throw ConfigError("config key \"" + qualified(key) + "\" must be an array of " + std::to_string(N) + " numbers");
    for (std::size_t n = 0; n < N; ++n) {
      if (!v[n].is_number()) throw ConfigError("config key \"" + qualified(key) + "\" must hold numbers");
      out[n] = v[n].get<T>();
    }
  }

  const json* child(const std::string& key) {
    if (!has(key)) return nullptr;
    return &j_.at(key);
  }

  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "config" : "config key \"" + path_ + "\""; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_bias(const json& j, const std::string& path, BiasFieldSpec& b) {
  ObjectReader r(j, path);
  r.read_array("control_dims", b.control_dims);
  r.read("log_std", b.log_std);
  r.finish();
}

void read_generator(const json& j, GeneratorConfig& g) {
  ObjectReader r(j, "generator");
  if (const json* d = r.child("deformation")) {
    ObjectReader dr(*d, "generator.deformation");
    dr.read("max_rotation_deg", g.deformation.max_rotation_deg);
    dr.read("max_scaling", g.deformation.max_scaling);
    dr.read("max_translation_mm", g.deformation.max_translation_mm);
    dr.read("control_grid", g.deformation.control_grid);
    dr.read("control_std_mm", g.deformation.control_std_mm);
    dr.finish();
  }
  r.read_array("t1_spacing", g.t1_spacing);
  r.read_array("t2_spacing", g.t2_spacing);
  r.read_array("noise_sigma", g.noise_sigma);
  if (const json* b = r.child("bias_t1")) read_bias(*b, "generator.bias_t1", g.bias_t1);
  if (const json* b = r.child("bias_t2")) read_bias(*b, "generator.bias_t2", g.bias_t2);
  r.finish();
}

void read_network(const json& j, NetworkConfig& n) {
  ObjectReader r(j, "network");
  r.read("levels", n.levels);
  r.read("layers_per_level", n.layers_per_level);
  r.read("base_filters", n.base_filters);
  r.finish();
}

void read_training(const json& j, TrainingConfig& t) {
  ObjectReader r(j, "training");
  r.read("learning_rate", t.learning_rate);
  r.read_u64("iterations", t.iterations);
  r.read_array("crop_size", t.crop_size);
  r.read("batch_size", t.batch_size);
  r.read("adam_beta1", t.adam_beta1);
  r.read("adam_beta2", t.adam_beta2);
  r.read("adam_epsilon", t.adam_epsilon);
  r.read("segmenter_learning_rate", t.segmenter_learning_rate);
  r.read_u64("segmenter_iterations", t.segmenter_iterations);
  r.read("segmenter_dice_floor", t.segmenter_dice_floor);
  r.finish();
}

void read_phantoms(const json& j, PhantomPoolConfig& p) {
  ObjectReader r(j, "phantoms");
  r.read("count", p.count);
  r.read_array("dims", p.dims);
  r.read_array("spacing", p.spacing);
  r.read("texture_std", p.texture_std);
  r.finish();
}

void read_sources(const json& j, std::vector<SourcePair>& out) {
  if (!j.is_array()) throw ConfigError("config key \"sources\" must be an array");
  out.clear();
  for (std::size_t n = 0; n < j.size(); ++n) {
    ObjectReader r(j[n], "sources[" + std::to_string(n) + "]");
    SourcePair s;
    r.read("image", s.image);
    r.read("seg", s.seg);
    r.finish();
    if (s.image.empty() || s.seg.empty())
      throw ConfigError("sources[" + std::to_string(n) + "] needs both \"image\" and \"seg\"");
    out.push_back(std::move(s));
  }
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

bool finite_positive(double x) { return std::isfinite(x) && x > 0.0; }

}  // namespace

PipelineConfig toy_preset() { return PipelineConfig{}; }

PipelineConfig full_preset() {
  PipelineConfig c;
  c.preset = "full";
  c.network = NetworkConfig{5, 2, 24};
  c.training.iterations = 200000;
  c.training.crop_size = {160, 160, 160};
  c.phantoms.dims = {192, 192, 192};
  return c;
}

void PipelineConfig::validate() const {
  require(preset == "toy" || preset == "full", "preset must be \"toy\" or \"full\"");
  require(std::isfinite(lambda) && lambda >= 0.0, "lambda must be finite and >= 0");
  const auto& g = generator;
  for (int a = 0; a < 3; ++a) {
    require(finite_positive(g.t1_spacing[a]), "generator.t1_spacing must be > 0");
    require(finite_positive(g.t2_spacing[a]), "generator.t2_spacing must be > 0");
    require(finite_positive(phantoms.spacing[a]), "phantoms.spacing must be > 0");
    require(phantoms.dims[a] >= 1, "phantoms.dims must be >= 1");
    require(training.crop_size[a] >= 1, "training.crop_size must be >= 1");
    require(g.bias_t1.control_dims[a] >= 2 && g.bias_t2.control_dims[a] >= 2,
            "bias control dims must be >= 2 per axis");
  }
  require(g.noise_sigma[0] >= 0.0 && g.noise_sigma[1] >= g.noise_sigma[0], "generator.noise_sigma must be [lo, hi] with 0 <= lo <= hi");
  require(g.bias_t1.log_std >= 0.0 && g.bias_t2.log_std >= 0.0, "bias log_std must be >= 0");
  const auto& d = g.deformation;
  require(d.max_rotation_deg >= 0 && d.max_scaling >= 0 && d.max_scaling < 1 && d.max_translation_mm >= 0 &&
              d.control_std_mm >= 0 && d.control_grid >= 2,
          "generator.deformation parameters out of range");
  require(network.levels >= 1 && network.layers_per_level >= 1 && network.base_filters >= 1,
          "network levels/layers/filters must be >= 1");
  require(std::isfinite(training.learning_rate) && training.learning_rate >= 0.0, "training.learning_rate must be >= 0");
  require(std::isfinite(training.segmenter_learning_rate) && training.segmenter_learning_rate >= 0.0,
          "training.segmenter_learning_rate must be >= 0");
  require(training.batch_size >= 1, "training.batch_size must be >= 1");
  require(training.adam_beta1 >= 0 && training.adam_beta1 < 1 && training.adam_beta2 >= 0 && training.adam_beta2 < 1 &&
              training.adam_epsilon > 0,
          "adam parameters out of range");
  require(phantoms.count >= 1, "phantoms.count must be >= 1");
  require(phantoms.texture_std >= 0, "phantoms.texture_std must be >= 0");
  require(workers >= 1, "workers must be >= 1");
  if (sources.empty()) {
    for (int a = 0; a < 3; ++a)
      require(training.crop_size[a] <= phantoms.dims[a], "training.crop_size exceeds the phantom volume dims");
  }
}

PipelineConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed config JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  PipelineConfig c;
  if (j.contains("preset")) {
    if (!j["preset"].is_string()) throw ConfigError("config key \"preset\" must be a string");
    const auto p = j["preset"].get<std::string>();
    if (p == "full") c = full_preset();
    else if (p != "toy") throw ConfigError("preset must be \"toy\" or \"full\", got \"" + p + "\"");
  }
  {
    ObjectReader r(j, "");
    r.read("preset", c.preset);
    r.read("lambda", c.lambda);
    if (const json* g = r.child("generator")) read_generator(*g, c.generator);
    if (const json* n = r.child("network")) read_network(*n, c.network);
    if (const json* t = r.child("training")) read_training(*t, c.training);
    if (const json* p = r.child("phantoms")) read_phantoms(*p, c.phantoms);
    if (const json* s = r.child("sources")) read_sources(*s, c.sources);
    r.read("hyperparams", c.hyperparams);
    r.read_u64("seed", c.seed);
    r.read("workers", c.workers);
    r.finish();
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const PipelineConfig& c) {
  auto bias = [](const BiasFieldSpec& b) { return json{{"control_dims", b.control_dims}, {"log_std", b.log_std}}; };
  const auto& g = c.generator;
  json j = {
      {"preset", c.preset},
      {"lambda", c.lambda},
      {"generator",
       {{"deformation",
         {{"max_rotation_deg", g.deformation.max_rotation_deg},
          {"max_scaling", g.deformation.max_scaling},
          {"max_translation_mm", g.deformation.max_translation_mm},
          {"control_grid", g.deformation.control_grid},
          {"control_std_mm", g.deformation.control_std_mm}}},
        {"t1_spacing", g.t1_spacing},
        {"t2_spacing", g.t2_spacing},
        {"noise_sigma", g.noise_sigma},
        {"bias_t1", bias(g.bias_t1)},
        {"bias_t2", bias(g.bias_t2)}}},
      {"network",
       {{"levels", c.network.levels}, {"layers_per_level", c.network.layers_per_level}, {"base_filters", c.network.base_filters}}},
      {"training",
       {{"learning_rate", c.training.learning_rate},
        {"iterations", c.training.iterations},
        {"crop_size", c.training.crop_size},
        {"batch_size", c.training.batch_size},
        {"adam_beta1", c.training.adam_beta1},
        {"adam_beta2", c.training.adam_beta2},
        {"adam_epsilon", c.training.adam_epsilon},
        {"segmenter_learning_rate", c.training.segmenter_learning_rate},
        {"segmenter_iterations", c.training.segmenter_iterations},
        {"segmenter_dice_floor", c.training.segmenter_dice_floor}}},
      {"phantoms",
       {{"count", c.phantoms.count},
        {"dims", c.phantoms.dims},
        {"spacing", c.phantoms.spacing},
        {"texture_std", c.phantoms.texture_std}}},
      {"hyperparams", c.hyperparams},
      {"seed", c.seed},
      {"workers", c.workers},
  };
  json sources = json::array();
  for (const auto& s : c.sources) sources.push_back({{"image", s.image}, {"seg", s.seg}});
  j["sources"] = sources;
  return j.dump(2);
}

}  // namespace lfsr
