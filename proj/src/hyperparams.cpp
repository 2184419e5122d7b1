#include "lfsr/hyperparams.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "lfsr/errors.hpp"

namespace lfsr {

namespace stats {

double robust_location(std::span<const double> samples) {
  if (samples.empty()) throw InputError("median of an empty sample");
  std::vector<double> v(samples.begin(), samples.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lower + upper);
}

double robust_scale(std::span<const double> samples) {
  const double med = robust_location(samples);
  std::vector<double> dev(samples.size());
  for (std::size_t n = 0; n < samples.size(); ++n) dev[n] = std::abs(samples[n] - med);
  return kMadToSigma * robust_location(dev);
}

}  // namespace stats

const LabelPrior* GmmHyperParams::find(std::int32_t id) const {
  for (const auto& l : labels)
    if (l.id == id) return &l;
  return nullptr;
}

void GmmHyperParams::validate() const {
  for (int c = 0; c < 2; ++c)
    if (!(std_floor[c] > 0.0) || !std::isfinite(std_floor[c])) throw InputError("hyperparameter std floor must be > 0");
  for (const auto& l : labels)
    for (const auto& p : l.channel) {
      if (!std::isfinite(p.mean_center)) throw InputError("non-finite mean_center for label " + std::to_string(l.id));
      if (!(p.std_center > 0.0) || !std::isfinite(p.std_center))
        throw InputError("std_center must be > 0 for label " + std::to_string(l.id));
      if (!(p.mean_spread >= 0.0) || !(p.std_spread >= 0.0) || !std::isfinite(p.mean_spread) ||
          !std::isfinite(p.std_spread))
        throw InputError("spreads must be finite and >= 0 for label " + std::to_string(l.id));
    }
}

GmmHyperParams estimate_hyperparams(std::span<const ExampleScan> scans, const LabelTable& labels, double inflation) {
  if (scans.empty()) throw EstimationError("hyperparameter estimation needs at least one scan");
  if (!(inflation >= 0.0) || !std::isfinite(inflation)) throw EstimationError("inflation must be finite and >= 0");

  GmmHyperParams h;
  h.inflation = inflation;
  for (int c = 0; c < 2; ++c) {
    double lo = 1e300, hi = -1e300;
    for (const auto& s : scans) {
      const Volume& v = c == kT1 ? s.t1 : s.t2;
      lo = std::min(lo, v.min());
      hi = std::max(hi, v.max());
    }
    const double range = hi - lo;
    double floor = 1e-3 * range;
    if (!(floor > 0.0)) floor = 1e-3 * std::max({std::abs(lo), std::abs(hi), 1e-9});
    h.std_floor[c] = floor;
  }

  for (const auto& s : scans) {
    if (!same_geometry(s.t1.grid(), s.seg.grid()) || !same_geometry(s.t2.grid(), s.seg.grid()))
      throw GeometryError("example scan channels and segmentation must share one grid");
  }

  for (const auto& entry : labels) {
    LabelPrior prior{entry.id, entry.name, {}};
    for (int c = 0; c < 2; ++c) {
      std::vector<double> pooled;
      std::vector<double> scan_means, scan_scales;
      for (const auto& s : scans) {
        const Volume& v = c == kT1 ? s.t1 : s.t2;
        std::vector<double> vals;
        for (std::size_t n = 0; n < s.seg.size(); ++n)
          if (s.seg[n] == entry.id) vals.push_back(v[n]);
        if (vals.empty()) continue;
        scan_means.push_back(stats::robust_location(vals));
        scan_scales.push_back(stats::robust_scale(vals));
        pooled.insert(pooled.end(), vals.begin(), vals.end());
      }
      if (pooled.empty())
        throw EstimationError("label " + std::to_string(entry.id) + " (" + entry.name + ") has no voxels in any scan");
      ChannelPrior& p = prior.channel[c];
      p.mean_center = stats::robust_location(pooled);
      const double raw_scale = stats::robust_scale(pooled);
      p.std_center = std::max(raw_scale, h.std_floor[c]);
      if (scan_means.size() >= 2) {
        p.mean_spread = inflation * stats::robust_scale(scan_means);
        p.std_spread = inflation * stats::robust_scale(scan_scales);
      } else {
        p.mean_spread = inflation * 0.2 * raw_scale;
        p.std_spread = inflation * 0.2 * raw_scale;
      }
    }
    h.labels.push_back(std::move(prior));
  }
  return h;
}

std::string hyperparams_to_json(const GmmHyperParams& h) {
  using nlohmann::json;
  auto channel = [](const ChannelPrior& p) {
    return json{{"mean_center", p.mean_center},
                {"mean_spread", p.mean_spread},
                {"std_center", p.std_center},
                {"std_spread", p.std_spread}};
  };
  json labels = json::array();
  for (const auto& l : h.labels)
    labels.push_back({{"id", l.id}, {"name", l.name}, {"t1", channel(l.channel[kT1])}, {"t2", channel(l.channel[kT2])}});
  json j{{"inflation", h.inflation}, {"std_floor", h.std_floor}, {"labels", labels}};
  return j.dump(2);
}

GmmHyperParams hyperparams_from_json(const std::string& text) {
  using nlohmann::json;
  try {
    const json j = json::parse(text);
    GmmHyperParams h;
    h.inflation = j.at("inflation").get<double>();
    h.std_floor = j.at("std_floor").get<std::array<double, 2>>();
    auto channel = [](const json& c) {
      return ChannelPrior{c.at("mean_center").get<double>(), c.at("mean_spread").get<double>(),
                          c.at("std_center").get<double>(), c.at("std_spread").get<double>()};
    };
    for (const auto& l : j.at("labels"))
      h.labels.push_back({l.at("id").get<std::int32_t>(), l.value("name", std::string()),
                          {channel(l.at("t1")), channel(l.at("t2"))}});
    h.validate();
    return h;
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid hyperparameter JSON: ") + e.what());
  }
}

void save_hyperparams(const GmmHyperParams& h, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << hyperparams_to_json(h) << '\n';
}

GmmHyperParams load_hyperparams(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return hyperparams_from_json(ss.str());
}

}  // namespace lfsr
