#include "lfsr/lesion_prep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lfsr/errors.hpp"
#include "lfsr/hyperparams.hpp"
#include "lfsr/rng.hpp"

namespace lfsr::lesions {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double log_normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * (kLog2Pi + z * z) - std::log(sd);
}

struct Moments {
  double mean = 0.0, stddev = 0.0;
};

Moments moments(std::span<const double> x) {
  Moments m;
  if (x.empty()) return m;
  m.mean = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  double ss = 0.0;
  for (double v : x) ss += (v - m.mean) * (v - m.mean);
  m.stddev = std::sqrt(ss / x.size());
  return m;
}

// E-step: fills responsibilities and returns the log-likelihood.
double expectation(std::span<const double> x, const Gmm1D& g, std::vector<double>& resp) {
  const std::size_t k = g.components.size();
  resp.resize(x.size() * k);
  std::vector<double> logp(k);
  std::vector<double> log_w(k);
  for (std::size_t c = 0; c < k; ++c) log_w[c] = std::log(g.components[c].weight);
  double ll = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      logp[c] = log_w[c] + log_normal_pdf(x[n], g.components[c].mean, g.components[c].stddev);
      mx = std::max(mx, logp[c]);
    }
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += std::exp(logp[c] - mx);
    const double lse = mx + std::log(s);
    ll += lse;
    for (std::size_t c = 0; c < k; ++c) resp[n * k + c] = std::exp(logp[c] - lse);
  }
  return ll;
}

}  // namespace

double Gmm1D::log_likelihood(std::span<const double> samples) const {
  std::vector<double> resp;
  return expectation(samples, *this, resp);
}

double Gmm1D::pooled_stddev() const {
  double v = 0.0;
  for (const auto& c : components) v += c.weight * c.stddev * c.stddev;
  return std::sqrt(v);
}

EmResult fit_gmm_em(std::span<const double> x, int k, const EmOptions& opt) {
  if (k < 1) throw InputError("GMM needs at least one component");
  if (x.size() < static_cast<std::size_t>(2 * k))
    throw InputError("GMM fit needs at least 2K = " + std::to_string(2 * k) + " samples, got " +
                     std::to_string(x.size()));
  for (double v : x)
    if (!std::isfinite(v)) throw InputError("GMM samples must be finite");

  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const double range = sorted.back() - sorted.front();
  const double floor = range > 0.0 ? 1e-4 * range : 1e-4 * std::max(1.0, std::abs(sorted.front()));
  const Moments all = moments(sorted);

  EmResult r;
  r.std_floor = floor;
  auto& comps = r.model.components;
  comps.resize(k);
  const std::size_t n = sorted.size();
  if (range == 0.0) {
    // every component sees the same likelihood, so nothing breaks the symmetry
    for (auto& c : comps) c = {1.0 / k, sorted.front(), floor};
    r.responsibilities.assign(n * k, 1.0 / k);
    r.log_likelihood_history.push_back(r.model.log_likelihood(x));
    r.converged = true;
    return r;
  }
  // last component: samples above the 90th percentile; the rest split evenly
  std::vector<std::size_t> bounds{0, n};
  if (k > 1) {
    const std::size_t split = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(0.9 * n)),
                                                      static_cast<std::size_t>(k - 1), n - 1);
    bounds = {0};
    for (int c = 1; c < k; ++c) bounds.push_back(split * c / (k - 1));
    bounds.push_back(n);
  }
  for (int c = 0; c < k; ++c) {
    std::span<const double> part(sorted.data() + bounds[c], bounds[c + 1] - bounds[c]);
    if (part.empty()) part = std::span<const double>(sorted);
    const Moments m = moments(part);
    comps[c] = {static_cast<double>(part.size()) / n, m.mean, std::max(m.stddev, floor)};
  }
  {
    double wsum = 0.0;
    for (auto& c : comps) wsum += c.weight;
    for (auto& c : comps) c.weight /= wsum;
  }

  Rng rng(opt.seed);
  std::vector<double> resp;
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < opt.max_iters; ++it) {
    const double ll = expectation(x, r.model, resp);
    r.log_likelihood_history.push_back(ll);
    if (it > 0 && std::abs(ll - prev) <= opt.tol * std::abs(prev)) {
      r.converged = true;
      break;
    }
    prev = ll;

    // M-step
    bool reseeded = false;
    for (int c = 0; c < k; ++c) {
      double nk = 0.0, sx = 0.0;
      for (std::size_t s = 0; s < x.size(); ++s) {
        nk += resp[s * k + c];
        sx += resp[s * k + c] * x[s];
      }
      auto& comp = comps[c];
      if (nk <= 0.0) {
        comp.mean = x[rng.index(x.size())];
        comp.stddev = std::max(all.stddev, floor);
        comp.weight = 1.0 / n;
        reseeded = true;
        continue;
      }
      const double mean = sx / nk;
      double sv = 0.0;
      for (std::size_t s = 0; s < x.size(); ++s) sv += resp[s * k + c] * (x[s] - mean) * (x[s] - mean);
      const double sd = std::sqrt(sv / nk);
      comp.weight = nk / n;
      comp.mean = mean;
      if (sd < floor) {
        if (range > 0.0) {
          comp.mean = x[rng.index(x.size())];
          comp.stddev = std::max(all.stddev, floor);
          reseeded = true;
        } else {
          comp.stddev = floor;
        }
      } else {
        comp.stddev = sd;
      }
    }
    double wsum = 0.0;
    for (auto& c : comps) wsum += c.weight;
    for (auto& c : comps) c.weight /= wsum;
    if (reseeded) {
      r.reseed_iterations.push_back(it);
      prev = -std::numeric_limits<double>::infinity();
    }
    r.iterations = it + 1;
  }
  if (!r.converged) r.log_likelihood_history.push_back(expectation(x, r.model, resp));
  r.responsibilities = std::move(resp);
  return r;
}

WhiteMatterSplit split_white_matter(const Volume& intensities, const LabelVolume& seg,
                                    std::span<const std::int32_t> wm_labels, const EmOptions& opt) {
  if (!same_geometry(intensities.grid(), seg.grid())) throw GeometryError("intensity and label grids differ");
  const auto mask = mask_from_labels(seg, wm_labels);
  std::vector<double> samples;
  std::vector<std::size_t> where;
  for (std::size_t n = 0; n < mask.size(); ++n)
    if (mask[n]) {
      samples.push_back(intensities[n]);
      where.push_back(n);
    }
  if (samples.empty()) throw InputError("white-matter mask is empty");

  EmResult fit = fit_gmm_em(samples, 2, opt);
  const double median = stats::robust_location(samples);
  const auto& c = fit.model.components;
  const int abnormal = std::abs(c[1].mean - median) >= std::abs(c[0].mean - median) ? 1 : 0;

  WhiteMatterSplit out;
  out.model = fit.model;
  out.wm_voxels = samples.size();
  out.reliable_lesion_class = std::abs(c[1].mean - c[0].mean) >= fit.model.pooled_stddev();

  LabelTable table = seg.table();
  std::int32_t next = 0;
  for (const auto& e : table) next = std::max(next, e.id);
  out.abnormal_label = next + 1;
  std::string base = "white-matter";
  for (const auto& e : table)
    if (!wm_labels.empty() && e.id == wm_labels.front()) base = e.name;
  table.push_back({out.abnormal_label, base + "-abnormal"});

  std::vector<std::int32_t> labels(seg.labels().begin(), seg.labels().end());
  if (out.reliable_lesion_class) {
    for (std::size_t s = 0; s < samples.size(); ++s) {
      if (fit.responsibility(s, abnormal) > fit.responsibility(s, 1 - abnormal)) {
        labels[where[s]] = out.abnormal_label;
        ++out.abnormal_voxels;
      }
    }
  }
  out.labels = LabelVolume(seg.grid(), std::move(labels), std::move(table));
  return out;
}

std::vector<std::uint8_t> mask_from_labels(const LabelVolume& seg, std::span<const std::int32_t> labels) {
  std::vector<std::uint8_t> m(seg.size(), 0);
  for (std::size_t n = 0; n < seg.size(); ++n)
    m[n] = std::find(labels.begin(), labels.end(), seg[n]) != labels.end();
  return m;
}

Volume inpaint(const Volume& image, std::span<const std::uint8_t> mask, const InpaintOptions& opt) {
  const Grid& g = image.grid();
  const auto& d = g.dims;
  if (mask.size() != image.size()) throw ShapeError("lesion mask size does not match the image");
  if (opt.patch_radius < 0 || opt.search_radius < 1) throw InputError("invalid inpainting radii");
  const int pr = opt.patch_radius;

  std::vector<std::size_t> lesion;
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        const std::size_t n = g.linear(i, j, k);
        if (!mask[n]) continue;
        if (i < pr || j < pr || k < pr || i >= d[0] - pr || j >= d[1] - pr || k >= d[2] - pr)
          throw InputError("lesion mask touches the boundary margin");
        lesion.push_back(n);
      }
  std::vector<double> out(image.data().begin(), image.data().end());
  if (lesion.empty()) return Volume(g, std::move(out));

  auto in_bounds = [&](int i, int j, int k) { return i >= 0 && j >= 0 && k >= 0 && i < d[0] && j < d[1] && k < d[2]; };
  // centres whose whole patch is in bounds and unmasked
  std::vector<std::uint8_t> clean(image.size(), 0);
  for (int k = pr; k < d[2] - pr; ++k)
    for (int j = pr; j < d[1] - pr; ++j)
      for (int i = pr; i < d[0] - pr; ++i) {
        bool ok = true;
        for (int c = -pr; c <= pr && ok; ++c)
          for (int b = -pr; b <= pr && ok; ++b)
            for (int a = -pr; a <= pr && ok; ++a) ok = !mask[g.linear(i + a, j + b, k + c)];
        clean[g.linear(i, j, k)] = ok;
      }

  const int w = opt.search_radius;
  const std::size_t nx = d[0], nxy = static_cast<std::size_t>(d[0]) * d[1];
#pragma omp parallel for schedule(dynamic)
  for (std::size_t li = 0; li < lesion.size(); ++li) {
    const std::size_t p = lesion[li];
    const int pi = static_cast<int>(p % nx), pj = static_cast<int>((p / nx) % d[1]), pk = static_cast<int>(p / nxy);

    // known neighbourhood; widen until at least one unmasked voxel is seen
    std::vector<std::array<int, 3>> known;
    for (int r = std::max(pr, 1); r <= w && known.empty(); ++r) {
      for (int c = -r; c <= r; ++c)
        for (int b = -r; b <= r; ++b)
          for (int a = -r; a <= r; ++a)
            if (in_bounds(pi + a, pj + b, pk + c) && !mask[g.linear(pi + a, pj + b, pk + c)]) known.push_back({a, b, c});
    }

    double best_cost = std::numeric_limits<double>::infinity();
    long best_dist = std::numeric_limits<long>::max();
    std::size_t best = p;
    for (int c = -w; c <= w; ++c)
      for (int b = -w; b <= w; ++b)
        for (int a = -w; a <= w; ++a) {
          const int ci = pi + a, cj = pj + b, ck = pk + c;
          if (!in_bounds(ci, cj, ck)) continue;
          const std::size_t cn = g.linear(ci, cj, ck);
          if (!clean[cn]) continue;
          double ssd = 0.0;
          int used = 0;
          for (const auto& o : known) {
            const int qi = ci + o[0], qj = cj + o[1], qk = ck + o[2];
            if (!in_bounds(qi, qj, qk)) continue;
            const std::size_t qn = g.linear(qi, qj, qk);
            if (mask[qn]) continue;
            const double diff = image[g.linear(pi + o[0], pj + o[1], pk + o[2])] - image[qn];
            ssd += diff * diff;
            ++used;
          }
          const double cost = used ? ssd / used : std::numeric_limits<double>::max();
          const long dist = long(a) * a + long(b) * b + long(c) * c;
          if (cost < best_cost || (cost == best_cost && (dist < best_dist || (dist == best_dist && cn < best)))) {
            best_cost = cost;
            best_dist = dist;
            best = cn;
          }
        }
    if (best == p) {
      // no clean patch in the window: fall back to the mean of the known voxels
      double s = 0.0;
      for (const auto& o : known) s += image[g.linear(pi + o[0], pj + o[1], pk + o[2])];
      out[p] = known.empty() ? image[p] : s / known.size();
    } else {
      out[p] = image[best];
    }
  }
  return Volume(g, std::move(out));
}

}  // namespace lfsr::lesions
