#include <cmath>
#include <filesystem>
#include <functional>
#include <sstream>
#include <unistd.h>

#include "lfsr/cli.hpp"
#include "lfsr/generator.hpp"
#include "lfsr/hyperparams.hpp"
#include "lfsr/lesion_prep.hpp"
#include "lfsr/losses.hpp"
#include "lfsr/nifti.hpp"
#include "lfsr/pipeline.hpp"
#include "lfsr/stats.hpp"
#include "lfsr/training.hpp"
#include "lfsr/unet.hpp"

namespace lfsr::cli {

namespace {

std::string str(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

SelftestCheck check(const std::string& name, const std::function<std::string()>& body) {
  SelftestCheck c{name, false, ""};
  try {
    c.detail = body();
    c.passed = c.detail.rfind("FAIL", 0) != 0;
    if (!c.passed) c.detail = c.detail.substr(4);
  } catch (const std::exception& e) {
    c.detail = std::string("exception: ") + e.what();
  }
  return c;
}

std::string verdict(bool ok, const std::string& detail) { return ok ? detail : "FAIL" + detail; }

}  // namespace

std::vector<SelftestCheck> run_selftest(std::uint64_t seed) {
  const Rng root(seed);
  std::vector<SelftestCheck> out;

  out.push_back(check("loss-identity", [] {
    const Grid g = Grid::make({4, 4, 4}, {1, 1, 1});
    std::vector<std::int32_t> lab(64);
    for (int n = 0; n < 64; ++n) lab[n] = n % 3;
    const LabelVolume truth(g, lab, default_label_table(lab));
    const Volume v(g, 0.5);
    const Segmenter perfect = [&](const Volume&) { return SoftSegmentation::one_hot(truth); };
    const double a = combined_loss(v, v, perfect, truth, {0.25}).total;
    const double b = combined_loss(v, v, perfect, truth, {0.0}).total;
    return verdict(a == -0.25 && b == 0.0, "lambda 0.25 -> " + str(a) + ", lambda 0 -> " + str(b));
  }));

  out.push_back(check("parameter-count", [] {
    const auto n = nn::parameter_count({1, 2, 8, 2, 1, nn::Head::Linear});
    return verdict(n == 2185, std::to_string(n));
  }));

  out.push_back(check("nifti-round-trip", [&] {
    Rng r = root.child("nifti");
    const Grid g = Grid::make({5, 4, 3}, {1.5, 2.0, 2.5}, {-3, 4, 10});
    std::vector<double> d(g.voxel_count());
    for (auto& v : d) v = static_cast<float>(r.normal(0, 100));
    const Volume v(g, d);
    const auto path = std::filesystem::temp_directory_path() /
                      ("lfsr_selftest_" + std::to_string(seed) + "_" + std::to_string(::getpid()) + ".nii.gz");
    io::write_nifti(v, path);
    const Volume back = io::read_volume(path);
    std::filesystem::remove(path);
    bool same = same_geometry(v.grid(), back.grid(), 1e-6);
    for (std::size_t n = 0; n < d.size(); ++n) same = same && d[n] == back[n];
    return verdict(same, "60 voxels");
  }));

  out.push_back(check("bias-field-positive", [&] {
    Rng r = root.child("bias");
    const Grid g = Grid::make({16, 16, 16}, {1, 1, 1});
    double mn = INFINITY;
    for (int n = 0; n < 10; ++n) mn = std::min(mn, gen::sample_bias_field(r, g, {{4, 4, 4}, 0.3}).field.min());
    return verdict(mn > 0.0, "min " + str(mn));
  }));

  out.push_back(check("rician-mean", [&] {
    Rng r = root.child("rician");
    const double sigma = 0.1;
    const Volume zero(Grid::make({64, 64, 32}, {1, 1, 1}), 0.0);
    const Volume noisy = gen::add_rician_noise(r, zero, sigma);
    double m = 0.0;
    for (double v : noisy.data()) m += v;
    m /= static_cast<double>(noisy.size());
    const double expect = sigma * std::sqrt(M_PI / 2.0);
    return verdict(std::abs(m / expect - 1.0) < 0.02, "mean " + str(m) + " vs " + str(expect));
  }));

  out.push_back(check("em-two-gaussians", [&] {
    Rng r = root.child("em");
    std::vector<double> x(20000);
    for (std::size_t n = 0; n < x.size(); ++n) x[n] = n % 2 ? r.normal(10, 1) : r.normal(0, 1);
    const auto fit = lesions::fit_gmm_em(x, 2, {1e-8, 500, seed});
    auto c = fit.model.components;
    if (c[0].mean > c[1].mean) std::swap(c[0], c[1]);
    const bool ok = std::abs(c[0].mean) < 0.1 && std::abs(c[1].mean - 10) < 0.1 && std::abs(c[0].weight - 0.5) < 0.02;
    return verdict(ok, "means " + str(c[0].mean) + ", " + str(c[1].mean));
  }));

  out.push_back(check("robust-scale", [&] {
    Rng r = root.child("mad");
    std::vector<double> x(20000);
    for (auto& v : x) v = r.normal(0, 1);
    const double s = stats::robust_scale(x);
    return verdict(s > 0.96 && s < 1.04, str(s));
  }));

  out.push_back(check("pearson-thresholds", [] {
    const double p1 = stats::pearson_p(0.85, 11), p2 = stats::pearson_p(0.97, 11), p3 = stats::pearson_p(0.92, 11);
    return verdict(p1 < 1e-3 && p2 < 1e-6 && p3 < 1e-4, str(p1) + ", " + str(p2) + ", " + str(p3));
  }));

  out.push_back(check("gradient-check", [&] {
    Rng r = root.child("grad");
    const nn::UNet<double> net = nn::UNet<double>::build({1, 1, 2, 2, 1, nn::Head::Linear}, r);
    nn::Tensor<double> x(2, {4, 4, 4});
    for (auto& v : x.data) v = r.uniform(0, 1);
    std::vector<double> target(64);
    for (auto& v : target) v = r.uniform(0, 1);
    auto loss = [&](const nn::UNet<double>& n) {
      return train::sr_loss<double>(n.forward(x), target, nullptr, {}, 0.0, nullptr).total;
    };
    nn::UNet<double>::Cache cache;
    const auto pred = net.forward(x, &cache);
    nn::Tensor<double> g;
    train::sr_loss<double>(pred, target, nullptr, {}, 0.0, &g);
    std::vector<double> grads;
    net.backward(cache, g, &grads, nullptr);
    double worst = 0.0;
    for (std::size_t k = 0; k < net.params().size(); k += 7) {
      nn::UNet<double> p = net, m = net;
      p.params()[k] += 1e-6;
      m.params()[k] -= 1e-6;
      const double fd = (loss(p) - loss(m)) / 2e-6;
      worst = std::max(worst, std::abs(fd - grads[k]) / std::max(1e-6, std::abs(fd) + std::abs(grads[k])));
    }
    return verdict(worst < 1e-4, "max relative error " + str(worst));
  }));

  out.push_back(check("generator-determinism", [&] {
    PhantomPoolConfig pc;
    pc.count = 1;
    pc.dims = {16, 16, 16};
    auto pool = pipeline::phantom_pool(pc, seed);
    const auto hyper = pipeline::phantom_hyperparams(pc, seed);
    const auto a = gen::generate_sample(seed + 1, pool[0].image, pool[0].seg, hyper, {}, {16, 16, 16});
    const auto b = gen::generate_sample(seed + 1, pool[0].image, pool[0].seg, hyper, {}, {16, 16, 16});
    bool same = true;
    for (std::size_t n = 0; n < a.lf_t1.size(); ++n) same = same && a.lf_t1[n] == b.lf_t1[n] && a.lf_t2[n] == b.lf_t2[n];
    return verdict(same && a.lf_t1.min() >= 0.0 && a.lf_t1.max() <= 1.0, "16^3 sample");
  }));

  return out;
}

}  // namespace lfsr::cli
