#include "lfsr/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <vector>

#include "lfsr/errors.hpp"

namespace lfsr::stats {

namespace {

void check_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) throw StatsError("non-finite value in statistics input");
}

}  // namespace

double mean(std::span<const double> v) {
  if (v.empty()) throw StatsError("mean of an empty sample");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
  if (v.size() < 2) throw StatsError("sample sd needs at least 2 values");
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double normal_two_tailed_p(double z) {
  if (std::isnan(z)) throw StatsError("NaN test statistic");
  if (std::isinf(z)) return 0.0;
  const boost::math::normal_distribution<double> nd;
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(nd, std::abs(z))));
}

double pearson_p(double r, std::size_t n) {
  if (n < 3) throw StatsError("pearson p needs n >= 3");
  if (std::abs(r) >= 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  const double t = r * std::sqrt(df) / std::sqrt(1.0 - r * r);
  const boost::math::students_t_distribution<double> dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

PearsonResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw StatsError("pearson: samples differ in length");
  if (x.size() < 3) throw StatsError("pearson: need at least 3 pairs");
  check_finite(x);
  check_finite(y);
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw StatsError("pearson: undefined correlation for a constant sample");
  PearsonResult res;
  res.n = x.size();
  res.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  res.p = pearson_p(res.r, res.n);
  return res;
}

SteigerResult steiger_dependent(double r_gA, double r_gB, double r_AB, std::size_t n) {
  for (double r : {r_gA, r_gB, r_AB})
    if (!(std::abs(r) < 1.0)) throw StatsError("steiger: correlations must lie strictly inside (-1, 1)");
  if (n < 4) throw StatsError("steiger: need n >= 4");
  const double rbar = 0.5 * (r_gA + r_gB);
  const double rb2 = rbar * rbar;
  const double psi = r_AB * (1.0 - 2.0 * rb2) - 0.5 * rb2 * (1.0 - 2.0 * rb2 - r_AB * r_AB);
  const double s = psi / ((1.0 - rb2) * (1.0 - rb2));
  SteigerResult res;
  res.statistic = (std::atanh(r_gA) - std::atanh(r_gB)) * std::sqrt(static_cast<double>(n) - 3.0) /
                  std::sqrt(2.0 - 2.0 * s);
  res.p = normal_two_tailed_p(res.statistic);
  return res;
}

double ks_statistic_normal(std::span<const double> samples, double mu, double sd) {
  if (samples.empty()) throw StatsError("ks: empty sample");
  if (!(sd > 0.0)) throw StatsError("ks: sd must be > 0");
  std::vector<double> v(samples.begin(), samples.end());
  std::sort(v.begin(), v.end());
  const boost::math::normal_distribution<double> nd(mu, sd);
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = boost::math::cdf(nd, v[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

double kolmogorov_p(double d, std::size_t n) {
  if (n == 0) throw StatsError("ks: n must be > 0");
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  if (lambda <= 0.0) return 1.0;
  constexpr double kPi = 3.14159265358979323846;
  if (lambda < 1.18) {
    // CDF via the theta-function form, which converges fast for small lambda.
    const double y = std::exp(-kPi * kPi / (8.0 * lambda * lambda));
    double s = 0.0;
    for (int k = 1; k <= 50; k += 2) s += std::pow(y, k * k);
    return std::clamp(1.0 - std::sqrt(2.0 * kPi) / lambda * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-17) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

BlandAltmanResult bland_altman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw StatsError("bland-altman: samples differ in length");
  if (x.size() < 3) throw StatsError("bland-altman: need at least 3 pairs");
  check_finite(x);
  check_finite(y);
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = y[i] - x[i];
  BlandAltmanResult r;
  r.n = d.size();
  r.bias = mean(d);
  r.sd = sample_sd(d);
  r.rpc = 1.96 * r.sd;
  r.lower = r.bias - r.rpc;
  r.upper = r.bias + r.rpc;
  if (r.sd > 0.0) {
    r.ks_statistic = ks_statistic_normal(d, r.bias, r.sd);
    r.ks_p = kolmogorov_p(r.ks_statistic, r.n);
  }
  return r;
}

}  // namespace lfsr::stats
