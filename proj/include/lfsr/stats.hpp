#pragma once

#include <cstddef>
#include <span>

namespace lfsr::stats {

struct PearsonResult {
  double r = 0.0;
  double p = 1.0;  // two-tailed, t distribution with n - 2 df
  std::size_t n = 0;
};

/// Throws StatsError for n < 3, mismatched lengths, non-finite values or a
/// constant argument (undefined correlation).
PearsonResult pearson(std::span<const double> x, std::span<const double> y);

/// Two-tailed p of t = r sqrt(n - 2) / sqrt(1 - r^2) with n - 2 df.
double pearson_p(double r, std::size_t n);

struct SteigerResult {
  double statistic = 0.0;
  double p = 1.0;
};

/// Steiger's Z1* for two correlations sharing variable g (r_gA vs r_gB), with
/// Fisher z-transforms and the mean correlation pooled into the covariance:
///   rbar = (r_gA + r_gB) / 2
///   psi  = r_AB (1 - 2 rbar^2) - rbar^2 (1 - 2 rbar^2 - r_AB^2) / 2
///   s    = psi / (1 - rbar^2)^2
///   Z    = (atanh r_gA - atanh r_gB) sqrt(n - 3) / sqrt(2 - 2 s)
/// Positive Z means A correlates more strongly with g. p is two-tailed normal.
/// Throws StatsError for |r| >= 1 or n < 4.
SteigerResult steiger_dependent(double r_gA, double r_gB, double r_AB, std::size_t n);

struct BlandAltmanResult {
  std::size_t n = 0;
  double bias = 0.0;  // mean of d = y - x
  double sd = 0.0;    // sample sd of d (n - 1)
  double rpc = 0.0;   // 1.96 sd
  double lower = 0.0, upper = 0.0;  // bias -+ rpc
  double ks_statistic = 0.0;
  double ks_p = 1.0;
};

/// Agreement of y against x. The KS test compares d with Normal(mean, sd)
/// estimated from d itself but uses the known-parameter Kolmogorov tail, so
/// its p-values run high (the Lilliefors effect).
/// Throws StatsError for n < 3.
BlandAltmanResult bland_altman(std::span<const double> x, std::span<const double> y);

/// sup |F_n - Phi((x - mean) / sd)|.
double ks_statistic_normal(std::span<const double> samples, double mean, double sd);

/// Asymptotic Kolmogorov tail with Stephens' small-sample correction,
/// lambda = (sqrt(n) + 0.12 + 0.11 / sqrt(n)) D.
double kolmogorov_p(double d, std::size_t n);

double normal_two_tailed_p(double z);

double mean(std::span<const double> v);
double sample_sd(std::span<const double> v);

}  // namespace lfsr::stats
