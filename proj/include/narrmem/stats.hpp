#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <type_traits>
#include <vector>

#include "narrmem/errors.hpp"
#include "narrmem/rng.hpp"

namespace narrmem::stats {

// Standard normal CDF.
double normal_cdf(double x);

// Inverse standard normal CDF, z(p) = sqrt(2) erfinv(2p - 1). Exactly odd about
// p = 0.5 and exactly 0 there. Throws DomainError unless 0 < p < 1.
double probit(double p);

// Log-linear correction for empirical rates from `trials` observations:
// p is clamped into [1/(2N), 1 - 1/(2N)].
double clamp_rate(double p, std::size_t trials);

double mean(std::span<const double> v);
// Sample standard deviation (n - 1 denominator); 0 for a single value.
double sample_sd(std::span<const double> v);
// sample_sd / sqrt(n).
double standard_error(std::span<const double> v);

// Product-moment correlation. Needs equal lengths >= 3 and nonzero variance
// (UndefinedCorrelationError otherwise).
double pearson_r(std::span<const double> x, std::span<const double> y);

// Two-sided test of zero slope: t = r sqrt((n-2)/(1-r^2)) against Student t
// with n-2 degrees of freedom. |r| = 1 gives 0.
double wald_p(double r, std::size_t n);

// Kendall rank correlation, tie-adjusted (tau-b).
double kendall_tau_b(std::span<const double> x, std::span<const double> y);

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

// Linear-interpolation quantile of an ascending-sorted sample.
double quantile_sorted(std::span<const double> sorted, double q);

// Percentile interval [alpha/2, 1 - alpha/2] of a bootstrap distribution.
Interval percentile_interval(std::vector<double> values, double alpha);

struct BootstrapDistribution {
  std::vector<double> values;
  std::size_t skipped = 0;  // resamples whose statistic was undefined
};

// Resamples `sample` with replacement `n_resamples` times. Resample b draws
// from its own generator seeded with derive_seed(seed, b), so the result does
// not depend on evaluation order. `statistic` maps std::span<const T> to
// double or std::optional<double>; nullopt or a thrown narrmem::Error marks
// the resample as skipped.
template <typename T, typename Statistic>
BootstrapDistribution bootstrap_distribution(std::span<const T> sample,
                                             Statistic&& statistic,
                                             std::size_t n_resamples,
                                             std::uint64_t seed) {
  if (sample.empty()) throw InvalidArgument("bootstrap needs a non-empty sample");
  BootstrapDistribution out;
  out.values.reserve(n_resamples);
  std::vector<T> resample;
  resample.reserve(sample.size());
  for (std::size_t b = 0; b < n_resamples; ++b) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
    resample.clear();
    for (std::size_t i = 0; i < sample.size(); ++i) {
      resample.push_back(sample[static_cast<std::size_t>(rng.uniform_index(sample.size()))]);
    }
    std::optional<double> value;
    try {
      using R = std::invoke_result_t<Statistic&, std::span<const T>>;
      if constexpr (std::is_same_v<std::decay_t<R>, std::optional<double>>) {
        value = statistic(std::span<const T>(resample));
      } else {
        value = static_cast<double>(statistic(std::span<const T>(resample)));
      }
    } catch (const Error&) {
      value.reset();
    }
    if (value) {
      out.values.push_back(*value);
    } else {
      ++out.skipped;
    }
  }
  return out;
}

template <typename T, typename Statistic>
Interval bootstrap_ci(std::span<const T> sample, Statistic&& statistic,
                      std::size_t n_resamples, double alpha, std::uint64_t seed) {
  auto dist = bootstrap_distribution(sample, std::forward<Statistic>(statistic),
                                     n_resamples, seed);
  if (dist.values.empty()) {
    throw InsufficientDataError("every bootstrap resample was degenerate");
  }
  return percentile_interval(std::move(dist.values), alpha);
}

enum class BinMode { equal_count, equal_width };

struct BinSpec {
  std::size_t n_bins = 1;
  BinMode mode = BinMode::equal_count;
};

struct Bin {
  double x_low = 0.0;
  double x_high = 0.0;
  double x_center = 0.0;
  double y_mean = 0.0;
  double y_stderr = 0.0;  // NaN when count == 1
  std::size_t count = 0;
};

struct BinnedTable {
  std::vector<Bin> bins;
  // Set when an equal-width request collapsed to one bin (zero x-range).
  bool degenerate_range = false;
};

BinnedTable bin_means(std::span<const double> x, std::span<const double> y,
                      BinSpec spec);

// Random-list recall law R = sqrt(3 pi M / 2).
double sqrt_law(double retained);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
};

// Ordinary least squares; needs >= 3 points and nonzero x variance (FitError).
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

// Mean 0, sample SD 1. Throws DomainError for zero variance.
std::vector<double> zscores(std::span<const double> values);

struct CorrelationResult {
  double r = 0.0;
  double p_value = 1.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n = 0;
};

// pearson_r + wald_p + percentile bootstrap CI over (x, y) pairs.
CorrelationResult correlate(std::span<const double> x, std::span<const double> y,
                            std::size_t n_resamples, double alpha,
                            std::uint64_t seed);

}  // namespace narrmem::stats
