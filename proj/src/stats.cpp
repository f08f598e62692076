#include "narrmem/stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <string>
#include <limits>
#include <utility>

#include <boost/math/distributions/students_t.hpp>

namespace narrmem::stats {

namespace {

void require_same_length(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw InvalidArgument("length mismatch: " + std::to_string(x.size()) + " vs " +
                          std::to_string(y.size()));
  }
}

// Acklam's rational approximation for the lower half, p in (0, 0.5].
double probit_lower_initial(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double probit(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("probit defined on (0, 1); got " + std::to_string(p));
  }
  if (p == 0.5) return 0.0;
  const bool upper = p > 0.5;
  const double q = upper ? 1.0 - p : p;  // exact for p in [0.5, 1)
  double x = probit_lower_initial(q);
  // Two Halley steps against the erfc-based CDF take the ~1e-9 rational
  // approximation to full double precision.
  for (int i = 0; i < 2; ++i) {
    const double e = normal_cdf(x) - q;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return upper ? -x : x;
}

double clamp_rate(double p, std::size_t trials) {
  if (trials == 0) throw InvalidArgument("clamp_rate needs at least one trial");
  const double lo = 1.0 / (2.0 * static_cast<double>(trials));
  return std::clamp(p, lo, 1.0 - lo);
}

double mean(std::span<const double> v) {
  if (v.empty()) throw InvalidArgument("mean of empty sequence");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double standard_error(std::span<const double> v) {
  return sample_sd(v) / std::sqrt(static_cast<double>(v.size()));
}

namespace {
bool is_constant(std::span<const double> v) {
  return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end();
}
}  // namespace

double pearson_r(std::span<const double> x, std::span<const double> y) {
  require_same_length(x, y);
  if (x.size() < 3) throw InvalidArgument("pearson_r needs at least 3 pairs");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  // A constant series can leave rounding residue in sxx/syy, so test it directly.
  if (sxx <= 0.0 || syy <= 0.0 || is_constant(x) || is_constant(y)) {
    throw UndefinedCorrelationError("correlation undefined for zero-variance input");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double wald_p(double r, std::size_t n) {
  if (n < 4) throw InvalidArgument("wald_p needs n >= 4");
  if (!(r >= -1.0 && r <= 1.0)) throw DomainError("r outside [-1, 1]");
  const double ar = std::abs(r);
  if (ar >= 1.0) return 0.0;
  if (ar == 0.0) return 1.0;
  const double dof = static_cast<double>(n - 2);
  const double t = ar * std::sqrt(dof / (1.0 - ar * ar));
  const boost::math::students_t dist(dof);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, t)));
}

double kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  require_same_length(x, y);
  const std::size_t n = x.size();
  if (n < 2) throw InsufficientDataError("kendall tau needs at least 2 pairs");
  long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0.0 && dy == 0.0) continue;
      if (dx == 0.0) {
        ++ties_x;
      } else if (dy == 0.0) {
        ++ties_y;
      } else if ((dx > 0) == (dy > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double denom = std::sqrt(static_cast<double>(concordant + discordant + ties_x) *
                                 static_cast<double>(concordant + discordant + ties_y));
  if (denom == 0.0) throw UndefinedCorrelationError("kendall tau undefined: all ties");
  return static_cast<double>(concordant - discordant) / denom;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw InvalidArgument("quantile of empty sequence");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Interval percentile_interval(std::vector<double> values, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must be in (0, 1)");
  std::sort(values.begin(), values.end());
  return {quantile_sorted(values, alpha / 2.0), quantile_sorted(values, 1.0 - alpha / 2.0)};
}

BinnedTable bin_means(std::span<const double> x, std::span<const double> y,
                      BinSpec spec) {
  require_same_length(x, y);
  if (spec.n_bins < 1) throw InvalidArgument("n_bins must be >= 1");
  if (spec.n_bins > x.size()) {
    throw InvalidArgument("n_bins (" + std::to_string(spec.n_bins) +
                          ") exceeds sample size (" + std::to_string(x.size()) + ")");
  }
  auto summarize = [](std::vector<double>& ys, double lo, double hi, double center) {
    Bin b;
    b.x_low = lo;
    b.x_high = hi;
    b.x_center = center;
    b.count = ys.size();
    b.y_mean = mean(ys);
    b.y_stderr = ys.size() > 1 ? standard_error(ys) : std::numeric_limits<double>::quiet_NaN();
    return b;
  };

  BinnedTable table;
  if (spec.mode == BinMode::equal_count) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    const std::size_t base = x.size() / spec.n_bins;
    const std::size_t extra = x.size() % spec.n_bins;
    std::size_t pos = 0;
    for (std::size_t k = 0; k < spec.n_bins; ++k) {
      const std::size_t size = base + (k < extra ? 1 : 0);
      std::vector<double> ys;
      for (std::size_t i = pos; i < pos + size; ++i) ys.push_back(y[order[i]]);
      const double lo = x[order[pos]], hi = x[order[pos + size - 1]];
      table.bins.push_back(summarize(ys, lo, hi, 0.5 * (lo + hi)));
      pos += size;
    }
    return table;
  }

  const auto [mn_it, mx_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *mn_it, hi = *mx_it;
  if (!(hi > lo)) {
    std::vector<double> ys(y.begin(), y.end());
    table.bins.push_back(summarize(ys, lo, hi, lo));
    table.degenerate_range = true;
    return table;
  }
  const double width = (hi - lo) / static_cast<double>(spec.n_bins);
  std::vector<std::vector<double>> groups(spec.n_bins);
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto k = static_cast<std::size_t>(std::floor((x[i] - lo) / width));
    if (k >= spec.n_bins) k = spec.n_bins - 1;  // the top edge belongs to the last bin
    groups[k].push_back(y[i]);
  }
  for (std::size_t k = 0; k < spec.n_bins; ++k) {
    if (groups[k].empty()) continue;
    const double b_lo = lo + width * static_cast<double>(k);
    const double b_hi = k + 1 == spec.n_bins ? hi : lo + width * static_cast<double>(k + 1);
    table.bins.push_back(summarize(groups[k], b_lo, b_hi, 0.5 * (b_lo + b_hi)));
  }
  return table;
}

double sqrt_law(double retained) {
  if (retained < 0.0) throw DomainError("retained count must be >= 0");
  return std::sqrt(1.5 * std::numbers::pi * retained);
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  require_same_length(x, y);
  if (x.size() < 3) throw FitError("linear fit needs at least 3 points");
  const double mx = mean(x), my = mean(y);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0 || is_constant(x)) throw FitError("linear fit undefined for zero x-variance");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (fit.intercept + fit.slope * x[i]);
    sse += e * e;
  }
  fit.slope_stderr = std::sqrt(sse / static_cast<double>(x.size() - 2) / sxx);
  return fit;
}

std::vector<double> zscores(std::span<const double> values) {
  if (values.size() < 2) throw DomainError("z-scores need at least two values");
  const double m = mean(values);
  const double sd = sample_sd(values);
  if (!(sd > 0.0)) throw DomainError("z-scores undefined for zero variance");
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back((v - m) / sd);
  // second pass: moments exact to rounding for ill-conditioned input
  const double m2 = mean(out);
  for (double& v : out) v -= m2;
  const double sd2 = sample_sd(out);
  for (double& v : out) v /= sd2;
  return out;
}

CorrelationResult correlate(std::span<const double> x, std::span<const double> y,
                            std::size_t n_resamples, double alpha, std::uint64_t seed) {
  require_same_length(x, y);
  CorrelationResult out;
  out.n = x.size();
  out.r = pearson_r(x, y);
  out.p_value = wald_p(out.r, out.n);
  std::vector<std::pair<double, double>> pairs;
  pairs.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) pairs.emplace_back(x[i], y[i]);
  const auto ci = bootstrap_ci(
      std::span<const std::pair<double, double>>(pairs),
      [](std::span<const std::pair<double, double>> s) -> std::optional<double> {
        std::vector<double> a, b;
        a.reserve(s.size());
        b.reserve(s.size());
        for (const auto& [u, v] : s) {
          a.push_back(u);
          b.push_back(v);
        }
        try {
          return pearson_r(a, b);
        } catch (const UndefinedCorrelationError&) {
          return std::nullopt;
        }
      },
      n_resamples, alpha, seed);
  out.ci_low = ci.low;
  out.ci_high = ci.high;
  return out;
}

}  // namespace narrmem::stats
