#pragma once

// Plot-data helpers: clipped Freedman-Diaconis histograms, order-statistic
// quantiles and per-observer shape-scale medians.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gazetail/common.hpp"
#include "gazetail/gmm.hpp"
#include "gazetail/trials.hpp"

namespace gazetail {

/// Linear-interpolation quantile of sorted data (h = (n - 1) q).
inline double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error("quantile of empty data");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(q, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return sorted_quantile(v, 0.5);
}

struct Histogram {
  double lo = 0.0;
  double width = 0.0;
  double clip = 0.0;             // 99.5th percentile; upper edge of the last bin
  std::vector<std::size_t> counts;
  std::size_t overflow = 0;      // values above the clip point
  std::size_t total = 0;

  double edge(std::size_t i) const {
    return i == counts.size() ? clip : lo + width * static_cast<double>(i);
  }
};

inline constexpr double kHistogramClip = 0.995;
inline constexpr std::size_t kMaxHistogramBins = 10000;

/// Freedman-Diaconis bins (width 2 IQR n^(-1/3)) over [min, p99.5].
inline Histogram freedman_diaconis(std::vector<double> values) {
  if (values.empty()) throw Error("histogram: no values");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  Histogram h;
  h.total = n;
  h.lo = values.front();
  h.clip = sorted_quantile(values, kHistogramClip);
  const double span = h.clip - h.lo;
  std::size_t bins = 1;
  if (span > 0.0) {
    const double iqr = sorted_quantile(values, 0.75) - sorted_quantile(values, 0.25);
    const double fd = 2.0 * iqr / std::cbrt(static_cast<double>(n));
    bins = fd > 0.0 ? static_cast<std::size_t>(std::ceil(span / fd))
                    : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    bins = std::clamp<std::size_t>(bins, 1, kMaxHistogramBins);
  }
  h.width = span > 0.0 ? span / static_cast<double>(bins) : 1.0;
  h.counts.assign(bins, 0);
  for (double v : values) {
    if (v > h.clip) {
      ++h.overflow;
      continue;
    }
    auto i = static_cast<std::size_t>((v - h.lo) / h.width);
    h.counts[std::min(i, bins - 1)]++;
  }
  return h;
}

struct ObserverMedian {
  std::string observer_id;
  double k = 0.0;
  double sigma = 0.0;
  std::size_t n = 0;
};

/// Componentwise medians of each observer's successful (k, sigma) records.
inline std::vector<ObserverMedian> shape_scale_medians(std::span<const TrialRecord> records) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_obs;
  for (const auto& r : records)
    if (r.ok) {
      auto& [ks, ss] = by_obs[r.observer_id];
      ks.push_back(r.params.k);
      ss.push_back(r.params.sigma);
    }
  std::vector<ObserverMedian> out;
  for (auto& [obs, v] : by_obs)
    out.push_back({obs, median(v.first), median(v.second), v.first.size()});
  return out;
}

}  // namespace gazetail
