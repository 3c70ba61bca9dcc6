#pragma once

// Curve preprocessing and trend statistics for per-sample score series.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "agentseval/error.hpp"

namespace agentseval::stats {

/// Labelled, non-empty sequence of finite values.
class Series {
 public:
  Series(std::vector<double> values, std::string label = {}) : values_(std::move(values)), label_(std::move(label)) {
    if (values_.empty()) throw Error(ErrorKind::EmptyInput, "series '" + label_ + "' is empty");
    for (double v : values_) {
      if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "series '" + label_ + "' has a non-finite value");
    }
  }

  const std::vector<double>& values() const noexcept { return values_; }
  const std::string& label() const noexcept { return label_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  bool is_constant() const {
    return std::all_of(values_.begin(), values_.end(), [&](double v) { return v == values_.front(); });
  }

 private:
  std::vector<double> values_;
  std::string label_;
};

/// 1-based ranks; tied values share the mean of the ranks they span.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

/// Spearman's rho with average ranks for ties. A constant series has no
/// ranking, so it raises DegenerateSeries.
inline double spearman(const Series& xs, const Series& ys) {
  if (xs.size() != ys.size()) throw Error(ErrorKind::LengthMismatch, "spearman needs equal-length series");
  if (xs.is_constant()) throw Error(ErrorKind::DegenerateSeries, "series '" + xs.label() + "' is constant");
  if (ys.is_constant()) throw Error(ErrorKind::DegenerateSeries, "series '" + ys.label() + "' is constant");
  const double rho = pearson(average_ranks(xs.values()), average_ranks(ys.values()));
  return std::clamp(rho, -1.0, 1.0);
}

/// Accumulated |a_i - b_j| along the cheapest monotone warping path with
/// steps (1,0), (0,1), (1,1); D(1,1) = cost(1,1).
inline double dtw(const Series& a, const Series& b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= m; ++j) {
      const double cost = std::abs(a[i - 1] - b[j - 1]);
      cur[j] = cost + std::min({prev[j], cur[j - 1], prev[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

/// Centered moving average. Near the edges the window is cut to the indices
/// that exist, so the first value of [0,3,6] with window 3 is mean(0,3).
inline Series moving_average(const Series& s, int window) {
  if (window < 1 || window % 2 == 0) {
    throw Error(ErrorKind::EvenWindow, "window must be odd and >= 1, got " + std::to_string(window));
  }
  const auto half = static_cast<std::size_t>(window / 2);
  const auto& v = s.values();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(v.size() - 1, i + half);
    if (lo == hi) {
      out[i] = v[i];
      continue;
    }
    // Clamping to the window range keeps constant runs exactly constant.
    double sum = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) sum += v[k];
    out[i] = std::clamp(sum / static_cast<double>(hi - lo + 1),
                        *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo),
                                          v.begin() + static_cast<std::ptrdiff_t>(hi) + 1),
                        *std::max_element(v.begin() + static_cast<std::ptrdiff_t>(lo),
                                          v.begin() + static_cast<std::ptrdiff_t>(hi) + 1));
  }
  return Series(std::move(out), s.label());
}

/// (v - min) / (max - min); a constant series maps to all zeros.
inline Series minmax_normalize(const Series& s) {
  const auto [lo_it, hi_it] = std::minmax_element(s.values().begin(), s.values().end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  std::vector<double> out(s.size(), 0.0);
  if (hi > lo) {
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = std::clamp((s[i] - lo) / (hi - lo), 0.0, 1.0);
  }
  return Series(std::move(out), s.label());
}

struct TrendOptions {
  int window = 15;
  bool invert_errors = true;        // correlate against 1 - normalized errors
  bool smooth_for_spearman = false; // rank the smoothed metric instead of the raw one
};

struct TrendReport {
  double spearman = 0.0;
  double dtw = 0.0;
  std::vector<double> metric_curve;  // normalized, smoothed metric
  std::vector<double> error_curve;   // normalized (inverted) errors, smoothed
};

/// Error target curve: min-max normalized errors, inverted so that fewer
/// errors map to higher values.
inline Series error_target(const Series& errors, bool invert) {
  auto norm = minmax_normalize(errors);
  if (!invert) return norm;
  std::vector<double> inv(norm.size());
  for (std::size_t i = 0; i < norm.size(); ++i) inv[i] = 1.0 - norm[i];
  return Series(std::move(inv), errors.label());
}

/// Normalized, smoothed metric and error-target curves plus their DTW
/// distance. Both curves go through the same moving average.
inline TrendReport trend_curves(const Series& metric, const Series& errors, const TrendOptions& opts = {}) {
  if (metric.size() != errors.size()) throw Error(ErrorKind::LengthMismatch, "metric and errors differ in length");
  const auto metric_curve = moving_average(minmax_normalize(metric), opts.window);
  const auto error_curve = moving_average(error_target(errors, opts.invert_errors), opts.window);
  TrendReport report;
  report.dtw = dtw(metric_curve, error_curve);
  report.metric_curve = metric_curve.values();
  report.error_curve = error_curve.values();
  return report;
}

/// Trend agreement between a metric and annotated error counts. Samples must
/// already be sorted by ascending error count. Spearman ranks the raw metric
/// against the error target; DTW comes from trend_curves.
inline TrendReport trend_report(const Series& metric, const Series& errors, const TrendOptions& opts = {}) {
  auto report = trend_curves(metric, errors, opts);
  const auto target = error_target(errors, opts.invert_errors);
  const Series ranked = opts.smooth_for_spearman ? moving_average(metric, opts.window) : metric;
  report.spearman = spearman(ranked, target);
  return report;
}

}  // namespace agentseval::stats
