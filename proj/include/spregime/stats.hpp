#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "spregime/common.hpp"

namespace spregime {

inline double chi_squared_sf(double x, double df) {
  if (df <= 0) throw NumericError("chi-squared df must be positive");
  if (!std::isfinite(x)) return x > 0 ? 0.0 : 1.0;
  if (x <= 0) return 1.0;
  boost::math::chi_squared dist(df);
  return boost::math::cdf(boost::math::complement(dist, x));
}

inline double chi_squared_quantile(double p, double df) {
  boost::math::chi_squared dist(df);
  return boost::math::quantile(dist, p);
}

inline double fisher_f_sf(double x, double df1, double df2) {
  if (df1 <= 0 || df2 <= 0) throw NumericError("F-test df must be positive");
  if (!std::isfinite(x)) return x > 0 ? 0.0 : 1.0;
  if (x <= 0) return 1.0;
  boost::math::fisher_f dist(df1, df2);
  return boost::math::cdf(boost::math::complement(dist, x));
}

// Two-sided p-value of a z statistic.
inline double normal_p_two_sided(double z) {
  if (!std::isfinite(z)) return std::isnan(z) ? std::numeric_limits<double>::quiet_NaN() : 0.0;
  boost::math::normal dist;
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(z)));
}

inline double student_t_p_two_sided(double t, double df) {
  if (df <= 0) return std::numeric_limits<double>::quiet_NaN();
  if (!std::isfinite(t)) return std::isnan(t) ? std::numeric_limits<double>::quiet_NaN() : 0.0;
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

// ***, **, * and . mark significance at the 0.1%, 1%, 5% and 10% levels.
inline std::string significance_stars(double p) {
  if (std::isnan(p)) return "";
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  if (p < 0.1) return ".";
  return "";
}

inline constexpr const char* kSignificanceLegend =
    "***, **, * and . denote significance at the 0.1%, 1%, 5% and 10% "
    "levels, respectively";

struct ColumnStats {
  double min = 0, median = 0, mean = 0, max = 0, sd = 0;
};

inline ColumnStats column_stats(std::vector<double> v) {
  ColumnStats s;
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  s.min = v.front();
  s.max = v.back();
  const std::size_t n = v.size();
  s.median = (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  double sum = 0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(n);
  double ss = 0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  return s;
}

inline double quantile_of_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace spregime
