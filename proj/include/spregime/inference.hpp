#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spregime/common.hpp"
#include "spregime/regimes.hpp"
#include "spregime/spatial_fit.hpp"
#include "spregime/stats.hpp"

namespace spregime {

struct TestResult {
  std::string name;
  double statistic = 0;
  std::string distribution;  // "F" or "chi2"
  double df1 = 0;
  double df2 = 0;  // 0 when the distribution has a single df
  double p = 1;
  std::string compared;  // which models/data entered the test
};

struct InferenceOptions {
  // Compatibility mode: p-values on k+1 df irrespective of the regime
  // count, matching published tables that keep the single-model df.
  bool paper_df = false;
};

// Classical equality-of-coefficients F test: pooled OLS against separate
// per-regime OLS fits of the same design.
inline TestResult chow_test(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const RegimeAssignment& regimes,
                            const InferenceOptions& opts = {}) {
  const Eigen::Index n = X.rows(), p = X.cols();
  const int c = regimes.c;
  if (c < 2) throw ConfigError("chow_test: need at least two regimes");
  if (static_cast<Eigen::Index>(regimes.labels.size()) != n)
    throw ConfigError("chow_test: label count mismatch");

  Eigen::VectorXd beta_pooled = X.householderQr().solve(y);
  const double rss_pooled = (y - X * beta_pooled).squaredNorm();

  double rss_within = 0;
  for (int r = 1; r <= c; ++r) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < n; ++i)
      if (regimes.labels[static_cast<std::size_t>(i)] == r) rows.push_back(i);
    if (static_cast<Eigen::Index>(rows.size()) <= p)
      throw NumericError("chow_test: regime " + std::to_string(r) +
                         " too small for its own fit");
    Eigen::MatrixXd Xr(static_cast<Eigen::Index>(rows.size()), p);
    Eigen::VectorXd yr(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t q = 0; q < rows.size(); ++q) {
      Xr.row(static_cast<Eigen::Index>(q)) = X.row(rows[q]);
      yr[static_cast<Eigen::Index>(q)] = y[rows[q]];
    }
    Eigen::VectorXd br = Xr.householderQr().solve(yr);
    rss_within += (yr - Xr * br).squaredNorm();
  }

  const double df1 = opts.paper_df ? static_cast<double>(p)
                                   : static_cast<double>((c - 1) * p);
  const double df2 = static_cast<double>(n) - static_cast<double>(c) * p;
  if (!(df2 > 0)) throw NumericError("chow_test: no residual degrees of freedom");

  TestResult t;
  t.name = "chow";
  t.distribution = "F";
  t.df1 = df1;
  t.df2 = df2;
  t.statistic = ((rss_pooled - rss_within) / df1) / (rss_within / df2);
  t.statistic = std::max(0.0, t.statistic);
  t.p = fisher_f_sf(t.statistic, df1, df2);
  t.compared = "pooled OLS vs per-regime OLS (" + std::to_string(c) + " regimes)";
  return t;
}

struct SpatialChow {
  TestResult wald;
  TestResult lr;
  bool has_lr = false;
};

// Coefficient-equality test inside a spatial model. Primary form: Wald on
// the (c-1)(k+1) restrictions equating every regime block to the first,
// using the regime fit's coefficient covariance. Secondary form: LR between
// the regime and global fits, same df.
inline SpatialChow spatial_chow_test(const FitResult& global_fit,
                                     const FitResult& regime_fit,
                                     const InferenceOptions& opts = {}) {
  const int c = regime_fit.n_regimes;
  if (c < 2) throw ConfigError("spatial_chow_test: regime fit has a single regime");
  const Eigen::Index pc = regime_fit.beta.size();
  if (pc % c != 0) throw ConfigError("spatial_chow_test: block structure mismatch");
  const Eigen::Index p = pc / c;
  if (regime_fit.beta_cov.rows() != pc)
    throw ConfigError("spatial_chow_test: regime fit lacks a coefficient covariance");

  const Eigen::Index q = (c - 1) * p;
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(q, pc);
  for (int r = 1; r < c; ++r)
    for (Eigen::Index col = 0; col < p; ++col) {
      R((r - 1) * p + col, col) = 1.0;
      R((r - 1) * p + col, r * p + col) = -1.0;
    }
  Eigen::VectorXd rb = R * regime_fit.beta;
  Eigen::MatrixXd rvr = R * regime_fit.beta_cov * R.transpose();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(rvr);
  if (ldlt.info() != Eigen::Success ||
      ldlt.vectorD().minCoeff() <= 1e-14 * std::max(ldlt.vectorD().maxCoeff(), 1e-300))
    throw NumericError("spatial_chow_test: singular restriction covariance");

  SpatialChow out;
  out.wald.name = "spatial_chow_wald";
  out.wald.distribution = "chi2";
  out.wald.df1 = opts.paper_df ? static_cast<double>(p) : static_cast<double>(q);
  out.wald.statistic = std::max(0.0, rb.dot(ldlt.solve(rb)));
  out.wald.p = chi_squared_sf(out.wald.statistic, out.wald.df1);
  out.wald.compared = std::string(model_kind_name(regime_fit.kind)) +
                      " regimes vs equality restrictions";

  if (global_fit.n > 0) {
    if (global_fit.n != regime_fit.n)
      throw ConfigError("spatial_chow_test: fits are on different samples");
    out.lr.name = "spatial_chow_lr";
    out.lr.distribution = "chi2";
    out.lr.df1 = out.wald.df1;
    double stat = 2.0 * (regime_fit.logl - global_fit.logl);
    if (stat < -1e-6)
      throw NumericError("spatial_chow_test: regime fit has lower likelihood than "
                         "the global fit it nests");
    out.lr.statistic = std::max(0.0, stat);
    out.lr.p = chi_squared_sf(out.lr.statistic, out.lr.df1);
    out.lr.compared = std::string(model_kind_name(global_fit.kind)) + " global vs " +
                      model_kind_name(regime_fit.kind) + " regimes";
    out.has_lr = true;
  }
  return out;
}

// Likelihood-ratio test of a nested pair, df = parameter-count difference.
inline TestResult lr_test(const FitResult& full, const FitResult& nested) {
  if (full.n != nested.n) throw ConfigError("lr_test: fits are on different samples");
  const int df = full.n_par - nested.n_par;
  if (df <= 0) throw ConfigError("lr_test: full model must have more parameters");
  double stat = 2.0 * (full.logl - nested.logl);
  if (stat < -1e-6)
    throw NumericError(
        "lr_test: negative statistic beyond tolerance (optimizer failure in the "
        "full model)");
  TestResult t;
  t.name = "lr";
  t.distribution = "chi2";
  t.df1 = static_cast<double>(df);
  t.statistic = std::max(0.0, stat);
  t.p = chi_squared_sf(t.statistic, t.df1);
  t.compared = std::string(model_kind_name(full.kind)) + " vs " +
               model_kind_name(nested.kind);
  return t;
}

struct ComparisonRow {
  std::string model;
  bool regimes = false;
  double logl = 0;
  int n_par = 0;
  double aic = 0;
  bool best = false;
};

// AIC ranking of candidate fits on the same data; ascending, ties keep
// input order, smallest flagged.
inline std::vector<ComparisonRow> model_comparison(const std::vector<FitResult>& fits) {
  if (fits.size() < 2) throw ConfigError("model_comparison: need at least two fits");
  for (const auto& f : fits)
    if (f.n != fits.front().n)
      throw ConfigError("model_comparison: fits are on different samples");
  std::vector<ComparisonRow> rows;
  for (const auto& f : fits) {
    ComparisonRow r;
    r.model = model_kind_name(f.kind);
    r.regimes = f.n_regimes > 1;
    r.logl = f.logl;
    r.n_par = f.n_par;
    r.aic = f.aic;
    rows.push_back(r);
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ComparisonRow& a, const ComparisonRow& b) {
                     return a.aic < b.aic;
                   });
  rows.front().best = true;
  return rows;
}

}  // namespace spregime
