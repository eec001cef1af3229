#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spregime/common.hpp"
#include "spregime/stats.hpp"

namespace spregime {

struct FirstStageStat {
  std::string name;
  double r2 = 0;
  double f = 0;       // joint F of the excluded instruments
  double p = 1;
  bool weak = false;  // F < 10 convention; reporting only, never aborts
};

// OLS of each endogenous column on the full instrument set Z, whose last
// n_excluded columns are the external instruments being tested.
inline std::vector<FirstStageStat> first_stage_diagnostics(
    const Eigen::MatrixXd& X2, const Eigen::MatrixXd& Z, Eigen::Index n_excluded,
    const std::vector<std::string>& names = {}) {
  const Eigen::Index n = Z.rows(), q = n_excluded;
  if (X2.rows() != n) throw ConfigError("first_stage_diagnostics: row mismatch");
  if (q < 1 || q > Z.cols())
    throw ConfigError("first_stage_diagnostics: invalid excluded-instrument count");
  if (n <= Z.cols())
    throw ConfigError("first_stage_diagnostics: need n > number of instrument columns");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
  if (qr.rank() < Z.cols())
    throw NumericError("first_stage_diagnostics: rank-deficient instrument matrix");
  const Eigen::MatrixXd Zr = Z.leftCols(Z.cols() - q);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_r(Zr);

  std::vector<FirstStageStat> out;
  for (Eigen::Index c = 0; c < X2.cols(); ++c) {
    const Eigen::VectorXd x = X2.col(c);
    const double rss_full = (x - Z * qr.solve(x)).squaredNorm();
    const double rss_restr =
        Zr.cols() > 0 ? (x - Zr * qr_r.solve(x)).squaredNorm() : x.squaredNorm();
    const double tss = (x.array() - x.mean()).matrix().squaredNorm();

    FirstStageStat s;
    s.name = c < static_cast<Eigen::Index>(names.size())
                 ? names[static_cast<std::size_t>(c)]
                 : "endogenous_" + std::to_string(c);
    s.r2 = tss > 0 ? 1.0 - rss_full / tss : (rss_full <= 1e-300 ? 1.0 : 0.0);
    const double dof = static_cast<double>(n - Z.cols());
    if (rss_full <= 1e-300) {
      s.f = std::numeric_limits<double>::infinity();
      s.p = 0.0;
    } else {
      s.f = ((rss_restr - rss_full) / static_cast<double>(q)) / (rss_full / dof);
      s.f = std::max(0.0, s.f);
      s.p = fisher_f_sf(s.f, static_cast<double>(q), dof);
    }
    s.weak = s.f < 10.0;
    out.push_back(s);
  }
  return out;
}

// Least-squares projection of every column of X onto span(Z). Columns that
// already appear in Z verbatim are copied through unchanged so exogenous
// regressors survive bit-exactly.
inline Eigen::MatrixXd project(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z) {
  if (X.rows() != Z.rows()) throw ConfigError("project: row mismatch");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
  if (qr.rank() < Z.cols()) throw NumericError("project: rank-deficient instrument matrix");
  Eigen::MatrixXd Xhat(X.rows(), X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    bool verbatim = false;
    for (Eigen::Index zc = 0; zc < Z.cols() && !verbatim; ++zc)
      verbatim = X.col(c) == Z.col(zc);
    Xhat.col(c) = verbatim ? X.col(c) : Eigen::VectorXd(Z * qr.solve(X.col(c)));
  }
  return Xhat;
}

// Projection restricted to the named endogenous columns; everything else is
// passed through untouched, which keeps the no-endogeneity pipeline path
// bit-identical to the raw design.
inline Eigen::MatrixXd project_endogenous(const Eigen::MatrixXd& X,
                                          const Eigen::MatrixXd& Z,
                                          const std::vector<Eigen::Index>& endo_cols) {
  if (endo_cols.empty()) return X;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
  if (qr.rank() < Z.cols())
    throw NumericError("project_endogenous: rank-deficient instrument matrix");
  Eigen::MatrixXd Xhat = X;
  for (Eigen::Index c : endo_cols) {
    if (c < 0 || c >= X.cols()) throw ConfigError("project_endogenous: column out of range");
    Xhat.col(c) = Z * qr.solve(X.col(c));
  }
  return Xhat;
}

}  // namespace spregime
