#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "spregime/common.hpp"
#include "spregime/weights.hpp"

namespace spregime {

enum class SigmaMode { DofCorrected, Ml };

struct WlsOptions {
  SigmaMode sigma_mode = SigmaMode::DofCorrected;
  double cond_warn = 1e10;
  double cond_error = 1e14;
};

struct LocalFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd cov;         // sandwich: s2 * M (X'W^2X) M, M = (X'WX)^-1
  Eigen::MatrixXd dispersion;  // the sigma2-free sandwich M (X'W^2X) M
  Eigen::MatrixXd xtwx_inv;    // M, kept for hat values and refits
  double sigma2 = 0;
  double weighted_rss = 0;
  double sum_w = 0;
  double cond = 0;
  bool ill_conditioned = false;
  double fitted = 0;  // x_i' beta at the fit's own point (set by local_fit_all)
  double hat = 0;     // leverage s_ii of observation i in its own fit
};

// One weighted least-squares fit. Weights may contain zeros; support is
// judged by the weight total, not the row count.
inline LocalFit wls_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& w, const WlsOptions& opts = {}) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (y.size() != n || w.size() != n)
    throw ConfigError("wls_fit: dimension mismatch");
  if (w.minCoeff() < 0) throw ConfigError("wls_fit: negative weight");
  const double sum_w = w.sum();
  if (sum_w < static_cast<double>(p))
    throw NumericError("wls_fit: insufficient local support (sum of weights < p)");

  Eigen::VectorXd sw = w.cwiseSqrt();
  Eigen::MatrixXd Xs = sw.asDiagonal() * X;
  Eigen::VectorXd ys = sw.cwiseProduct(y);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xs);
  if (qr.rank() < p) throw NumericError("wls_fit: rank-deficient design");
  Eigen::VectorXd diag = qr.matrixR().diagonal().cwiseAbs().head(p);
  const double cond = diag.maxCoeff() / diag.minCoeff();
  if (cond > opts.cond_error)
    throw NumericError("wls_fit: design condition estimate exceeds limit");

  LocalFit fit;
  fit.beta = qr.solve(ys);
  fit.cond = cond;
  fit.ill_conditioned = cond > opts.cond_warn;
  fit.sum_w = sum_w;
  fit.weighted_rss = (ys - Xs * fit.beta).squaredNorm();
  const double dof =
      opts.sigma_mode == SigmaMode::DofCorrected ? sum_w - static_cast<double>(p) : sum_w;
  if (dof > 0) {
    fit.sigma2 = std::max(0.0, fit.weighted_rss / dof);
  } else if (fit.weighted_rss <= 1e-10 * std::max(1.0, ys.squaredNorm())) {
    fit.sigma2 = 0.0;  // exact interpolation on a square system
  } else {
    throw NumericError("wls_fit: zero degrees of freedom with nonzero residual");
  }

  Eigen::MatrixXd xtwx = Xs.transpose() * Xs;
  fit.xtwx_inv = xtwx.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::MatrixXd xtw2x = X.transpose() * w.cwiseAbs2().asDiagonal() * X;
  fit.dispersion = fit.xtwx_inv * xtw2x * fit.xtwx_inv;
  fit.cov = fit.sigma2 * fit.dispersion;
  return fit;
}

// Locally weighted fit at every observation; row i of `weights` is the
// kernel row for observation i. Deterministic under any thread count.
inline std::vector<LocalFit> local_fit_all(const Eigen::MatrixXd& X,
                                           const Eigen::VectorXd& y,
                                           const Eigen::MatrixXd& weights,
                                           const WlsOptions& opts = {},
                                           int n_threads = 1) {
  const Eigen::Index n = X.rows();
  if (weights.rows() != n || weights.cols() != n)
    throw ConfigError("local_fit_all: weight matrix must be n x n");
  std::vector<LocalFit> fits(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), n_threads, [&](std::size_t i) {
    const Eigen::Index ii = static_cast<Eigen::Index>(i);
    LocalFit f = wls_fit(X, y, weights.row(ii).transpose(), opts);
    f.fitted = X.row(ii).dot(f.beta);
    f.hat = weights(ii, ii) * (X.row(ii) * f.xtwx_inv).dot(X.row(ii));
    fits[i] = std::move(f);
  });
  return fits;
}

struct BandwidthScore {
  int k = 0;
  double aicc = std::numeric_limits<double>::infinity();
  double rss = std::numeric_limits<double>::infinity();
  double tr_s = 0;
  bool valid = false;
};

// Corrected AIC of the locally weighted surface at neighbour count k:
//   AICc = 2n ln(sigma_hat) + n ln(2pi) + n (n + tr S) / (n - 2 - tr S),
// sigma_hat = sqrt(RSS / n). Infeasible k yields an infinite score.
inline BandwidthScore gwr_aicc(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const Eigen::MatrixXd& dist, int k,
                               const WlsOptions& opts = {}, int n_threads = 1) {
  BandwidthScore score;
  score.k = k;
  const Eigen::Index n = X.rows();
  try {
    Eigen::VectorXd bw = adaptive_bandwidth(dist, k);
    Eigen::MatrixXd w = initial_weights(dist, bw);
    std::vector<LocalFit> fits = local_fit_all(X, y, w, opts, n_threads);
    double rss = 0, tr_s = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = y[i] - fits[static_cast<std::size_t>(i)].fitted;
      rss += r * r;
      tr_s += fits[static_cast<std::size_t>(i)].hat;
    }
    const double denom = static_cast<double>(n) - 2.0 - tr_s;
    if (!(denom > 0) || !(rss > 0) || !std::isfinite(rss)) return score;
    const double nn = static_cast<double>(n);
    score.rss = rss;
    score.tr_s = tr_s;
    score.aicc = 2.0 * nn * std::log(std::sqrt(rss / nn)) + nn * std::log(2.0 * M_PI) +
                 nn * (nn + tr_s) / denom;
    score.valid = std::isfinite(score.aicc);
  } catch (const NumericError&) {
  } catch (const DataError&) {
  }
  return score;
}

struct BandwidthSelection {
  int k = 0;
  BandwidthScore best;
  std::map<int, BandwidthScore> evaluated;
};

// Minimize AICc over integer neighbour counts: golden-section bracketing
// followed by an exhaustive sweep of the incumbent's +-3 neighbourhood.
// Ties go to the larger (smoother) k.
inline BandwidthSelection select_bandwidth(const Eigen::MatrixXd& X,
                                           const Eigen::VectorXd& y,
                                           const Eigen::MatrixXd& dist, int k_min,
                                           int k_max, const WlsOptions& opts = {},
                                           int n_threads = 1) {
  const Eigen::Index n = X.rows();
  if (k_min < 1 || k_min > k_max || k_max >= n)
    throw ConfigError("select_bandwidth: need 1 <= k_min <= k_max <= n-1");
  BandwidthSelection sel;
  auto eval = [&](int k) -> const BandwidthScore& {
    auto it = sel.evaluated.find(k);
    if (it == sel.evaluated.end())
      it = sel.evaluated.emplace(k, gwr_aicc(X, y, dist, k, opts, n_threads)).first;
    return it->second;
  };

  if (k_max - k_min > 12) {
    const double invphi = 0.6180339887498949;
    double a = k_min, b = k_max;
    int x1 = static_cast<int>(std::lround(b - invphi * (b - a)));
    int x2 = static_cast<int>(std::lround(a + invphi * (b - a)));
    double f1 = eval(x1).aicc, f2 = eval(x2).aicc;
    while (b - a > 3) {
      if (f1 > f2) {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = static_cast<int>(std::lround(a + invphi * (b - a)));
        x2 = std::min(std::max(x2, static_cast<int>(a) + 1), static_cast<int>(b) - 1);
        f2 = eval(x2).aicc;
      } else {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = static_cast<int>(std::lround(b - invphi * (b - a)));
        x1 = std::min(std::max(x1, static_cast<int>(a) + 1), static_cast<int>(b) - 1);
        f1 = eval(x1).aicc;
      }
      if (x1 >= x2) break;
    }
  } else {
    for (int k = k_min; k <= k_max; ++k) eval(k);
  }

  int incumbent = k_min;
  double incumbent_aicc = std::numeric_limits<double>::infinity();
  for (const auto& [k, s] : sel.evaluated)
    if (s.valid && s.aicc <= incumbent_aicc) {
      incumbent = k;
      incumbent_aicc = s.aicc;
    }
  // Sweep around the incumbent so integer rounding cannot skip the optimum.
  for (int k = std::max(k_min, incumbent - 3); k <= std::min(k_max, incumbent + 3); ++k)
    eval(k);

  BandwidthScore best;
  for (const auto& [k, s] : sel.evaluated)
    if (s.valid && (!best.valid || s.aicc < best.aicc ||
                    (s.aicc == best.aicc && k > best.k)))
      best = s;
  if (!best.valid)
    throw ConfigError("select_bandwidth: no feasible neighbour count in range");
  sel.k = best.k;
  sel.best = best;
  return sel;
}

}  // namespace spregime
