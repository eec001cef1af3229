#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "spregime/common.hpp"
#include "spregime/optim.hpp"
#include "spregime/regimes.hpp"
#include "spregime/stats.hpp"

namespace spregime {

enum class ModelKind { Ols, Sae, Sar, Sarar };

inline const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Ols: return "OLS";
    case ModelKind::Sae: return "SAE";
    case ModelKind::Sar: return "SAR";
    case ModelKind::Sarar: return "SARAR";
  }
  return "?";
}

// Regime-major block design: row i carries X's row inside the column block
// of its regime, zeros elsewhere.
inline Eigen::MatrixXd build_regime_design(const Eigen::MatrixXd& X,
                                           const RegimeAssignment& regimes) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (static_cast<Eigen::Index>(regimes.labels.size()) != n)
    throw ConfigError("build_regime_design: label count mismatch");
  const int c = regimes.c;
  Eigen::MatrixXd Xt = Eigen::MatrixXd::Zero(n, p * c);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int lbl = regimes.labels[static_cast<std::size_t>(i)];
    if (lbl < 1 || lbl > c) throw ConfigError("build_regime_design: label out of range");
    Xt.block(i, p * (lbl - 1), 1, p) = X.row(i);
  }
  return Xt;
}

struct DesignInfo {
  std::vector<std::string> term_names;
  std::vector<int> term_regime;  // 0 = global, else 1..c
  int n_regimes = 1;
};

inline DesignInfo global_design_info(const std::vector<std::string>& x_names) {
  DesignInfo info;
  info.term_names = x_names;
  info.term_regime.assign(x_names.size(), 0);
  info.n_regimes = 1;
  return info;
}

inline DesignInfo regime_design_info(const std::vector<std::string>& x_names,
                                     const RegimeAssignment& regimes) {
  DesignInfo info;
  info.n_regimes = regimes.c;
  for (int r = 1; r <= regimes.c; ++r)
    for (const auto& nm : x_names) {
      info.term_names.push_back(nm);
      info.term_regime.push_back(r);
    }
  return info;
}

struct FitResult {
  ModelKind kind = ModelKind::Ols;
  Eigen::VectorXd beta;
  Eigen::VectorXd se;        // empty when SEs were not requested
  Eigen::VectorXd p_values;  // per coefficient, matches se
  Eigen::MatrixXd beta_cov;
  std::vector<std::string> term_names;
  std::vector<int> term_regime;
  int n_regimes = 1;
  bool has_rho = false, has_lambda = false;
  double rho = 0, lambda = 0;
  double se_rho = std::numeric_limits<double>::quiet_NaN();
  double se_lambda = std::numeric_limits<double>::quiet_NaN();
  double p_rho = std::numeric_limits<double>::quiet_NaN();
  double p_lambda = std::numeric_limits<double>::quiet_NaN();
  double sigma2 = 0;  // ML convention RSS/n, floored at 1e-12 inside logL
  double logl = 0;
  double aic = 0;
  Eigen::Index n = 0;
  int n_par = 0;
  double rss = 0;
  bool boundary_hit = false;
  bool identification_caveat = false;
  bool se_failed = false;
};

struct FitOptions {
  bool compute_se = true;
  int grid = 21;          // coarse grid per axis for the two-parameter search
  double bound = 0.995;   // spatial-parameter box
  double tol = 1e-8;
  int n_threads = 1;
};

inline double aic(const FitResult& fit) { return 2.0 * fit.n_par - 2.0 * fit.logl; }

inline Eigen::VectorXd fitted_mean(const FitResult& fit, const Eigen::MatrixXd& X) {
  if (X.cols() != fit.beta.size()) throw ConfigError("fitted_mean: design mismatch");
  return X * fit.beta;
}

// Direct/indirect effect decomposition is deliberately not implemented:
// with no spatial lag the coefficients are the elasticities themselves.
inline Eigen::VectorXd impact_decomposition(const FitResult& fit) {
  if (fit.has_rho && fit.rho != 0.0)
    throw ConfigError(
        "impact decomposition for a nonzero spatial lag is not implemented; "
        "coefficients are direct elasticities only when rho = 0");
  return fit.beta;
}

constexpr double kSigma2Floor = 1e-12;

// ln|I - lambda W|, precomputed from the spectrum of W for moderate n and
// factored per evaluation above that.
class LogDetFactor {
 public:
  explicit LogDetFactor(const Eigen::SparseMatrix<double>& w,
                        Eigen::Index eigen_limit = 2000)
      : w_(w), n_(w.rows()) {
    if (w.rows() != w.cols()) throw ConfigError("log_det_factor: W must be square");
    use_eigen_ = n_ <= eigen_limit;
    if (use_eigen_ && w_.nonZeros() > 0) {
      Eigen::EigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(w_), false);
      eigenvalues_ = es.eigenvalues();
    }
  }

  double operator()(double lambda) const {
    if (!(std::fabs(lambda) < 0.9999))
      throw ConfigError("log_det_factor: parameter outside admissible interval");
    if (w_.nonZeros() == 0 || lambda == 0.0) return 0.0;
    if (use_eigen_) {
      double sum = 0;
      for (Eigen::Index r = 0; r < eigenvalues_.size(); ++r)
        sum += std::log(std::abs(std::complex<double>(1.0, 0.0) -
                                 lambda * eigenvalues_[r]));
      return sum;
    }
    Eigen::SparseMatrix<double> m(n_, n_);
    m.setIdentity();
    m -= lambda * w_;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(m);
    if (lu.info() != Eigen::Success)
      throw NumericError("log_det_factor: sparse factorization failed");
    return lu.logAbsDeterminant();
  }

  bool eigen_path() const { return use_eigen_; }

 private:
  Eigen::SparseMatrix<double> w_;
  Eigen::Index n_;
  bool use_eigen_ = false;
  Eigen::VectorXcd eigenvalues_;
};

inline double log_det_factor(const Eigen::SparseMatrix<double>& w, double lambda) {
  return LogDetFactor(w)(lambda);
}

namespace detail {

struct ProfilePoint {
  Eigen::VectorXd beta;
  double rss = 0;
  double sigma2 = 0;
  double logl = -std::numeric_limits<double>::infinity();
};

// OLS of yt on Xt plus the Gaussian concentrated log-likelihood with the
// supplied Jacobian term.
inline ProfilePoint concentrated_point(const Eigen::MatrixXd& Xt,
                                       const Eigen::VectorXd& yt, double log_jac) {
  ProfilePoint pt;
  const double n = static_cast<double>(yt.size());
  pt.beta = Xt.householderQr().solve(yt);
  pt.rss = (yt - Xt * pt.beta).squaredNorm();
  pt.sigma2 = std::max(pt.rss / n, kSigma2Floor);
  pt.logl = -0.5 * n * (std::log(2.0 * M_PI) + 1.0) - 0.5 * n * std::log(pt.sigma2) +
            log_jac;
  return pt;
}

inline bool sparse_equal(const Eigen::SparseMatrix<double>& a,
                         const Eigen::SparseMatrix<double>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  Eigen::SparseMatrix<double> d = a - b;
  for (int k = 0; k < d.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(d, k); it; ++it)
      if (it.value() != 0.0) return false;
  return true;
}

inline void check_full_rank(const Eigen::MatrixXd& X, const char* who) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols())
    throw NumericError(std::string(who) + ": design matrix is rank-deficient");
}

// Coarse scan to bracket the global maximum, then golden-section inside the
// bracketing cell - guards the scalar profiles against local bumps.
inline ScalarMax bracketed_scalar_max(const std::function<double(double)>& f,
                                      double lo, double hi, int n_scan, double tol) {
  n_scan = std::max(5, n_scan);
  int best = 0;
  double best_f = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_scan; ++i) {
    const double x = lo + (hi - lo) * i / (n_scan - 1);
    const double fx = f(x);
    if (fx > best_f) {
      best_f = fx;
      best = i;
    }
  }
  const double a = lo + (hi - lo) * std::max(0, best - 1) / (n_scan - 1);
  const double b = lo + (hi - lo) * std::min(n_scan - 1, best + 1) / (n_scan - 1);
  ScalarMax out = golden_section_max(f, a, b, tol);
  if (best_f > out.fx) {
    out.x = lo + (hi - lo) * best / (n_scan - 1);
    out.fx = best_f;
  }
  return out;
}

inline void finish_scalar_se(FitResult& fit,
                             const std::function<double(const Eigen::VectorXd&)>& logl,
                             bool spatial_is_lambda) {
  const Eigen::Index p = fit.beta.size();
  Eigen::VectorXd theta(p + 2);
  theta.head(p) = fit.beta;
  theta[p] = spatial_is_lambda ? fit.lambda : fit.rho;
  theta[p + 1] = fit.sigma2;
  if (fit.rss <= kSigma2Floor * static_cast<double>(fit.n)) {
    fit.se_failed = true;
    return;
  }
  Eigen::MatrixXd hess = numerical_hessian(logl, theta);
  Eigen::MatrixXd info = -hess;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
  if (!lu.isInvertible()) {
    fit.se_failed = true;
    return;
  }
  Eigen::MatrixXd cov = lu.inverse();
  if (cov.diagonal().minCoeff() < 0) {
    fit.se_failed = true;
    return;
  }
  fit.beta_cov = cov.topLeftCorner(p, p);
  fit.se = fit.beta_cov.diagonal().cwiseSqrt();
  fit.p_values.resize(p);
  for (Eigen::Index c = 0; c < p; ++c)
    fit.p_values[c] = normal_p_two_sided(fit.beta[c] / fit.se[c]);
  const double se_sp = std::sqrt(cov(p, p));
  const double par = theta[p];
  if (spatial_is_lambda) {
    fit.se_lambda = se_sp;
    fit.p_lambda = normal_p_two_sided(par / se_sp);
  } else {
    fit.se_rho = se_sp;
    fit.p_rho = normal_p_two_sided(par / se_sp);
  }
}

}  // namespace detail

inline FitResult ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const DesignInfo& info = {}, bool compute_se = true) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (y.size() != n) throw ConfigError("ols_fit: dimension mismatch");
  if (n < p) throw NumericError("ols_fit: more coefficients than observations");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < p) throw NumericError("ols_fit: rank-deficient design");

  FitResult fit;
  fit.kind = ModelKind::Ols;
  // same solver as the concentrated profiles so nested fits agree bit-exactly
  fit.beta = X.householderQr().solve(y);
  fit.rss = (y - X * fit.beta).squaredNorm();
  fit.n = n;
  fit.sigma2 = std::max(fit.rss / static_cast<double>(n), kSigma2Floor);
  fit.logl = -0.5 * static_cast<double>(n) * (std::log(2.0 * M_PI) + 1.0) -
             0.5 * static_cast<double>(n) * std::log(fit.sigma2);
  fit.n_par = static_cast<int>(p) + 1;
  fit.aic = aic(fit);
  if (!info.term_names.empty()) {
    fit.term_names = info.term_names;
    fit.term_regime = info.term_regime;
    fit.n_regimes = info.n_regimes;
  } else {
    for (Eigen::Index c = 0; c < p; ++c) fit.term_names.push_back("x" + std::to_string(c));
    fit.term_regime.assign(static_cast<std::size_t>(p), 0);
  }
  if (compute_se) {
    const double s2 = fit.rss / static_cast<double>(n - p);
    fit.beta_cov =
        s2 * (X.transpose() * X).ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    fit.se = fit.beta_cov.diagonal().cwiseSqrt();
    fit.p_values.resize(p);
    for (Eigen::Index c = 0; c < p; ++c)
      fit.p_values[c] =
          student_t_p_two_sided(fit.beta[c] / fit.se[c], static_cast<double>(n - p));
  }
  return fit;
}

// Spatial-error model, concentrated quasi-ML over lambda:
// (I - lambda W)(y - X beta) = eps.
inline FitResult sae_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const Eigen::SparseMatrix<double>& W,
                         const FitOptions& opts = {}, const DesignInfo& info = {},
                         const LogDetFactor* ldf_in = nullptr) {
  const Eigen::Index n = X.rows();
  if (y.size() != n || W.rows() != n) throw ConfigError("sae_fit: dimension mismatch");
  detail::check_full_rank(X, "sae_fit");
  if (W.nonZeros() == 0) {
    FitResult fit = ols_fit(X, y, info, opts.compute_se);
    fit.kind = ModelKind::Sae;
    fit.has_lambda = true;
    fit.lambda = 0.0;
    fit.n_par += 1;
    fit.aic = aic(fit);
    return fit;
  }

  std::optional<LogDetFactor> ldf_own;
  if (!ldf_in) ldf_own.emplace(W);
  const LogDetFactor& ldf = ldf_in ? *ldf_in : *ldf_own;

  const Eigen::VectorXd Wy = W * y;
  const Eigen::MatrixXd WX = W * X;
  auto profile = [&](double lam) {
    return detail::concentrated_point(X - lam * WX, y - lam * Wy, ldf(lam));
  };
  ScalarMax opt = detail::bracketed_scalar_max(
      [&](double lam) { return profile(lam).logl; }, -opts.bound, opts.bound, 41,
      opts.tol);
  const detail::ProfilePoint pt = profile(opt.x);

  FitResult fit;
  fit.kind = ModelKind::Sae;
  fit.beta = pt.beta;
  fit.rss = pt.rss;
  fit.sigma2 = pt.sigma2;
  fit.logl = pt.logl;
  fit.has_lambda = true;
  fit.lambda = opt.x;
  fit.n = n;
  fit.n_par = static_cast<int>(X.cols()) + 2;
  fit.aic = aic(fit);
  fit.boundary_hit = std::fabs(opt.x) >= opts.bound - 1e-6;
  if (!info.term_names.empty()) {
    fit.term_names = info.term_names;
    fit.term_regime = info.term_regime;
    fit.n_regimes = info.n_regimes;
  } else {
    for (Eigen::Index c = 0; c < X.cols(); ++c)
      fit.term_names.push_back("x" + std::to_string(c));
    fit.term_regime.assign(static_cast<std::size_t>(X.cols()), 0);
  }
  if (opts.compute_se) {
    const Eigen::Index p = X.cols();
    auto full_logl = [&](const Eigen::VectorXd& th) {
      const double lam = th[p], s2 = th[p + 1];
      if (s2 <= 0 || std::fabs(lam) >= 0.9999)
        return -std::numeric_limits<double>::infinity();
      Eigen::VectorXd r = y - X * th.head(p);
      Eigen::VectorXd eps = r - lam * (W * r);
      return -0.5 * static_cast<double>(n) * std::log(2.0 * M_PI * s2) -
             eps.squaredNorm() / (2.0 * s2) + ldf(lam);
    };
    detail::finish_scalar_se(fit, full_logl, /*spatial_is_lambda=*/true);
  }
  return fit;
}

// Spatial-lag model, concentrated quasi-ML over rho:
// (I - rho W) y = X beta + eps.
inline FitResult sar_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const Eigen::SparseMatrix<double>& W,
                         const FitOptions& opts = {}, const DesignInfo& info = {},
                         const LogDetFactor* ldf_in = nullptr) {
  const Eigen::Index n = X.rows();
  if (y.size() != n || W.rows() != n) throw ConfigError("sar_fit: dimension mismatch");
  detail::check_full_rank(X, "sar_fit");
  if (W.nonZeros() == 0) {
    FitResult fit = ols_fit(X, y, info, opts.compute_se);
    fit.kind = ModelKind::Sar;
    fit.has_rho = true;
    fit.rho = 0.0;
    fit.n_par += 1;
    fit.aic = aic(fit);
    return fit;
  }

  std::optional<LogDetFactor> ldf_own;
  if (!ldf_in) ldf_own.emplace(W);
  const LogDetFactor& ldf = ldf_in ? *ldf_in : *ldf_own;

  const Eigen::VectorXd Wy = W * y;
  auto profile = [&](double rho) {
    return detail::concentrated_point(X, y - rho * Wy, ldf(rho));
  };
  ScalarMax opt = detail::bracketed_scalar_max(
      [&](double rho) { return profile(rho).logl; }, -opts.bound, opts.bound, 41,
      opts.tol);
  const detail::ProfilePoint pt = profile(opt.x);

  FitResult fit;
  fit.kind = ModelKind::Sar;
  fit.beta = pt.beta;
  fit.rss = pt.rss;
  fit.sigma2 = pt.sigma2;
  fit.logl = pt.logl;
  fit.has_rho = true;
  fit.rho = opt.x;
  fit.n = n;
  fit.n_par = static_cast<int>(X.cols()) + 2;
  fit.aic = aic(fit);
  fit.boundary_hit = std::fabs(opt.x) >= opts.bound - 1e-6;
  if (!info.term_names.empty()) {
    fit.term_names = info.term_names;
    fit.term_regime = info.term_regime;
    fit.n_regimes = info.n_regimes;
  } else {
    for (Eigen::Index c = 0; c < X.cols(); ++c)
      fit.term_names.push_back("x" + std::to_string(c));
    fit.term_regime.assign(static_cast<std::size_t>(X.cols()), 0);
  }
  if (opts.compute_se) {
    const Eigen::Index p = X.cols();
    auto full_logl = [&](const Eigen::VectorXd& th) {
      const double rho = th[p], s2 = th[p + 1];
      if (s2 <= 0 || std::fabs(rho) >= 0.9999)
        return -std::numeric_limits<double>::infinity();
      Eigen::VectorXd eps = y - rho * Wy - X * th.head(p);
      return -0.5 * static_cast<double>(n) * std::log(2.0 * M_PI * s2) -
             eps.squaredNorm() / (2.0 * s2) + ldf(rho);
    };
    detail::finish_scalar_se(fit, full_logl, /*spatial_is_lambda=*/false);
  }
  return fit;
}

// Combined model (I - rho W1) y = X beta + u, (I - lambda W2) u = eps.
// Concentrated surface over (rho, lambda), coarse grid plus axis solutions
// feeding a derivative-free polish, so the fit can never fall below the
// nested single-parameter optima.
inline FitResult sarar_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::SparseMatrix<double>& W1,
                           const Eigen::SparseMatrix<double>& W2,
                           const FitOptions& opts = {}, const DesignInfo& info = {},
                           const LogDetFactor* ldf1_in = nullptr,
                           const LogDetFactor* ldf2_in = nullptr) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (y.size() != n || W1.rows() != n || W2.rows() != n)
    throw ConfigError("sarar_fit: dimension mismatch");
  detail::check_full_rank(X, "sarar_fit");

  if (W1.nonZeros() == 0 && W2.nonZeros() == 0) {
    FitResult fit = ols_fit(X, y, info, opts.compute_se);
    fit.kind = ModelKind::Sarar;
    fit.has_rho = fit.has_lambda = true;
    fit.rho = fit.lambda = 0.0;
    fit.n_par += 2;
    fit.aic = aic(fit);
    return fit;
  }
  if (W1.nonZeros() == 0) {  // lag term vacuous: profile is flat in rho
    FitResult fit = sae_fit(X, y, W2, opts, info, ldf2_in);
    fit.kind = ModelKind::Sarar;
    fit.has_rho = true;
    fit.rho = 0.0;
    fit.n_par += 1;
    fit.aic = aic(fit);
    return fit;
  }
  if (W2.nonZeros() == 0) {  // error term vacuous: profile is flat in lambda
    FitResult fit = sar_fit(X, y, W1, opts, info, ldf1_in);
    fit.kind = ModelKind::Sarar;
    fit.has_lambda = true;
    fit.lambda = 0.0;
    fit.n_par += 1;
    fit.aic = aic(fit);
    return fit;
  }

  std::optional<LogDetFactor> ldf1_own, ldf2_own;
  if (!ldf1_in) ldf1_own.emplace(W1);
  if (!ldf2_in) ldf2_own.emplace(W2);
  const LogDetFactor& ldf1 = ldf1_in ? *ldf1_in : *ldf1_own;
  const LogDetFactor& ldf2 = ldf2_in ? *ldf2_in : *ldf2_own;

  const Eigen::VectorXd W1y = W1 * y;
  const Eigen::VectorXd W2y = W2 * y;
  const Eigen::VectorXd W2W1y = W2 * W1y;
  const Eigen::MatrixXd W2X = W2 * X;
  auto profile = [&](double rho, double lam) {
    Eigen::VectorXd yt = y - rho * W1y - lam * (W2y - rho * W2W1y);
    return detail::concentrated_point(X - lam * W2X, yt, ldf1(rho) + ldf2(lam));
  };
  auto surface = [&](double rho, double lam) { return profile(rho, lam).logl; };

  double best_rho = 0, best_lam = 0, best_ll = surface(0.0, 0.0);
  auto consider = [&](double rho, double lam, double ll) {
    if (ll > best_ll) {
      best_ll = ll;
      best_rho = rho;
      best_lam = lam;
    }
  };
  const int g = std::max(2, opts.grid);
  for (int a = 0; a < g; ++a)
    for (int b = 0; b < g; ++b) {
      const double rho = -opts.bound + 2.0 * opts.bound * a / (g - 1);
      const double lam = -opts.bound + 2.0 * opts.bound * b / (g - 1);
      consider(rho, lam, surface(rho, lam));
    }
  // axis solutions: the nested single-parameter models, searched exactly the
  // way sae_fit/sar_fit search them, so nesting survives local bumps
  ScalarMax ax_lam = detail::bracketed_scalar_max(
      [&](double l) { return surface(0.0, l); }, -opts.bound, opts.bound, 41, opts.tol);
  consider(0.0, ax_lam.x, ax_lam.fx);
  ScalarMax ax_rho = detail::bracketed_scalar_max(
      [&](double r) { return surface(r, 0.0); }, -opts.bound, opts.bound, 41, opts.tol);
  consider(ax_rho.x, 0.0, ax_rho.fx);

  Eigen::VectorXd x0(2), step(2), lo(2), hi(2);
  x0 << best_rho, best_lam;
  step << 0.05, 0.05;
  lo << -opts.bound, -opts.bound;
  hi << opts.bound, opts.bound;
  VectorMax polish = nelder_mead_max(
      [&](const Eigen::VectorXd& v) { return surface(v[0], v[1]); }, x0, step, lo, hi,
      opts.tol, 400);
  consider(polish.x[0], polish.x[1], polish.fx);

  if (!std::isfinite(best_ll))
    throw NumericError("sarar_fit: optimizer failed to find a finite likelihood");

  const detail::ProfilePoint pt = profile(best_rho, best_lam);
  FitResult fit;
  fit.kind = ModelKind::Sarar;
  fit.beta = pt.beta;
  fit.rss = pt.rss;
  fit.sigma2 = pt.sigma2;
  fit.logl = pt.logl;
  fit.has_rho = fit.has_lambda = true;
  fit.rho = best_rho;
  fit.lambda = best_lam;
  fit.n = n;
  fit.n_par = static_cast<int>(p) + 3;
  fit.aic = aic(fit);
  fit.boundary_hit = std::fabs(best_rho) >= opts.bound - 1e-6 ||
                     std::fabs(best_lam) >= opts.bound - 1e-6;
  if (!info.term_names.empty()) {
    fit.term_names = info.term_names;
    fit.term_regime = info.term_regime;
    fit.n_regimes = info.n_regimes;
  } else {
    for (Eigen::Index c = 0; c < p; ++c) fit.term_names.push_back("x" + std::to_string(c));
    fit.term_regime.assign(static_cast<std::size_t>(p), 0);
  }
  fit.identification_caveat = fit.n_regimes > 1 && detail::sparse_equal(W1, W2);

  if (opts.compute_se) {
    if (fit.rss <= kSigma2Floor * static_cast<double>(n)) {
      fit.se_failed = true;
      return fit;
    }
    Eigen::VectorXd theta(p + 3);
    theta.head(p) = fit.beta;
    theta[p] = fit.rho;
    theta[p + 1] = fit.lambda;
    theta[p + 2] = fit.sigma2;
    auto full_logl = [&](const Eigen::VectorXd& th) {
      const double rho = th[p], lam = th[p + 1], s2 = th[p + 2];
      if (s2 <= 0 || std::fabs(rho) >= 0.9999 || std::fabs(lam) >= 0.9999)
        return -std::numeric_limits<double>::infinity();
      Eigen::VectorXd u = y - rho * W1y - X * th.head(p);
      Eigen::VectorXd eps = u - lam * (W2 * u);
      return -0.5 * static_cast<double>(n) * std::log(2.0 * M_PI * s2) -
             eps.squaredNorm() / (2.0 * s2) + ldf1(rho) + ldf2(lam);
    };
    Eigen::MatrixXd info_mat = -numerical_hessian(full_logl, theta);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(info_mat);
    if (!lu.isInvertible()) {
      fit.se_failed = true;
      return fit;
    }
    Eigen::MatrixXd cov = lu.inverse();
    if (cov.diagonal().minCoeff() < 0) {
      fit.se_failed = true;
      return fit;
    }
    fit.beta_cov = cov.topLeftCorner(p, p);
    fit.se = fit.beta_cov.diagonal().cwiseSqrt();
    fit.p_values.resize(p);
    for (Eigen::Index c = 0; c < p; ++c)
      fit.p_values[c] = normal_p_two_sided(fit.beta[c] / fit.se[c]);
    fit.se_rho = std::sqrt(cov(p, p));
    fit.se_lambda = std::sqrt(cov(p + 1, p + 1));
    fit.p_rho = normal_p_two_sided(fit.rho / fit.se_rho);
    fit.p_lambda = normal_p_two_sided(fit.lambda / fit.se_lambda);
  }
  return fit;
}

// Innovation recovery for residual diagnostics.
inline Eigen::VectorXd sae_innovations(const FitResult& fit, const Eigen::MatrixXd& X,
                                       const Eigen::VectorXd& y,
                                       const Eigen::SparseMatrix<double>& W) {
  Eigen::VectorXd r = y - X * fit.beta;
  return r - fit.lambda * (W * r);
}

// Moran-style autocorrelation statistic (n/S0) * (e'We)/(e'e).
inline double moran_i(const Eigen::VectorXd& e, const Eigen::SparseMatrix<double>& W) {
  if (e.size() != W.rows()) throw ConfigError("moran_i: dimension mismatch");
  double s0 = 0;
  for (int k = 0; k < W.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(W, k); it; ++it)
      s0 += it.value();
  if (s0 == 0) throw ConfigError("moran_i: empty weight matrix");
  Eigen::VectorXd ec = e.array() - e.mean();
  return (static_cast<double>(e.size()) / s0) * ec.dot(W * ec) / ec.squaredNorm();
}

}  // namespace spregime
