#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "spregime/common.hpp"

namespace spregime {

struct ScalarMax {
  double x = 0;
  double fx = -std::numeric_limits<double>::infinity();
};

// Golden-section maximization on [lo, hi]; deterministic, derivative-free.
inline ScalarMax golden_section_max(const std::function<double(double)>& f,
                                    double lo, double hi, double tol = 1e-8) {
  if (!(lo < hi)) throw ConfigError("golden_section_max: empty interval");
  const double invphi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - invphi * (b - a);
  double x2 = a + invphi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > tol) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + invphi * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - invphi * (b - a);
      f1 = f(x1);
    }
  }
  ScalarMax out;
  out.x = 0.5 * (a + b);
  out.fx = f(out.x);
  if (f1 > out.fx) { out.x = x1; out.fx = f1; }
  if (f2 > out.fx) { out.x = x2; out.fx = f2; }
  return out;
}

struct VectorMax {
  Eigen::VectorXd x;
  double fx = -std::numeric_limits<double>::infinity();
};

// Nelder-Mead maximization with box clamping. Evaluation points are
// projected into [lower, upper] before being scored.
inline VectorMax nelder_mead_max(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x0,
                                 const Eigen::VectorXd& step,
                                 const Eigen::VectorXd& lower,
                                 const Eigen::VectorXd& upper,
                                 double tol = 1e-8, int max_iter = 500) {
  const int d = static_cast<int>(x0.size());
  auto clamp = [&](Eigen::VectorXd v) {
    for (int i = 0; i < d; ++i) v[i] = std::min(upper[i], std::max(lower[i], v[i]));
    return v;
  };
  std::vector<Eigen::VectorXd> pts(d + 1);
  std::vector<double> val(d + 1);
  pts[0] = clamp(x0);
  val[0] = f(pts[0]);
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXd p = x0;
    p[i] += step[i];
    pts[i + 1] = clamp(p);
    val[i + 1] = f(pts[i + 1]);
  }
  auto order = [&]() {
    for (int i = 0; i <= d; ++i)
      for (int j = i + 1; j <= d; ++j)
        if (val[j] > val[i]) {
          std::swap(val[i], val[j]);
          std::swap(pts[i], pts[j]);
        }
  };
  order();
  for (int it = 0; it < max_iter; ++it) {
    double spread = 0;
    for (int i = 1; i <= d; ++i)
      spread = std::max(spread, (pts[i] - pts[0]).cwiseAbs().maxCoeff());
    if (spread < tol && std::fabs(val[0] - val[d]) < tol) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < d; ++i) centroid += pts[i];
    centroid /= static_cast<double>(d);

    Eigen::VectorXd xr = clamp(centroid + (centroid - pts[d]));
    double fr = f(xr);
    if (fr > val[0]) {
      Eigen::VectorXd xe = clamp(centroid + 2.0 * (centroid - pts[d]));
      double fe = f(xe);
      if (fe > fr) { pts[d] = xe; val[d] = fe; }
      else { pts[d] = xr; val[d] = fr; }
    } else if (fr > val[d - 1]) {
      pts[d] = xr;
      val[d] = fr;
    } else {
      Eigen::VectorXd xc = clamp(centroid + 0.5 * (pts[d] - centroid));
      double fc = f(xc);
      if (fc > val[d]) { pts[d] = xc; val[d] = fc; }
      else {
        for (int i = 1; i <= d; ++i) {
          pts[i] = clamp(pts[0] + 0.5 * (pts[i] - pts[0]));
          val[i] = f(pts[i]);
        }
      }
    }
    order();
  }
  VectorMax out;
  out.x = pts[0];
  out.fx = val[0];
  return out;
}

// Central-difference Hessian; step 1e-5 scaled by parameter magnitude.
inline Eigen::MatrixXd numerical_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                                         const Eigen::VectorXd& theta,
                                         double rel_step = 1e-5) {
  const int d = static_cast<int>(theta.size());
  Eigen::VectorXd h(d);
  for (int i = 0; i < d; ++i) h[i] = rel_step * std::max(1.0, std::fabs(theta[i]));
  Eigen::MatrixXd hess(d, d);
  const double f0 = f(theta);
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXd tp = theta, tm = theta;
    tp[i] += h[i];
    tm[i] -= h[i];
    hess(i, i) = (f(tp) - 2.0 * f0 + f(tm)) / (h[i] * h[i]);
    for (int j = i + 1; j < d; ++j) {
      Eigen::VectorXd tpp = theta, tpm = theta, tmp = theta, tmm = theta;
      tpp[i] += h[i]; tpp[j] += h[j];
      tpm[i] += h[i]; tpm[j] -= h[j];
      tmp[i] -= h[i]; tmp[j] += h[j];
      tmm[i] -= h[i]; tmm[j] -= h[j];
      const double v = (f(tpp) - f(tpm) - f(tmp) + f(tmm)) / (4.0 * h[i] * h[j]);
      hess(i, j) = v;
      hess(j, i) = v;
    }
  }
  return hess;
}

}  // namespace spregime
