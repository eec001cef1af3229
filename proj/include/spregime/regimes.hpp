#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "spregime/common.hpp"
#include "spregime/local_regression.hpp"
#include "spregime/weights.hpp"

namespace spregime {

enum class WaldCov { Sum, First, Pooled };

struct AwsConfig {
  double tau = 0.001;   // Wald-kernel scale; literal default is a near-indicator
  double eta = 0.5;     // blending factor
  double omega = 1e-6;  // convergence tolerance on max weight change
  int max_iter = 100;
  double theta = 0.5;        // regime-adjacency threshold on the statistical factor
  int min_regime_size = 0;   // 0 = one more than the coefficient count
  WaldCov cov_mode = WaldCov::Sum;
  bool df_normalize = false;  // divide chi by the coefficient count before the kernel

  void check() const {
    if (!(tau > 0)) throw ConfigError("aws: tau must be positive");
    if (!(eta > 0 && eta <= 1)) throw ConfigError("aws: eta must be in (0, 1]");
    if (!(omega > 0)) throw ConfigError("aws: omega must be positive");
    if (!(theta > 0 && theta < 1)) throw ConfigError("aws: theta must be in (0, 1)");
    if (max_iter < 0) throw ConfigError("aws: max_iter must be nonnegative");
  }
};

// Wald distance between two local coefficient vectors. The covariance of
// the difference is cov_i + cov_j by default; singular covariances fall
// back to a pseudo-inverse and set *pinv_used. The pooled variant replaces
// the two per-fit noise variances with one shared level: regime mixing
// inflates a local residual variance and would otherwise mask exactly the
// contrasts the statistic exists to expose. When no shared level is passed,
// the pair's own mean variance is used.
inline double wald_pair(const LocalFit& a, const LocalFit& b,
                        WaldCov mode = WaldCov::Sum, bool* pinv_used = nullptr,
                        double pooled_sigma2 = -1.0) {
  if (!a.beta.allFinite() || !b.beta.allFinite() || !a.cov.allFinite() ||
      !b.cov.allFinite())
    throw NumericError("wald_pair: non-finite coefficient or covariance entries");
  Eigen::VectorXd d = a.beta - b.beta;
  Eigen::MatrixXd sigma;
  switch (mode) {
    case WaldCov::Sum: sigma = a.cov + b.cov; break;
    case WaldCov::First: sigma = a.cov; break;
    case WaldCov::Pooled: {
      const double s2 =
          pooled_sigma2 >= 0 ? pooled_sigma2 : 0.5 * (a.sigma2 + b.sigma2);
      sigma = s2 * (a.dispersion + b.dispersion);
      break;
    }
  }
  sigma = 0.5 * (sigma + sigma.transpose());

  Eigen::LDLT<Eigen::MatrixXd> ldlt(sigma);
  if (ldlt.info() == Eigen::Success) {
    const Eigen::VectorXd diag = ldlt.vectorD();
    const double dmax = diag.maxCoeff();
    if (diag.minCoeff() > 1e-12 * std::max(dmax, 1e-300))
      return std::max(0.0, d.dot(ldlt.solve(d)));
  }
  // rank-deficient covariance: invert on the non-null eigenspace only
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
  const Eigen::VectorXd ev = es.eigenvalues();
  const double tol = 1e-12 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  Eigen::VectorXd proj = es.eigenvectors().transpose() * d;
  double chi = 0;
  for (Eigen::Index r = 0; r < ev.size(); ++r)
    if (ev[r] > tol) chi += proj[r] * proj[r] / ev[r];
  if (pinv_used) *pinv_used = true;
  return std::max(0.0, chi);
}

struct AwsPair {
  Eigen::Index i = 0, j = 0;  // i < j
  double w0_ij = 0;           // kernel weight of j in i's row
  double w0_ji = 0;           // kernel weight of i in j's row
  double factor = 1;          // blended statistical factor, symmetric
  double chi = 0;             // latest Wald distance
};

struct AwsTraceRecord {
  int iteration = 0;
  double max_change = 0;
  double mean_factor = 1;
  std::size_t active_pairs = 0;  // pairs with factor above the adjacency threshold
  int floored_rows = 0;
};

struct WeightState {
  Eigen::MatrixXd w0;  // initial kernel rows (row i = weights of i's own fit)
  std::vector<AwsPair> pairs;
  std::vector<std::vector<std::size_t>> row_pairs;  // pair indices touching row i
  std::vector<LocalFit> fits;
  int iterations = 0;
  bool converged = false;
  int floored_rows_total = 0;
  bool pinv_warning = false;
  std::vector<AwsTraceRecord> trace;

  // Refit weight row for observation i under the current blended factors.
  Eigen::VectorXd row_weights(Eigen::Index i) const {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(w0.rows());
    w[i] = 1.0;
    for (std::size_t pi : row_pairs[static_cast<std::size_t>(i)]) {
      const AwsPair& pr = pairs[pi];
      if (pr.i == i) w[pr.j] = pr.factor * pr.w0_ij;
      else w[pr.i] = pr.factor * pr.w0_ji;
    }
    return w;
  }
};

inline WeightState make_weight_state(const Eigen::MatrixXd& w0) {
  const Eigen::Index n = w0.rows();
  WeightState st;
  st.w0 = w0;
  st.row_pairs.assign(static_cast<std::size_t>(n), {});
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (w0(i, j) > 0 || w0(j, i) > 0) {
        AwsPair pr;
        pr.i = i;
        pr.j = j;
        pr.w0_ij = w0(i, j);
        pr.w0_ji = w0(j, i);
        st.row_pairs[static_cast<std::size_t>(i)].push_back(st.pairs.size());
        st.row_pairs[static_cast<std::size_t>(j)].push_back(st.pairs.size());
        st.pairs.push_back(pr);
      }
  return st;
}

// Raw statistical factors K(chi; tau) for every pair, from the current fits.
// Shared noise level for the pooled Wald variant: the median of the current
// per-fit residual variances (robust against the inflated fits that sit on
// regime boundaries).
inline double pooled_noise_level(const std::vector<LocalFit>& fits) {
  if (fits.empty()) return 0.0;
  std::vector<double> s2(fits.size());
  for (std::size_t i = 0; i < fits.size(); ++i) s2[i] = fits[i].sigma2;
  const std::size_t mid = s2.size() / 2;
  std::nth_element(s2.begin(), s2.begin() + static_cast<std::ptrdiff_t>(mid),
                   s2.end());
  return s2[mid];
}

inline std::vector<double> update_weights(WeightState& state, const AwsConfig& cfg,
                                          int n_threads = 1) {
  const double df = state.fits.empty()
                        ? 1.0
                        : static_cast<double>(state.fits.front().beta.size());
  const double s2p = cfg.cov_mode == WaldCov::Pooled
                         ? pooled_noise_level(state.fits)
                         : -1.0;
  std::vector<double> raw(state.pairs.size());
  std::vector<unsigned char> pinv(state.pairs.size(), 0);
  parallel_for(state.pairs.size(), n_threads, [&](std::size_t pi) {
    AwsPair& pr = state.pairs[pi];
    bool used = false;
    const LocalFit& a = state.fits[static_cast<std::size_t>(pr.i)];
    const LocalFit& b = state.fits[static_cast<std::size_t>(pr.j)];
    pr.chi = wald_pair(a, b, cfg.cov_mode, &used, s2p);
    const double x = cfg.df_normalize ? pr.chi / df : pr.chi;
    raw[pi] = gaussian_kernel(x, cfg.tau);
    pinv[pi] = used ? 1 : 0;
  });
  for (unsigned char u : pinv) state.pinv_warning |= (u != 0);
  return raw;
}

inline std::vector<double> blend(const std::vector<double>& prev,
                                 const std::vector<double>& raw, double eta) {
  if (prev.size() != raw.size()) throw ConfigError("blend: support mismatch");
  std::vector<double> out(prev.size());
  for (std::size_t i = 0; i < prev.size(); ++i)
    out[i] = (1.0 - eta) * prev[i] + eta * raw[i];
  return out;
}

inline bool converged(const std::vector<double>& prev, const std::vector<double>& cur,
                      double omega) {
  if (prev.size() != cur.size()) throw ConfigError("converged: support mismatch");
  double mx = 0;
  for (std::size_t i = 0; i < prev.size(); ++i)
    mx = std::max(mx, std::fabs(prev[i] - cur[i]));
  return mx < omega;
}

// Full smoothing iteration. Starts from kernel weights at the selected
// neighbour count, then alternates pair comparisons, blended reweighting,
// and local refits until the largest weight change drops below omega.
inline WeightState run_aws(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::MatrixXd& coords, int k_opt,
                           const AwsConfig& cfg, const WlsOptions& wls_opts = {},
                           int n_threads = 1) {
  cfg.check();
  const Eigen::Index n = X.rows();
  const double p_cols = static_cast<double>(X.cols());
  const Eigen::MatrixXd dist = pairwise_distance(coords);
  const Eigen::VectorXd bw = adaptive_bandwidth(dist, k_opt);
  const Eigen::MatrixXd w0 = initial_weights(dist, bw);

  WeightState st = make_weight_state(w0);
  st.fits = local_fit_all(X, y, w0, wls_opts, n_threads);

  for (int l = 1; l <= cfg.max_iter; ++l) {
    const std::vector<double> raw = update_weights(st, cfg, n_threads);
    std::vector<double> prev(st.pairs.size());
    for (std::size_t pi = 0; pi < st.pairs.size(); ++pi) prev[pi] = st.pairs[pi].factor;
    std::vector<double> cand = blend(prev, raw, cfg.eta);

    // Support guard: a row whose blended weight total would fall below the
    // coefficient count keeps its previous pair weights. Rolling one row
    // back can starve another, so sweep to a fixed point.
    int floored = 0;
    std::vector<unsigned char> rolled(st.pairs.size(), 0);
    bool changed = true;
    while (changed) {
      changed = false;
      for (Eigen::Index i = 0; i < n; ++i) {
        double rowsum = 1.0;
        for (std::size_t pi : st.row_pairs[static_cast<std::size_t>(i)]) {
          const AwsPair& pr = st.pairs[pi];
          rowsum += cand[pi] * (pr.i == i ? pr.w0_ij : pr.w0_ji);
        }
        if (rowsum < p_cols) {
          bool any = false;
          for (std::size_t pi : st.row_pairs[static_cast<std::size_t>(i)])
            if (!rolled[pi] && cand[pi] != prev[pi]) {
              cand[pi] = prev[pi];
              rolled[pi] = 1;
              any = true;
            }
          if (any) {
            ++floored;
            changed = true;
          }
        }
      }
    }
    st.floored_rows_total += floored;

    double max_change = 0;
    double mean_factor = 0;
    std::size_t active = 0;
    for (std::size_t pi = 0; pi < st.pairs.size(); ++pi) {
      const AwsPair& pr = st.pairs[pi];
      const double scale = std::max(pr.w0_ij, pr.w0_ji);
      max_change = std::max(max_change, scale * std::fabs(cand[pi] - prev[pi]));
      mean_factor += cand[pi];
      if (cand[pi] >= cfg.theta) ++active;
      st.pairs[pi].factor = cand[pi];
    }
    if (!st.pairs.empty()) mean_factor /= static_cast<double>(st.pairs.size());

    parallel_for(static_cast<std::size_t>(n), n_threads, [&](std::size_t i) {
      const Eigen::Index ii = static_cast<Eigen::Index>(i);
      LocalFit f = wls_fit(X, y, st.row_weights(ii), wls_opts);
      f.fitted = X.row(ii).dot(f.beta);
      f.hat = (X.row(ii) * f.xtwx_inv).dot(X.row(ii));
      st.fits[i] = std::move(f);
    });

    st.iterations = l;
    st.trace.push_back({l, max_change, mean_factor, active, floored});
    if (max_change < cfg.omega) {
      st.converged = true;
      break;
    }
  }
  return st;
}

struct RegimeAssignment {
  std::vector<int> labels;  // 1-based regime ids, decreasing size order
  int c = 0;
  std::vector<int> sizes;
};

namespace detail {

inline double mean_cross_wald(const WeightState& st, const std::vector<int>& comp,
                              const std::vector<Eigen::Index>& members_a,
                              int target_comp, WaldCov mode, double s2p) {
  double total = 0;
  std::size_t count = 0;
  for (Eigen::Index u : members_a)
    for (std::size_t v = 0; v < comp.size(); ++v)
      if (comp[v] == target_comp) {
        total += wald_pair(st.fits[static_cast<std::size_t>(u)], st.fits[v],
                           mode, nullptr, s2p);
        ++count;
      }
  return count ? total / static_cast<double>(count)
               : std::numeric_limits<double>::infinity();
}

}  // namespace detail

// Regime read-off: threshold the statistical factor, take connected
// components, then absorb undersized components into the neighbouring
// regime whose coefficients are closest in mean Wald distance.
inline RegimeAssignment extract_regimes(const WeightState& st, const AwsConfig& cfg) {
  const Eigen::Index n = st.w0.rows();
  const int min_size = cfg.min_regime_size > 0
                           ? cfg.min_regime_size
                           : static_cast<int>(st.fits.front().beta.size()) + 1;
  const double s2p = cfg.cov_mode == WaldCov::Pooled
                         ? pooled_noise_level(st.fits)
                         : -1.0;

  std::vector<std::vector<Eigen::Index>> adj(static_cast<std::size_t>(n));
  for (const AwsPair& pr : st.pairs)
    if (pr.factor >= cfg.theta) {
      adj[static_cast<std::size_t>(pr.i)].push_back(pr.j);
      adj[static_cast<std::size_t>(pr.j)].push_back(pr.i);
    }

  std::vector<int> comp(static_cast<std::size_t>(n), -1);
  int n_comp = 0;
  for (Eigen::Index s = 0; s < n; ++s) {
    if (comp[static_cast<std::size_t>(s)] >= 0) continue;
    std::deque<Eigen::Index> queue{s};
    comp[static_cast<std::size_t>(s)] = n_comp;
    while (!queue.empty()) {
      const Eigen::Index u = queue.front();
      queue.pop_front();
      for (Eigen::Index v : adj[static_cast<std::size_t>(u)])
        if (comp[static_cast<std::size_t>(v)] < 0) {
          comp[static_cast<std::size_t>(v)] = n_comp;
          queue.push_back(v);
        }
    }
    ++n_comp;
  }

  // Iteratively merge the smallest undersized component.
  while (true) {
    std::vector<int> size(static_cast<std::size_t>(n_comp), 0);
    for (int c : comp) ++size[static_cast<std::size_t>(c)];
    int victim = -1;
    for (int c = 0; c < n_comp; ++c)
      if (size[static_cast<std::size_t>(c)] > 0 &&
          size[static_cast<std::size_t>(c)] < min_size &&
          (victim < 0 || size[static_cast<std::size_t>(c)] <
                             size[static_cast<std::size_t>(victim)]))
        victim = c;
    int alive = 0;
    for (int c = 0; c < n_comp; ++c) alive += size[static_cast<std::size_t>(c)] > 0;
    if (victim < 0 || alive <= 1) break;

    std::vector<Eigen::Index> members;
    for (Eigen::Index i = 0; i < n; ++i)
      if (comp[static_cast<std::size_t>(i)] == victim) members.push_back(i);

    // candidate regimes: those sharing geographic support with the victim
    std::vector<char> neighbour(static_cast<std::size_t>(n_comp), 0);
    for (const AwsPair& pr : st.pairs) {
      const int ci = comp[static_cast<std::size_t>(pr.i)];
      const int cj = comp[static_cast<std::size_t>(pr.j)];
      if (ci == victim && cj != victim) neighbour[static_cast<std::size_t>(cj)] = 1;
      if (cj == victim && ci != victim) neighbour[static_cast<std::size_t>(ci)] = 1;
    }
    bool any_neighbour = false;
    for (char c : neighbour) any_neighbour |= (c != 0);

    int best = -1;
    double best_wald = std::numeric_limits<double>::infinity();
    for (int c = 0; c < n_comp; ++c) {
      if (c == victim || size[static_cast<std::size_t>(c)] == 0) continue;
      if (any_neighbour && !neighbour[static_cast<std::size_t>(c)]) continue;
      const double mw =
          detail::mean_cross_wald(st, comp, members, c, cfg.cov_mode, s2p);
      if (mw < best_wald) {
        best_wald = mw;
        best = c;
      }
    }
    if (best < 0) break;
    for (Eigen::Index i : members) comp[static_cast<std::size_t>(i)] = best;
  }

  // relabel 1..c by decreasing size, ties by first appearance
  std::vector<int> size(static_cast<std::size_t>(n_comp), 0);
  std::vector<Eigen::Index> first(static_cast<std::size_t>(n_comp), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = comp[static_cast<std::size_t>(i)];
    ++size[static_cast<std::size_t>(c)];
    first[static_cast<std::size_t>(c)] = std::min(first[static_cast<std::size_t>(c)], i);
  }
  std::vector<int> order;
  for (int c = 0; c < n_comp; ++c)
    if (size[static_cast<std::size_t>(c)] > 0) order.push_back(c);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (size[static_cast<std::size_t>(a)] != size[static_cast<std::size_t>(b)])
      return size[static_cast<std::size_t>(a)] > size[static_cast<std::size_t>(b)];
    return first[static_cast<std::size_t>(a)] < first[static_cast<std::size_t>(b)];
  });
  std::vector<int> relabel(static_cast<std::size_t>(n_comp), 0);
  for (std::size_t r = 0; r < order.size(); ++r)
    relabel[static_cast<std::size_t>(order[r])] = static_cast<int>(r) + 1;

  RegimeAssignment out;
  out.c = static_cast<int>(order.size());
  out.labels.resize(static_cast<std::size_t>(n));
  out.sizes.assign(static_cast<std::size_t>(out.c), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int lbl = relabel[static_cast<std::size_t>(comp[static_cast<std::size_t>(i)])];
    out.labels[static_cast<std::size_t>(i)] = lbl;
    ++out.sizes[static_cast<std::size_t>(lbl - 1)];
  }
  return out;
}

}  // namespace spregime
