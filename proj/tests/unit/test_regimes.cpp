#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "spregime/spregime.hpp"

using namespace spregime;

namespace {

LocalFit scalar_fit(double beta, double var) {
  LocalFit f;
  f.beta = Eigen::VectorXd::Constant(1, beta);
  f.cov = Eigen::MatrixXd::Constant(1, 1, var);
  // split the variance into a unit noise level times a design dispersion
  f.sigma2 = 1.0;
  f.dispersion = f.cov;
  f.xtwx_inv = f.cov;
  return f;
}

// two spatial halves with different laws on the unit square
struct TwoRegime {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::MatrixXd coords;
  std::vector<int> truth;
};

TwoRegime make_two_regime(int n, std::uint64_t seed, double contrast) {
  Rng rng(seed);
  TwoRegime t;
  t.X.resize(n, 2);
  t.y.resize(n);
  t.coords.resize(n, 2);
  t.truth.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    t.coords(i, 0) = rng.uniform();
    t.coords(i, 1) = rng.uniform();
    t.X(i, 0) = 1.0;
    t.X(i, 1) = rng.normal();
    const bool left = t.coords(i, 0) < 0.5;
    t.truth[static_cast<std::size_t>(i)] = left ? 1 : 2;
    const double b0 = left ? 1.0 : 1.0 + contrast;
    const double b1 = left ? 0.5 : 0.5 + contrast;
    t.y[i] = b0 + b1 * t.X(i, 1) + 0.05 * rng.normal();
  }
  return t;
}

}  // namespace

TEST_CASE("pairwise contrast statistic on scalar fits") {
  // (1-0)^2 / (0.5+0.5) = 1
  const LocalFit a = scalar_fit(1.0, 0.5);
  const LocalFit b = scalar_fit(0.0, 0.5);
  CHECK(wald_pair(a, b) == Catch::Approx(1.0).epsilon(1e-12));
  // same fit: zero distance
  CHECK(wald_pair(a, a) == Catch::Approx(0.0).margin(1e-15));
  // first-fit covariance convention uses 0.5 in the denominator
  CHECK(wald_pair(a, b, WaldCov::First) == Catch::Approx(2.0).epsilon(1e-12));
  // pooled convention without an explicit level: pair-mean noise variance
  // (here 1.0) times the summed dispersions, 1 / (1*(0.5+0.5)) = 1
  CHECK(wald_pair(a, b, WaldCov::Pooled) == Catch::Approx(1.0).epsilon(1e-12));
  // an explicit shared noise level rescales the metric: 1 / (0.1*1.0) = 10
  CHECK(wald_pair(a, b, WaldCov::Pooled, nullptr, 0.1) ==
        Catch::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("singular pairwise covariance falls back to a pseudo-inverse") {
  LocalFit a, b;
  a.beta = Eigen::VectorXd::Zero(2);
  b.beta = Eigen::VectorXd::Zero(2);
  b.beta[0] = 1.0;
  a.cov = Eigen::MatrixXd::Zero(2, 2);
  a.cov(0, 0) = 1.0;  // second direction has no variance at all
  b.cov = a.cov;
  a.xtwx_inv = a.cov;
  b.xtwx_inv = b.cov;
  bool pinv = false;
  const double chi = wald_pair(a, b, WaldCov::Sum, &pinv);
  CHECK(pinv);
  CHECK(chi == Catch::Approx(0.5).epsilon(1e-12));  // 1 / (1+1) along the first axis
}

TEST_CASE("an infinite similarity scale leaves the initial weights bit-exact") {
  const TwoRegime t = make_two_regime(40, 5, 1.0);
  AwsConfig cfg;
  cfg.tau = std::numeric_limits<double>::infinity();
  cfg.max_iter = 1;
  const WeightState st = run_aws(t.X, t.y, t.coords, 10, cfg);
  for (const AwsPair& p : st.pairs) CHECK(p.factor == 1.0);
}

TEST_CASE("homogeneous data keeps almost all pair factors near one") {
  Rng rng(31);
  const int n = 80;
  Eigen::MatrixXd coords(n, 2), X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    coords(i, 0) = rng.uniform();
    coords(i, 1) = rng.uniform();
    X(i, 0) = 1.0;
    X(i, 1) = rng.normal();
    y[i] = 1.0 + 0.5 * X(i, 1) + 0.1 * rng.normal();
  }
  AwsConfig cfg;
  cfg.tau = 40.0;
  const WeightState st = run_aws(X, y, coords, 25, cfg);
  std::size_t high = 0;
  for (const AwsPair& p : st.pairs)
    if (p.factor > 0.9) ++high;
  CHECK(static_cast<double>(high) >=
        0.95 * static_cast<double>(st.pairs.size()));
}

TEST_CASE("two separated laws drive cross-boundary factors to zero") {
  const TwoRegime t = make_two_regime(120, 7, 1.5);
  AwsConfig cfg;
  cfg.tau = 40.0;
  const WeightState st = run_aws(t.X, t.y, t.coords, 30, cfg);
  double cross_max = 0, within_min = 1;
  std::size_t cross = 0, within = 0;
  for (const AwsPair& p : st.pairs) {
    const bool same =
        t.truth[static_cast<std::size_t>(p.i)] == t.truth[static_cast<std::size_t>(p.j)];
    if (same) {
      ++within;
      within_min = std::min(within_min, p.factor);
    } else {
      ++cross;
      cross_max = std::max(cross_max, p.factor);
    }
  }
  REQUIRE(cross > 0);
  REQUIRE(within > 0);
  // medians separate cleanly even if single pairs straddle the boundary
  std::vector<double> cf, wf;
  for (const AwsPair& p : st.pairs) {
    const bool same =
        t.truth[static_cast<std::size_t>(p.i)] == t.truth[static_cast<std::size_t>(p.j)];
    (same ? wf : cf).push_back(p.factor);
  }
  std::sort(cf.begin(), cf.end());
  std::sort(wf.begin(), wf.end());
  CHECK(cf[cf.size() / 2] < 0.1);
  CHECK(wf[wf.size() / 2] > 0.7);

  const RegimeAssignment reg = extract_regimes(st, cfg);
  CHECK(reg.c == 2);
  CHECK(adjusted_rand_index(t.truth, reg.labels) > 0.9);
}

TEST_CASE("iteration trace is recorded and converges on stable data") {
  const TwoRegime t = make_two_regime(60, 11, 1.0);
  AwsConfig cfg;
  cfg.tau = 40.0;
  cfg.max_iter = 50;
  const WeightState st = run_aws(t.X, t.y, t.coords, 20, cfg);
  CHECK(st.converged);
  CHECK(st.iterations >= 1);
  REQUIRE(st.trace.size() == static_cast<std::size_t>(st.iterations));
  // max change shrinks to the tolerance by the final record
  CHECK(st.trace.back().max_change < cfg.omega);
  // iterations are numbered consecutively from one
  for (std::size_t i = 0; i < st.trace.size(); ++i)
    CHECK(st.trace[i].iteration == static_cast<int>(i) + 1);
}

TEST_CASE("results are identical across thread counts") {
  const TwoRegime t = make_two_regime(50, 13, 1.0);
  AwsConfig cfg;
  cfg.tau = 30.0;
  const WeightState a = run_aws(t.X, t.y, t.coords, 15, cfg, {}, 1);
  const WeightState b = run_aws(t.X, t.y, t.coords, 15, cfg, {}, 4);
  REQUIRE(a.pairs.size() == b.pairs.size());
  for (std::size_t i = 0; i < a.pairs.size(); ++i)
    CHECK(a.pairs[i].factor == b.pairs[i].factor);  // bit-exact
  for (std::size_t i = 0; i < a.fits.size(); ++i)
    CHECK((a.fits[i].beta - b.fits[i].beta).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("relabelling regimes orders them by size") {
  const TwoRegime t = make_two_regime(90, 17, 1.5);
  AwsConfig cfg;
  cfg.tau = 40.0;
  const WeightState st = run_aws(t.X, t.y, t.coords, 25, cfg);
  const RegimeAssignment reg = extract_regimes(st, cfg);
  REQUIRE(reg.c >= 1);
  for (int r = 1; r < reg.c; ++r)
    CHECK(reg.sizes[static_cast<std::size_t>(r - 1)] >=
          reg.sizes[static_cast<std::size_t>(r)]);
  std::size_t total = 0;
  for (std::size_t s : reg.sizes) total += s;
  CHECK(total == static_cast<std::size_t>(t.X.rows()));
}

TEST_CASE("small fragments are merged into the closest regime") {
  const TwoRegime t = make_two_regime(70, 19, 1.5);
  AwsConfig cfg;
  cfg.tau = 40.0;
  cfg.min_regime_size = 30;  // force merging: 70 points cannot host 3 regimes of 30
  const WeightState st = run_aws(t.X, t.y, t.coords, 20, cfg);
  const RegimeAssignment reg = extract_regimes(st, cfg);
  for (int r = 0; r < reg.c; ++r)
    if (reg.c > 1) CHECK(reg.sizes[static_cast<std::size_t>(r)] >= 30);
}

TEST_CASE("configuration bounds are enforced") {
  AwsConfig cfg;
  cfg.tau = -1.0;
  CHECK_THROWS_AS(cfg.check(), ConfigError);
  cfg = AwsConfig{};
  cfg.eta = 1.5;
  CHECK_THROWS_AS(cfg.check(), ConfigError);
  cfg = AwsConfig{};
  cfg.theta = -0.2;
  CHECK_THROWS_AS(cfg.check(), ConfigError);
  cfg = AwsConfig{};
  cfg.max_iter = 0;
  CHECK_THROWS_AS(cfg.check(), ConfigError);
}
