#include <catch_amalgamated.hpp>

#include <cmath>

#include "spregime/spregime.hpp"

using namespace spregime;

TEST_CASE("projection onto a constant column averages") {
  // projecting (1,2,3)' on the span of the ones vector gives (2,2,2)'
  Eigen::MatrixXd X(3, 1);
  X << 1, 2, 3;
  Eigen::MatrixXd Z(3, 1);
  Z << 1, 1, 1;
  const Eigen::MatrixXd Xh = project(X, Z);
  CHECK(Xh(0, 0) == Catch::Approx(2.0).epsilon(1e-14));
  CHECK(Xh(1, 0) == Catch::Approx(2.0).epsilon(1e-14));
  CHECK(Xh(2, 0) == Catch::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("projection is idempotent and contractive") {
  Rng rng(7);
  const int n = 60;
  Eigen::MatrixXd X(n, 2), Z(n, 3);
  for (int i = 0; i < n; ++i) {
    Z(i, 0) = 1.0;
    Z(i, 1) = rng.normal();
    Z(i, 2) = rng.normal();
    X(i, 0) = Z(i, 1) + 0.5 * rng.normal();
    X(i, 1) = Z(i, 2) - Z(i, 1) + 0.5 * rng.normal();
  }
  const Eigen::MatrixXd P1 = project(X, Z);
  const Eigen::MatrixXd P2 = project(P1, Z);
  CHECK((P1 - P2).cwiseAbs().maxCoeff() < 1e-10);
  for (int c = 0; c < 2; ++c) CHECK(P1.col(c).norm() <= X.col(c).norm() + 1e-12);
}

TEST_CASE("projection is linear in its argument") {
  Rng rng(8);
  const int n = 40;
  Eigen::MatrixXd A(n, 1), B(n, 1), Z(n, 2);
  for (int i = 0; i < n; ++i) {
    Z(i, 0) = 1.0;
    Z(i, 1) = rng.normal();
    A(i, 0) = rng.normal();
    B(i, 0) = rng.normal();
  }
  const Eigen::MatrixXd lhs = project(2.0 * A + 3.0 * B, Z);
  const Eigen::MatrixXd rhs = 2.0 * project(A, Z) + 3.0 * project(B, Z);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("columns already in the instrument set pass through bit-exactly") {
  Rng rng(9);
  const int n = 50;
  Eigen::MatrixXd Z(n, 3);
  for (int i = 0; i < n; ++i) {
    Z(i, 0) = 1.0;
    Z(i, 1) = rng.normal();
    Z(i, 2) = rng.uniform();
  }
  Eigen::MatrixXd X(n, 2);
  X.col(0) = Z.col(1);  // exogenous column present in Z
  for (int i = 0; i < n; ++i) X(i, 1) = rng.normal();
  const Eigen::MatrixXd Xh = project(X, Z);
  CHECK((Xh.col(0) - Z.col(1)).cwiseAbs().maxCoeff() == 0.0);  // verbatim
}

TEST_CASE("only listed endogenous columns are replaced") {
  Rng rng(10);
  const int n = 50;
  Eigen::MatrixXd Z(n, 3), X(n, 3);
  for (int i = 0; i < n; ++i) {
    Z(i, 0) = 1.0;
    Z(i, 1) = rng.normal();
    Z(i, 2) = rng.normal();
    X(i, 0) = 1.0;
    X(i, 1) = Z(i, 1);
    X(i, 2) = Z(i, 2) + rng.normal();
  }
  const Eigen::MatrixXd same = project_endogenous(X, Z, {});
  CHECK((same - X).cwiseAbs().maxCoeff() == 0.0);  // no endogeneity: untouched

  const Eigen::MatrixXd rep = project_endogenous(X, Z, {2});
  CHECK((rep.col(0) - X.col(0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((rep.col(1) - X.col(1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((rep.col(2) - X.col(2)).cwiseAbs().maxCoeff() > 1e-8);  // actually projected
}

TEST_CASE("first-stage statistics detect strong and weak instruments") {
  const int n = 400;
  {
    const EndogenousData ed = endogenous_scenario(n, 3, 1.0);  // strong
    const DesignMatrices dm = log_transform(ed.ds, ed.spec);
    Eigen::MatrixXd x2(n, 1);
    x2.col(0) = dm.X.col(dm.endogenous_cols[0]);
    const auto st = first_stage_diagnostics(x2, dm.Z, dm.n_external_instruments);
    REQUIRE(st.size() == 1);
    CHECK(st[0].f > 10.0);
    CHECK_FALSE(st[0].weak);
    CHECK(st[0].r2 > 0.1);
    CHECK(st[0].p < 0.01);
  }
  {
    const EndogenousData ed = endogenous_scenario(n, 3, 0.01);  // nearly irrelevant
    const DesignMatrices dm = log_transform(ed.ds, ed.spec);
    Eigen::MatrixXd x2(n, 1);
    x2.col(0) = dm.X.col(dm.endogenous_cols[0]);
    const auto st = first_stage_diagnostics(x2, dm.Z, dm.n_external_instruments);
    REQUIRE(st.size() == 1);
    CHECK(st[0].weak);
  }
}

TEST_CASE("instrumenting shrinks the simultaneity bias on one draw") {
  const EndogenousData ed = endogenous_scenario(1500, 17, 1.0);
  const DesignMatrices dm = log_transform(ed.ds, ed.spec);
  const Eigen::MatrixXd xhat = project_endogenous(dm.X, dm.Z, dm.endogenous_cols);
  const FitResult naive = ols_fit(dm.X, dm.y);
  const FitResult corrected = ols_fit(xhat, dm.y);
  const double true_b = ed.true_beta[2];
  CHECK(std::abs(corrected.beta[2] - true_b) < std::abs(naive.beta[2] - true_b));
}
