#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "demandforge/errors.hpp"
#include "demandforge/fixed_effects.hpp"
#include "oracles.hpp"

namespace {

df::FactorSet one_factor(const std::vector<int>& codes, int levels) {
  df::FactorSet f;
  f.names = {"f"};
  f.codes = {codes};
  f.n_levels = {levels};
  return f;
}

}  // namespace

TEST_CASE("single factor demeaning equals dummy-regression residuals") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  const int n = 60;
  std::vector<int> codes(n);
  for (int i = 0; i < n; ++i) codes[static_cast<size_t>(i)] = i % 5;
  df::FactorSet f = one_factor(codes, 5);

  Eigen::MatrixXd col(n, 1);
  for (int i = 0; i < n; ++i) col(i, 0) = n01(rng);
  Eigen::MatrixXd demeaned = col;
  df::absorb_fixed_effects(demeaned, f);

  Eigen::MatrixXd D = df::dummy_design(f, n);
  Eigen::VectorXd fit = D * D.colPivHouseholderQr().solve(col.col(0));
  for (int i = 0; i < n; ++i)
    CHECK(std::abs(demeaned(i, 0) - (col(i, 0) - fit(i))) < 1e-12);
}

TEST_CASE("nested factors converge in at most two sweeps") {
  const int n = 40;
  std::vector<int> coarse(n), fine(n);
  for (int i = 0; i < n; ++i) {
    fine[static_cast<size_t>(i)] = i % 8;
    coarse[static_cast<size_t>(i)] = (i % 8) / 4;  // coarsening of fine
  }
  df::FactorSet f;
  f.names = {"fine", "coarse"};
  f.codes = {fine, coarse};
  f.n_levels = {8, 2};

  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd col(n, 1);
  for (int i = 0; i < n; ++i) col(i, 0) = n01(rng);
  // two sweeps must suffice for nested factors
  CHECK_NOTHROW(df::absorb_fixed_effects(col, f, 1e-10, 2));
  // after absorption both factor means are zero
  for (int g = 0; g < 8; ++g) {
    double acc = 0.0;
    int cnt = 0;
    for (int i = 0; i < n; ++i)
      if (fine[static_cast<size_t>(i)] == g) {
        acc += col(i, 0);
        ++cnt;
      }
    CHECK(std::abs(acc / cnt) < 1e-10);
  }
}

TEST_CASE("three crossed factors match dense dummy OLS on 1000 rows") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01;
  std::uniform_int_distribution<int> uprod(0, 24), utime(0, 19), ureg(0, 4);
  const int n = 1000;

  df::FactorSet f;
  f.names = {"product", "time", "region"};
  f.codes.assign(3, std::vector<int>(n));
  f.n_levels = {25, 20, 5};
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  std::vector<double> pe(25), te(20), re(5);
  for (auto& v : pe) v = n01(rng);
  for (auto& v : te) v = n01(rng);
  for (auto& v : re) v = n01(rng);
  for (int i = 0; i < n; ++i) {
    int p = uprod(rng), t = utime(rng), r = ureg(rng);
    f.codes[0][static_cast<size_t>(i)] = p;
    f.codes[1][static_cast<size_t>(i)] = t;
    f.codes[2][static_cast<size_t>(i)] = r;
    X(i, 0) = n01(rng) + 0.3 * pe[static_cast<size_t>(p)];
    X(i, 1) = n01(rng) + 0.2 * te[static_cast<size_t>(t)];
    y(i) = 1.5 * X(i, 0) - 0.7 * X(i, 1) + pe[static_cast<size_t>(p)] +
           te[static_cast<size_t>(t)] + re[static_cast<size_t>(r)] + 0.1 * n01(rng);
  }

  Eigen::MatrixXd cols(n, 3);
  cols.col(0) = y;
  cols.middleCols(1, 2) = X;
  df::absorb_fixed_effects(cols, f);
  Eigen::VectorXd beta_within =
      cols.middleCols(1, 2).colPivHouseholderQr().solve(cols.col(0));

  Eigen::MatrixXd D = df::dummy_design(f, n);
  Eigen::VectorXd beta_dense = oracle::dense_dummy_ols(X, y, D);

  CHECK(std::abs(beta_within[0] - beta_dense[0]) < 1e-8);
  CHECK(std::abs(beta_within[1] - beta_dense[1]) < 1e-8);
}

TEST_CASE("non-convergence reports after max sweeps") {
  // two heavily overlapping factors with a tight budget
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  const int n = 200;
  df::FactorSet f;
  f.names = {"a", "b"};
  f.codes.assign(2, std::vector<int>(n));
  f.n_levels = {50, 50};
  std::uniform_int_distribution<int> u(0, 49);
  for (int i = 0; i < n; ++i) {
    f.codes[0][static_cast<size_t>(i)] = u(rng);
    f.codes[1][static_cast<size_t>(i)] = u(rng);
  }
  Eigen::MatrixXd col(n, 1);
  for (int i = 0; i < n; ++i) col(i, 0) = n01(rng);
  try {
    df::absorb_fixed_effects(col, f, 1e-14, 1);
    FAIL("expected NonConvergence");
  } catch (const df::Error& e) {
    CHECK(e.code() == df::errc::non_convergence);
  }
}
