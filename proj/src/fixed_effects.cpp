#include "demandforge/fixed_effects.hpp"

#include <cmath>

#include "demandforge/errors.hpp"

namespace df {

void absorb_fixed_effects(Eigen::MatrixXd& cols, const FactorSet& factors,
                          double tol, int max_sweeps) {
  const int n = static_cast<int>(cols.rows());
  const int F = factors.n_factors();
  if (F == 0) return;
  for (int f = 0; f < F; ++f) {
    if (static_cast<int>(factors.codes[static_cast<size_t>(f)].size()) != n)
      throw_numeric(errc::domain_error, "factor codes do not match row count");
    if (factors.n_levels[static_cast<size_t>(f)] <= 0)
      throw_numeric(errc::domain_error, "factor with no levels");
  }

  std::vector<Eigen::VectorXd> sums;
  std::vector<Eigen::VectorXd> counts(static_cast<size_t>(F));
  for (int f = 0; f < F; ++f) {
    counts[static_cast<size_t>(f)] =
        Eigen::VectorXd::Zero(factors.n_levels[static_cast<size_t>(f)]);
    for (int i = 0; i < n; ++i)
      counts[static_cast<size_t>(f)][factors.codes[static_cast<size_t>(f)][static_cast<size_t>(i)]] += 1.0;
  }

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (int f = 0; f < F; ++f) {
      const auto& code = factors.codes[static_cast<size_t>(f)];
      const int L = factors.n_levels[static_cast<size_t>(f)];
      Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(L, cols.cols());
      for (int i = 0; i < n; ++i) mean.row(code[static_cast<size_t>(i)]) += cols.row(i);
      for (int l = 0; l < L; ++l) {
        double c = counts[static_cast<size_t>(f)][l];
        if (c > 0) mean.row(l) /= c;
      }
      double factor_max = mean.cwiseAbs().maxCoeff();
      max_change = std::max(max_change, factor_max);
      for (int i = 0; i < n; ++i) cols.row(i) -= mean.row(code[static_cast<size_t>(i)]);
    }
    if (max_change < tol || F == 1) return;
  }
  throw_numeric(errc::non_convergence,
                "fixed-effect absorption did not converge in " +
                    std::to_string(max_sweeps) + " sweeps");
}

Eigen::MatrixXd dummy_design(const FactorSet& factors, int n_rows) {
  int cols = 1;
  for (int f = 0; f < factors.n_factors(); ++f)
    cols += factors.n_levels[static_cast<size_t>(f)] - 1;
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n_rows, cols);
  D.col(0).setOnes();
  int at = 1;
  for (int f = 0; f < factors.n_factors(); ++f) {
    const auto& code = factors.codes[static_cast<size_t>(f)];
    for (int i = 0; i < n_rows; ++i) {
      int l = code[static_cast<size_t>(i)];
      if (l > 0) D(i, at + l - 1) = 1.0;
    }
    at += factors.n_levels[static_cast<size_t>(f)] - 1;
  }
  return D;
}

}  // namespace df
