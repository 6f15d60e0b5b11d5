#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace df {

// A set of categorical absorption factors over n rows. codes[f][i] is row i's
// level in factor f, in [0, n_levels[f]).
struct FactorSet {
  std::vector<std::string> names;
  std::vector<std::vector<int>> codes;
  std::vector<int> n_levels;

  int n_factors() const { return static_cast<int>(codes.size()); }
};

// Removes factor means from every column in place by alternating within-group
// demeaning, iterated until the largest per-sweep change falls below tol.
// Equivalent to partialling out the full dummy design (Frisch-Waugh).
void absorb_fixed_effects(Eigen::MatrixXd& cols, const FactorSet& factors,
                          double tol = 1e-10, int max_sweeps = 500);

// Dense dummy design for the same factors: intercept plus (levels - 1)
// columns per factor (first level dropped). Used by tests and reports.
Eigen::MatrixXd dummy_design(const FactorSet& factors, int n_rows);

}  // namespace df
