#pragma once

#include <Eigen/Dense>
#include <vector>

#include "demandforge/shares.hpp"

namespace df {

// Omega(j,k) = 1 iff products j and k belong to the same firm.
Eigen::MatrixXd ownership_matrix(const std::vector<int>& firm);

struct CostVector {
  Eigen::VectorXd mc;
  std::vector<int> product;
  std::vector<std::string> warnings;  // negative recovered costs
};

// Marginal costs from the multiproduct Bertrand first-order conditions at the
// snapshot's prices and utilities: mc = p + (Omega o grad_p d)^{-1} d.
CostVector recover_costs(const MarketSnapshot& snap, const UtilityParams& params,
                         const Eigen::MatrixXd& omega);

struct BertrandOptions {
  double tol = 1e-10;
  int max_iter = 10000;
  double damping = 1.0;  // halved whenever the step norm grows
};

struct BertrandSolution {
  Eigen::VectorXd price;
  ShareResult shares;
  int iterations = 0;
  double step_norm = 0.0;
  double foc_residual = 0.0;
};

// Solves p = mc - (Omega o grad_p d(p))^{-1} d(p) by damped fixed-point
// iteration. delta_cf holds the counterfactual mean utilities evaluated at
// the snapshot's reference prices; the price terms are re-based internally as
// prices move.
BertrandSolution solve_bertrand(const MarketSnapshot& ref,
                                const UtilityParams& params,
                                const Eigen::VectorXd& mc,
                                const Eigen::VectorXd& delta_cf,
                                const Eigen::MatrixXd& omega,
                                const BertrandOptions& opts = {});

// The regulated regime: prices stay at observed values; only utilities move.
Eigen::VectorXd regulated_prices(const Eigen::VectorXd& observed_prices);

// Max-norm of p - mc + (Omega o grad d)^{-1} d at the given prices/utilities.
double foc_residual(const MarketSnapshot& ref, const UtilityParams& params,
                    const Eigen::VectorXd& mc, const Eigen::VectorXd& delta_cf,
                    const Eigen::MatrixXd& omega, const Eigen::VectorXd& price);

}  // namespace df
