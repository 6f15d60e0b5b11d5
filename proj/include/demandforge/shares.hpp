#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "demandforge/panel.hpp"

namespace df {

enum class ModelKind { logit, nested_logit, cenl };

ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind m);

// Utility coefficients. For CENL the price coefficient multiplies ln(price)
// and all share formulas apply to revenue shares.
struct UtilityParams {
  double alpha = 0.0;
  double sigma = 0.0;
  double beta1 = 0.0;  // image score
  double beta2 = 0.0;  // cumulative advertising
  ModelKind model = ModelKind::nested_logit;
  // Extra named linear-utility coefficients (fixed effects and controls are
  // carried inside mean utilities; this map exists for configs that spell
  // them out explicitly).
  std::map<std::string, double> gamma;

  // 1 - sigma with sigma clamped below 1 - 1e-6 for evaluation.
  double lambda() const;
  void validate() const;
};

// One market's inputs for share/elasticity/equilibrium math.
struct MarketSnapshot {
  std::vector<int> product;  // dataset product indexes (or arbitrary tags)
  Eigen::VectorXd price;
  Eigen::VectorXd delta;  // mean utilities
  std::vector<int> group;
  std::vector<int> firm;
  double market_size = 1.0;  // M_m, or expenditure size under CENL
  ModelKind model = ModelKind::nested_logit;

  int size() const { return static_cast<int>(delta.size()); }
  void check() const;
};

struct ShareResult {
  Eigen::VectorXd within;       // s_{j|g}
  Eigen::VectorXd group_share;  // s_{g(j)}, repeated per product
  Eigen::VectorXd share;        // s_j = s_{j|g} * s_g
  double outside = 1.0;         // s_0
};

// Nested-logit share evaluation with per-nest max subtraction. sigma = 0
// collapses to multinomial logit; under CENL the same algebra yields revenue
// shares.
ShareResult shares_from_utilities(const MarketSnapshot& snap,
                                  const UtilityParams& params);

// delta_j = ln(s_j / s_0) - sigma * ln(s_{j|g}); inverse of the above.
Eigen::VectorXd invert_shares(const Eigen::VectorXd& share,
                              const Eigen::VectorXd& within, double outside,
                              double sigma);

// Demand per unit of market size: volume shares for logit/nested logit,
// revenue-share/price for CENL (so that market_size * d_j is quantity).
Eigen::VectorXd demand_vector(const MarketSnapshot& snap,
                              const UtilityParams& params);

// J x J matrix with (j,k) entry d d_j / d p_k, where d is demand_vector.
// CENL entries include the chain rule through ln(price) and the own-price
// term from the 1/p_j factor.
Eigen::MatrixXd share_price_jacobian(const MarketSnapshot& snap,
                                     const UtilityParams& params);

// Derivative of the outside share with respect to each price.
Eigen::VectorXd outside_share_price_gradient(const MarketSnapshot& snap,
                                             const UtilityParams& params);

// Snapshot for one dataset market with mean utilities recovered from observed
// shares at the given sigma. Zero-volume observations are skipped; their
// dataset indexes are returned through skipped if non-null.
MarketSnapshot snapshot_for_market(const PanelDataset& ds, int market,
                                   double sigma, ModelKind model,
                                   std::vector<int>* obs_index = nullptr);

}  // namespace df
