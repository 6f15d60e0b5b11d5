#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "demandforge/estimator.hpp"
#include "demandforge/panel.hpp"
#include "demandforge/shares.hpp"

namespace df {

struct ElasticityMatrix {
  int market = -1;
  std::vector<int> product;
  Eigen::MatrixXd eps;  // (j,k): % change in demand for j per % change in p_k
};

// Own/cross price elasticities. Nested logit:
//   eps_jk = alpha p_k (s_k/s_j) (D1/(1-sigma) - sigma/(1-sigma) s_{j|g} D2 - s_j)
// CENL uses revenue shares, drops the p_k factor (log price), and subtracts
// D1 for the quantity conversion.
ElasticityMatrix elasticities(const MarketSnapshot& snap,
                              const UtilityParams& params);

struct GroupMeanElasticities {
  std::vector<std::string> group_names;  // dataset groups, then "All"
  // NaN marks cells with no contributing pairs.
  std::vector<double> own;
  std::vector<double> cross_same;
  std::vector<double> cross_other;
  std::vector<long long> n_own, n_cross_same, n_cross_other;
};

// Per-observation own/cross elasticities averaged by product group, with an
// overall column. Cross entries average over same-group and other-group
// partners separately. share_weighted switches the averaging weights from
// uniform to observation shares.
GroupMeanElasticities group_mean_elasticities(const PanelDataset& ds,
                                              const DemandEstimate& est,
                                              bool share_weighted = false);

}  // namespace df
