#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "demandforge/kernels.hpp"
#include "demandforge/panel.hpp"
#include "demandforge/shares.hpp"

namespace df {

// Ground-truth configuration for the synthetic panel generator. Defaults
// produce 18,960 rows (30 products, 6 regions, 113 months, 4 groups, with
// staggered national entry) so recovery tests run at realistic scale.
struct SynthConfig {
  UtilityParams params{-0.578, 0.819, 0.177, 0.283, ModelKind::nested_logit, {}};
  int n_products = 30;
  int n_firms = 4;
  int n_groups = 4;
  int n_regions = 6;
  int n_periods = 113;
  std::uint64_t seed = 1;

  // demand shock and its loading into prices
  double xi_sd = 0.25;
  double price_endogeneity = 0.25;

  // product cost processes, common across regions
  double cost_base_lo = 0.6;
  double cost_base_hi = 1.1;
  double cost_ar = 0.8;
  double cost_sd = 0.09;
  double region_cost_sd = 0.03;

  // firm-level news intensities; the target firm starts above the rivals'
  // mean and trends further up in the second half of the sample
  double news_base_lo = 1.0;
  double news_base_hi = 6.0;
  int target_firm = 1;
  double target_base_boost = 1.2;  // multiple of the rival-mean base intensity
  double target_image_uplift = 1.0;

  // brand-level monthly ad spend (currency units); spend rises for a few
  // months after rival product launches
  double adv_scale_lo = 2e8;
  double adv_scale_hi = 2e9;
  double adv_off_prob = 0.3;  // campaign-off months
  double adv_entry_response = 0.8;

  // utility heterogeneity
  double product_fe_sd = 0.3;
  double group_fe_sd = 0.2;
  double time_fe_sd = 0.1;
  double region_fe_sd = 0.1;
  double cold_season_amplitude = 0.8;

  double outside_share_target = 0.65;
  double size_unit = 10.0;

  // score construction mirrored by the estimator
  KernelSpec image_kernel{KernelKind::geometric, 0.4, 6};
  KernelSpec adv_kernel{KernelKind::geometric, 0.4, 6};
  double image_divisor = 100.0;
  double adv_divisor = 1e10;

  // national entry delays; empty means the default staggered schedule.
  // Entering products get a utility boost so entry moves within-group shares.
  std::vector<int> entry_delays;
  double entrant_fe_boost = 0.5;
  // per-product region exclusions (-1 = sold everywhere); empty means the
  // default assortment pattern. Persistent gaps vary the rival count across
  // regions, which is what identifies the nesting parameter.
  std::vector<int> region_gap;
};

// Draws a panel whose shares are exact model shares: xi loads into prices
// (endogeneity), product costs co-move across regions (Hausman relevance),
// and entry is staggered nationally (share/entry instrument relevance).
PanelDataset generate(const SynthConfig& cfg);

struct GridEquilibrium {
  Eigen::VectorXd price;
  int sweeps = 0;
};

// Grid-search Bertrand oracle for one- and two-product markets: coordinate
// best-response iteration with each response found by scanning [lo, hi] in
// grid_step increments. Test oracle only.
GridEquilibrium brute_force_bertrand(const Eigen::VectorXd& mc,
                                     const UtilityParams& params,
                                     const MarketSnapshot& ref,
                                     const Eigen::VectorXd& delta_cf,
                                     const Eigen::MatrixXd& omega, double lo,
                                     double hi, double grid_step);

}  // namespace df
