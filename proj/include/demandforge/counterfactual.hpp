#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "demandforge/equilibrium.hpp"
#include "demandforge/estimator.hpp"
#include "demandforge/panel.hpp"

namespace df {

struct ImageRule {
  enum class Kind { identity, mean_of_rivals, rival, custom };
  Kind kind = Kind::identity;
  std::string rival_firm;                // for Kind::rival
  std::map<long long, double> series;    // for Kind::custom, raw (undivided) units
};

struct Scenario {
  std::string name = "scenario";
  std::string target_firm;
  ImageRule image;
  double ad_multiplier = 0.0;  // tau, applied to the target firm's cumadv
  enum class Pricing { regulated, bertrand };
  Pricing pricing = Pricing::regulated;
};

// Counterfactual mean utilities per usable (positive-volume, estimated)
// observation. delta_hat is recovered from observed shares at the estimated
// sigma, so it carries the fitted effects and residual exactly; only the
// image term (and the tau-scaled advertising term) moves.
struct CfUtility {
  std::vector<int> obs;       // dataset observation indexes
  Eigen::VectorXd delta_hat;  // fitted mean utility
  Eigen::VectorXd delta_cf;   // counterfactual mean utility
};

CfUtility cf_mean_utility(const PanelDataset& ds, const DemandEstimate& est,
                          const Scenario& scenario);

struct FirmAggregate {
  std::string firm;
  double vol_obs = 0, vol_sim = 0, rev_obs = 0, rev_sim = 0;
  double vol_gap_pct = 0, rev_gap_pct = 0;  // (observed - simulated)/observed
};

struct MonthlyRow {
  long long period = 0;
  std::string firm;
  double vol_obs = 0, vol_sim = 0, rev_obs = 0, rev_sim = 0;
  double share_obs = 0, share_sim = 0;  // firm share of inside volume
};

struct FirmPriceRow {
  std::string firm;
  double price_obs_mean = 0, price_cf_mean = 0;
};

struct CounterfactualReport {
  std::string scenario;
  std::vector<FirmAggregate> firms;
  FirmAggregate total;
  std::vector<MonthlyRow> monthly;
  std::vector<FirmPriceRow> prices;  // populated under Bertrand pricing
};

CounterfactualReport simulate(const PanelDataset& ds, const DemandEstimate& est,
                              const Scenario& scenario,
                              const BertrandOptions& bertrand_opts = {});

struct TauOptions {
  double tau_max = 2.0;
  double rel_tol = 1e-8;
  double grid_step = 0.2;
  double grid_max = 1.0;
  // optional period window for the revenue match (inclusive labels)
  std::optional<long long> from_period;
  std::optional<long long> to_period;
};

struct TauResult {
  double tau_star = 0.0;
  double target_revenue = 0.0;
  std::vector<std::pair<double, double>> grid;  // (tau, simulated revenue)
};

// Finds tau so the target firm's simulated revenue under the scenario's image
// rule matches target_revenue (observed revenue when not given), by bisection
// over [0, tau_max]. Monotonicity over the bracket is verified.
TauResult ad_equivalence_tau(const PanelDataset& ds, const DemandEstimate& est,
                             const Scenario& scenario,
                             std::optional<double> target_revenue = {},
                             const TauOptions& opts = {});

}  // namespace df
