#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "demandforge/fixed_effects.hpp"
#include "demandforge/panel.hpp"
#include "demandforge/shares.hpp"

namespace df {

enum class FeScheme { product_time_region, product_market };

FeScheme fe_scheme_from_string(const std::string& s);
std::string to_string(FeScheme f);

struct DemandSpec {
  ModelKind model = ModelKind::nested_logit;
  FeScheme fe = FeScheme::product_time_region;
  bool cold_month_interactions = true;
  // cumadv is exogenous by default; when endogenous it is instrumented with
  // the rival-entry count.
  bool adv_endogenous = false;
  // Named instrument constructors. Recognized: hausman_price, rival_count,
  // rival_entry.
  std::vector<std::string> instruments = {"hausman_price", "rival_count"};

  int max_fe_sweeps = 500;
  double fe_tol = 1e-10;

  // clustered: two-step efficient GMM with a market-clustered weight matrix.
  // instrument_gram: W = (Z'Z)^{-1}, which reproduces 2SLS exactly.
  enum class Weighting { clustered, instrument_gram };
  Weighting weighting = Weighting::clustered;
};

// Per-observation instrument columns. valid[i] == 0 marks rows where the
// Hausman average does not exist (product observed in a single region).
struct InstrumentSet {
  std::vector<std::string> names;
  Eigen::MatrixXd columns;  // n_obs x n_instruments
  std::vector<uint8_t> valid;
  int n_hausman_missing = 0;
};

InstrumentSet build_instruments(const PanelDataset& ds, const DemandSpec& spec);

// Assembled estimation system after row filtering (zero shares, undefined
// Hausman rows) but before fixed-effect absorption.
struct RegressionFrame {
  std::vector<int> obs;      // dataset observation indexes, frame row order
  std::vector<int> cluster;  // market index per row
  int n_clusters = 0;
  Eigen::VectorXd y;
  Eigen::MatrixXd X;  // endogenous columns first, then exogenous
  Eigen::MatrixXd Z;  // excluded instruments first, then exogenous
  std::vector<std::string> x_names;
  std::vector<std::string> z_names;  // excluded instrument names only
  int n_endog = 0;
  int n_excluded = 0;
  FactorSet fe;
  int dropped_zero_share = 0;
  int dropped_hausman = 0;
};

RegressionFrame build_regression_frame(const PanelDataset& ds,
                                       const DemandSpec& spec);

// Low-level solvers over assembled (already absorbed) systems.
Eigen::VectorXd ols_coefficients(const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd& y);
Eigen::VectorXd tsls_coefficients(const Eigen::MatrixXd& X,
                                  const Eigen::MatrixXd& Z,
                                  const Eigen::VectorXd& y);

struct GmmResult {
  Eigen::VectorXd coef;
  Eigen::MatrixXd vcov;  // cluster-robust, C/(C-1) correction
  Eigen::VectorXd se;
  Eigen::VectorXd residuals;
  double foc = 0.0;  // relative norm of the weighted moment conditions
};

// Step 1 = 2SLS; step 2 reweights with the inverse clustered moment
// covariance of the step-1 residuals.
GmmResult two_step_gmm(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                       const Eigen::VectorXd& y, const std::vector<int>& cluster,
                       DemandSpec::Weighting weighting =
                           DemandSpec::Weighting::clustered);

struct DemandEstimate {
  ModelKind model = ModelKind::nested_logit;
  std::vector<std::string> names;       // alpha, sigma, beta1, beta2 (subset)
  std::vector<std::string> regressors;  // price, ln_within_share, ...
  Eigen::VectorXd coef;
  Eigen::MatrixXd vcov;  // cluster-robust
  Eigen::VectorXd se;
  std::vector<std::string> endogenous;  // regressor names
  std::vector<double> sw_f;             // per endogenous regressor
  Eigen::VectorXd residuals;            // xi-hat on estimation rows
  std::vector<int> obs;                 // dataset row per estimation row
  int n_obs = 0;
  int n_clusters = 0;
  int dropped_zero_share = 0;
  int dropped_hausman = 0;
  double gmm_foc = 0.0;
  std::vector<std::string> warnings;

  double coefficient(const std::string& name) const;
  bool has(const std::string& name) const;
  double alpha() const { return coefficient("alpha"); }
  double sigma() const { return has("sigma") ? coefficient("sigma") : 0.0; }
  double beta1() const { return coefficient("beta1"); }
  double beta2() const { return coefficient("beta2"); }
  double se_of(const std::string& name) const;

  UtilityParams params() const;
};

// Two-step GMM with market-clustered moments (step 1 = 2SLS). Requires a
// dataset that carries computed shares and attached scores.
DemandEstimate estimate(const PanelDataset& ds, const DemandSpec& spec);

struct FirstStageColumn {
  std::string endogenous;
  std::vector<std::string> regressor;  // excluded IVs then exogenous
  Eigen::VectorXd coef;
  Eigen::VectorXd se;
};

struct FirstStageReport {
  std::vector<FirstStageColumn> columns;
  int n_obs = 0;
  int n_clusters = 0;
};

// OLS of each endogenous regressor on all exogenous regressors plus the
// excluded instruments, after absorption; cluster-robust standard errors.
FirstStageReport first_stage_report(const PanelDataset& ds,
                                    const DemandSpec& spec);

}  // namespace df
