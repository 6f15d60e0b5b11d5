#include "demandforge/counterfactual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "demandforge/errors.hpp"
#include "demandforge/threading.hpp"

namespace df {

namespace {

// Counterfactual image score per (firm, period), in the dataset's scaled
// units. Only the target firm's series changes.
std::vector<std::vector<double>> cf_firm_scores(const PanelDataset& ds,
                                                const Scenario& sc) {
  if (!ds.has_scores)
    throw_numeric(errc::domain_error, "dataset has no attached scores");
  std::vector<std::vector<double>> out = ds.firm_imgscore;
  if (sc.image.kind == ImageRule::Kind::identity) return out;

  int target = ds.find_firm(sc.target_firm);
  if (target < 0)
    throw_data(errc::bad_config, "scenario target firm '" + sc.target_firm +
                                     "' not in dataset");
  const size_t T = ds.periods.size();
  switch (sc.image.kind) {
    case ImageRule::Kind::mean_of_rivals: {
      if (ds.firms.size() < 2)
        throw_data(errc::bad_config, "mean-of-rivals needs at least two firms");
      for (size_t t = 0; t < T; ++t) {
        double acc = 0.0;
        int n = 0;
        for (size_t f = 0; f < ds.firms.size(); ++f) {
          if (static_cast<int>(f) == target) continue;
          acc += ds.firm_imgscore[f][t];
          ++n;
        }
        out[static_cast<size_t>(target)][t] = acc / n;
      }
      break;
    }
    case ImageRule::Kind::rival: {
      int rival = ds.find_firm(sc.image.rival_firm);
      if (rival < 0 || rival == target)
        throw_data(errc::bad_config,
                   "scenario rival firm '" + sc.image.rival_firm + "' invalid");
      out[static_cast<size_t>(target)] = ds.firm_imgscore[static_cast<size_t>(rival)];
      break;
    }
    case ImageRule::Kind::custom: {
      for (size_t t = 0; t < T; ++t) {
        auto it = sc.image.series.find(ds.periods[t]);
        if (it == sc.image.series.end())
          throw_data(errc::bad_config,
                     "custom image series missing period " +
                         std::to_string(ds.periods[t]));
        out[static_cast<size_t>(target)][t] = it->second / ds.image_divisor;
      }
      break;
    }
    case ImageRule::Kind::identity:
      break;
  }
  return out;
}

}  // namespace

CfUtility cf_mean_utility(const PanelDataset& ds, const DemandEstimate& est,
                          const Scenario& sc) {
  if (est.residuals.size() == 0)
    throw_numeric(errc::missing_residual,
                  "estimate carries no residuals; counterfactual utilities "
                  "need a fitted demand system");
  if (!ds.has_shares)
    throw_numeric(errc::domain_error, "dataset has no computed shares");

  int target = sc.target_firm.empty() ? -1 : ds.find_firm(sc.target_firm);
  if (!sc.target_firm.empty() && target < 0)
    throw_data(errc::bad_config,
               "scenario target firm '" + sc.target_firm + "' not in dataset");
  auto cf_scores = cf_firm_scores(ds, sc);

  const bool cenl = est.model == ModelKind::cenl;
  const double sigma = est.sigma();
  const double b1 = est.beta1();
  const double b2 = est.beta2();

  CfUtility out;
  for (size_t mi = 0; mi < ds.markets.size(); ++mi) {
    const auto& m = ds.markets[mi];
    for (int i = m.obs_begin; i < m.obs_end; ++i) {
      const auto& o = ds.observations[static_cast<size_t>(i)];
      if (o.volume <= 0.0) continue;
      const auto& meta = ds.products[static_cast<size_t>(o.product)];
      double s = cenl ? ds.rev_share[static_cast<size_t>(i)]
                      : ds.share[static_cast<size_t>(i)];
      double s0 = cenl ? ds.rev_outside_share[mi] : ds.outside_share[mi];
      double within = cenl ? ds.rev_within_share[static_cast<size_t>(i)]
                           : ds.within_share[static_cast<size_t>(i)];
      double d_hat = std::log(s / s0) - sigma * std::log(within);
      double d_cf = d_hat;
      size_t f = static_cast<size_t>(meta.firm);
      size_t t = static_cast<size_t>(o.period_ix);
      d_cf += b1 * (cf_scores[f][t] - ds.firm_imgscore[f][t]);
      if (meta.firm == target && sc.ad_multiplier != 0.0)
        d_cf += b2 * sc.ad_multiplier * ds.cumadv[static_cast<size_t>(i)];
      out.obs.push_back(i);
      out.delta_hat.conservativeResize(out.delta_hat.size() + 1);
      out.delta_hat[out.delta_hat.size() - 1] = d_hat;
      out.delta_cf.conservativeResize(out.delta_cf.size() + 1);
      out.delta_cf[out.delta_cf.size() - 1] = d_cf;
    }
  }
  return out;
}

CounterfactualReport simulate(const PanelDataset& ds, const DemandEstimate& est,
                              const Scenario& sc,
                              const BertrandOptions& bertrand_opts) {
  CfUtility cf = cf_mean_utility(ds, est, sc);
  UtilityParams params = est.params();
  const bool cenl = est.model == ModelKind::cenl;
  const bool bertrand = sc.pricing == Scenario::Pricing::bertrand;

  // map dataset obs -> row in cf
  std::vector<int> cf_row(ds.observations.size(), -1);
  for (size_t r = 0; r < cf.obs.size(); ++r)
    cf_row[static_cast<size_t>(cf.obs[r])] = static_cast<int>(r);

  const size_t F = ds.firms.size();
  const size_t T = ds.periods.size();
  struct Slot {
    std::vector<double> vol_obs, vol_sim, rev_obs, rev_sim;  // per firm
    std::vector<double> price_obs_sum, price_cf_sum;
    std::vector<long long> price_n;
  };
  std::vector<Slot> slots(ds.markets.size());

  parallel_for(ds.markets.size(), [&](std::size_t mi) {
    const auto& m = ds.markets[mi];
    Slot& sl = slots[mi];
    sl.vol_obs.assign(F, 0.0);
    sl.vol_sim.assign(F, 0.0);
    sl.rev_obs.assign(F, 0.0);
    sl.rev_sim.assign(F, 0.0);
    sl.price_obs_sum.assign(F, 0.0);
    sl.price_cf_sum.assign(F, 0.0);
    sl.price_n.assign(F, 0);

    // snapshot of the market's usable rows with counterfactual utilities
    MarketSnapshot snap;
    snap.model = est.model;
    snap.market_size = cenl ? m.expenditure_size : m.size();
    std::vector<int> rows;
    for (int i = m.obs_begin; i < m.obs_end; ++i) {
      const auto& o = ds.observations[static_cast<size_t>(i)];
      size_t f = static_cast<size_t>(ds.products[static_cast<size_t>(o.product)].firm);
      sl.vol_obs[f] += o.volume;
      sl.rev_obs[f] += o.volume * o.price;
      int r = cf_row[static_cast<size_t>(i)];
      if (r < 0) continue;
      rows.push_back(r);
      snap.product.push_back(o.product);
      snap.group.push_back(ds.products[static_cast<size_t>(o.product)].group);
      snap.firm.push_back(ds.products[static_cast<size_t>(o.product)].firm);
      snap.price.conservativeResize(snap.price.size() + 1);
      snap.price[snap.price.size() - 1] = o.price;
    }
    const int J = static_cast<int>(rows.size());
    if (J == 0) return;
    snap.delta.resize(J);
    Eigen::VectorXd delta_cf(J), delta_hat(J);
    for (int j = 0; j < J; ++j) {
      delta_hat[j] = cf.delta_hat[rows[static_cast<size_t>(j)]];
      delta_cf[j] = cf.delta_cf[rows[static_cast<size_t>(j)]];
    }
    snap.delta = delta_hat;

    Eigen::VectorXd price_cf = snap.price;
    ShareResult sim;
    if (bertrand) {
      Eigen::MatrixXd omega = ownership_matrix(snap.firm);
      CostVector costs = recover_costs(snap, params, omega);
      BertrandSolution sol =
          solve_bertrand(snap, params, costs.mc, delta_cf, omega, bertrand_opts);
      price_cf = sol.price;
      sim = sol.shares;
    } else {
      MarketSnapshot cf_snap = snap;
      cf_snap.delta = delta_cf;
      sim = shares_from_utilities(cf_snap, params);
    }

    for (int j = 0; j < J; ++j) {
      size_t f = static_cast<size_t>(snap.firm[static_cast<size_t>(j)]);
      double vol, rev;
      if (cenl) {
        rev = sim.share[j] * snap.market_size;
        vol = rev / price_cf[j];
      } else {
        vol = sim.share[j] * snap.market_size;
        rev = vol * price_cf[j];
      }
      sl.vol_sim[f] += vol;
      sl.rev_sim[f] += rev;
      sl.price_obs_sum[f] += snap.price[j];
      sl.price_cf_sum[f] += price_cf[j];
      sl.price_n[f] += 1;
    }
  });

  CounterfactualReport rep;
  rep.scenario = sc.name;

  std::vector<std::vector<double>> per_ft(4, std::vector<double>(F * T, 0.0));
  std::vector<double> price_obs_sum(F, 0.0), price_cf_sum(F, 0.0);
  std::vector<long long> price_n(F, 0);
  for (size_t mi = 0; mi < ds.markets.size(); ++mi) {
    const auto& m = ds.markets[mi];
    const Slot& sl = slots[mi];
    if (sl.vol_obs.empty()) continue;
    for (size_t f = 0; f < F; ++f) {
      size_t key = f * T + static_cast<size_t>(m.period_ix);
      per_ft[0][key] += sl.vol_obs[f];
      per_ft[1][key] += sl.vol_sim[f];
      per_ft[2][key] += sl.rev_obs[f];
      per_ft[3][key] += sl.rev_sim[f];
      price_obs_sum[f] += sl.price_obs_sum[f];
      price_cf_sum[f] += sl.price_cf_sum[f];
      price_n[f] += sl.price_n[f];
    }
  }

  auto gap = [](double obs, double sim) {
    return obs != 0.0 ? 100.0 * (obs - sim) / obs : 0.0;
  };

  for (size_t f = 0; f < F; ++f) {
    FirmAggregate agg;
    agg.firm = ds.firms[f];
    for (size_t t = 0; t < T; ++t) {
      agg.vol_obs += per_ft[0][f * T + t];
      agg.vol_sim += per_ft[1][f * T + t];
      agg.rev_obs += per_ft[2][f * T + t];
      agg.rev_sim += per_ft[3][f * T + t];
    }
    agg.vol_gap_pct = gap(agg.vol_obs, agg.vol_sim);
    agg.rev_gap_pct = gap(agg.rev_obs, agg.rev_sim);
    rep.firms.push_back(agg);

    if (bertrand && price_n[f] > 0) {
      FirmPriceRow pr;
      pr.firm = ds.firms[f];
      pr.price_obs_mean = price_obs_sum[f] / static_cast<double>(price_n[f]);
      pr.price_cf_mean = price_cf_sum[f] / static_cast<double>(price_n[f]);
      rep.prices.push_back(pr);
    }
  }
  rep.total.firm = "Total";
  for (const auto& a : rep.firms) {
    rep.total.vol_obs += a.vol_obs;
    rep.total.vol_sim += a.vol_sim;
    rep.total.rev_obs += a.rev_obs;
    rep.total.rev_sim += a.rev_sim;
  }
  rep.total.vol_gap_pct = gap(rep.total.vol_obs, rep.total.vol_sim);
  rep.total.rev_gap_pct = gap(rep.total.rev_obs, rep.total.rev_sim);

  for (size_t t = 0; t < T; ++t) {
    double inside_obs = 0, inside_sim = 0;
    for (size_t f = 0; f < F; ++f) {
      inside_obs += per_ft[0][f * T + t];
      inside_sim += per_ft[1][f * T + t];
    }
    for (size_t f = 0; f < F; ++f) {
      MonthlyRow row;
      row.period = ds.periods[t];
      row.firm = ds.firms[f];
      row.vol_obs = per_ft[0][f * T + t];
      row.vol_sim = per_ft[1][f * T + t];
      row.rev_obs = per_ft[2][f * T + t];
      row.rev_sim = per_ft[3][f * T + t];
      row.share_obs = inside_obs > 0 ? row.vol_obs / inside_obs : 0.0;
      row.share_sim = inside_sim > 0 ? row.vol_sim / inside_sim : 0.0;
      rep.monthly.push_back(row);
    }
  }
  return rep;
}

TauResult ad_equivalence_tau(const PanelDataset& ds, const DemandEstimate& est,
                             const Scenario& scenario,
                             std::optional<double> target_revenue,
                             const TauOptions& opts) {
  if (scenario.target_firm.empty())
    throw_data(errc::bad_config, "tau search needs a scenario target firm");
  int target = ds.find_firm(scenario.target_firm);
  if (target < 0)
    throw_data(errc::bad_config, "scenario target firm '" +
                                     scenario.target_firm + "' not in dataset");

  auto in_window = [&](long long period) {
    if (opts.from_period && period < *opts.from_period) return false;
    if (opts.to_period && period > *opts.to_period) return false;
    return true;
  };

  auto revenue_at = [&](double tau) {
    Scenario sc = scenario;
    sc.ad_multiplier = tau;
    CounterfactualReport rep = simulate(ds, est, sc);
    double rev = 0.0;
    for (const auto& row : rep.monthly)
      if (row.firm == scenario.target_firm && in_window(row.period))
        rev += row.rev_sim;
    return rev;
  };

  double target_rev;
  if (target_revenue) {
    target_rev = *target_revenue;
  } else {
    target_rev = 0.0;
    for (size_t mi = 0; mi < ds.markets.size(); ++mi) {
      const auto& m = ds.markets[mi];
      if (!in_window(ds.periods[static_cast<size_t>(m.period_ix)])) continue;
      for (int i = m.obs_begin; i < m.obs_end; ++i) {
        const auto& o = ds.observations[static_cast<size_t>(i)];
        if (ds.products[static_cast<size_t>(o.product)].firm == target)
          target_rev += o.volume * o.price;
      }
    }
  }
  if (!(target_rev > 0.0))
    throw_numeric(errc::domain_error, "target revenue must be positive");

  TauResult out;
  out.target_revenue = target_rev;

  // revenue curve for plotting, and a monotonicity check over the grid
  double prev = -std::numeric_limits<double>::infinity();
  for (double tau = 0.0; tau <= opts.grid_max + 1e-12; tau += opts.grid_step) {
    double rev = revenue_at(tau);
    out.grid.emplace_back(tau, rev);
    if (rev < prev * (1.0 - 1e-12))
      throw_numeric(errc::bracket_failure,
                    "simulated revenue is not monotone in tau on the grid");
    prev = rev;
  }

  double lo = 0.0, hi = opts.tau_max;
  double rev_lo = revenue_at(lo);
  if (rev_lo >= target_rev) {
    out.tau_star = 0.0;
    return out;
  }
  double rev_hi = revenue_at(hi);
  if (rev_hi < target_rev)
    throw_numeric(errc::bracket_failure,
                  "revenue at tau_max " + std::to_string(hi) + " is " +
                      std::to_string(rev_hi) + ", below the target " +
                      std::to_string(target_rev));

  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    double rev = revenue_at(mid);
    if (std::abs(rev - target_rev) / target_rev < opts.rel_tol) {
      out.tau_star = mid;
      return out;
    }
    if (rev < target_rev)
      lo = mid;
    else
      hi = mid;
  }
  out.tau_star = 0.5 * (lo + hi);
  double final_rev = revenue_at(out.tau_star);
  if (std::abs(final_rev - target_rev) / target_rev > 1e-6)
    throw_numeric(errc::no_convergence, "tau bisection did not converge");
  return out;
}

}  // namespace df
