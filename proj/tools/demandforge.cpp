// demandforge: nested-logit demand estimation, elasticities, cost recovery,
// and counterfactual simulation over long-format product x market panels.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "demandforge/config.hpp"
#include "demandforge/counterfactual.hpp"
#include "demandforge/csv.hpp"
#include "demandforge/elasticity.hpp"
#include "demandforge/equilibrium.hpp"
#include "demandforge/errors.hpp"
#include "demandforge/estimator.hpp"
#include "demandforge/panel.hpp"
#include "demandforge/synth.hpp"
#include "demandforge/threading.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunContext {
  std::string command;
  std::string out_dir;
  json manifest;

  explicit RunContext(std::string cmd, std::string dir)
      : command(std::move(cmd)), out_dir(std::move(dir)) {
    manifest["command"] = command;
    manifest["inputs"] = json::object();
    manifest["outputs"] = json::object();
    if (!out_dir.empty()) fs::create_directories(out_dir);
  }

  void record_input(const std::string& label, const std::string& path) {
    manifest["inputs"][label] =
        json{{"path", path}, {"fnv1a", df::fnv1a_hex(df::read_text_file(path))}};
  }

  void record_config(const df::RunConfig& cfg) {
    manifest["config_hash"] = df::fnv1a_hex(df::dump_run_config(cfg));
  }

  std::string write(const std::string& name, const std::string& content) {
    std::string path = (fs::path(out_dir) / name).string();
    df::write_text_file(path, content);
    manifest["outputs"][name] = df::fnv1a_hex(content);
    return path;
  }

  void finish() {
    if (out_dir.empty()) return;
    std::string text = manifest.dump(2) + "\n";
    df::write_text_file((fs::path(out_dir) / "manifest.json").string(), text);
  }
};

std::string fmt(double v) { return df::format_double(v); }

std::string coefficients_csv(const df::DemandEstimate& est) {
  std::string s = "name,regressor,estimate,se,sw_f\n";
  for (size_t i = 0; i < est.names.size(); ++i) {
    s += est.names[i] + "," + est.regressors[i] + "," +
         fmt(est.coef[static_cast<Eigen::Index>(i)]) + "," +
         fmt(est.se[static_cast<Eigen::Index>(i)]) + ",";
    bool endog = i < est.endogenous.size() && est.regressors[i] == est.endogenous[i];
    if (endog) s += fmt(est.sw_f[i]);
    s += "\n";
  }
  return s;
}

json coefficients_json(const df::DemandEstimate& est) {
  json rows = json::array();
  for (size_t i = 0; i < est.names.size(); ++i) {
    json row{{"name", est.names[i]},
             {"regressor", est.regressors[i]},
             {"estimate", est.coef[static_cast<Eigen::Index>(i)]},
             {"se", est.se[static_cast<Eigen::Index>(i)]}};
    if (i < est.endogenous.size() && est.regressors[i] == est.endogenous[i])
      row["sw_f"] = est.sw_f[i];
    rows.push_back(row);
  }
  return json{{"model", df::to_string(est.model)},
              {"coefficients", rows},
              {"n_obs", est.n_obs},
              {"n_clusters", est.n_clusters},
              {"dropped_zero_share", est.dropped_zero_share},
              {"dropped_hausman", est.dropped_hausman},
              {"gmm_foc", est.gmm_foc},
              {"warnings", est.warnings}};
}

std::string first_stage_csv(const df::FirstStageReport& rep) {
  std::string s = "endogenous,regressor,coef,se\n";
  for (const auto& col : rep.columns)
    for (size_t i = 0; i < col.regressor.size(); ++i)
      s += col.endogenous + "," + col.regressor[i] + "," +
           fmt(col.coef[static_cast<Eigen::Index>(i)]) + "," +
           fmt(col.se[static_cast<Eigen::Index>(i)]) + "\n";
  return s;
}

std::string elasticity_csv(const df::GroupMeanElasticities& g) {
  std::string s = "stat";
  for (const auto& name : g.group_names) s += "," + name;
  s += "\n";
  auto row = [&](const std::string& stat, const std::vector<double>& v) {
    std::string r = stat;
    for (double x : v) r += "," + (std::isnan(x) ? std::string("NaN") : fmt(x));
    return r + "\n";
  };
  s += row("own", g.own);
  s += row("cross_same", g.cross_same);
  s += row("cross_other", g.cross_other);
  return s;
}

std::string report_csv(const df::CounterfactualReport& rep) {
  std::string s = "firm,vol_obs,vol_sim,vol_gap_pct,rev_obs,rev_sim,rev_gap_pct\n";
  auto line = [&](const df::FirmAggregate& a) {
    return a.firm + "," + fmt(a.vol_obs) + "," + fmt(a.vol_sim) + "," +
           fmt(a.vol_gap_pct) + "," + fmt(a.rev_obs) + "," + fmt(a.rev_sim) +
           "," + fmt(a.rev_gap_pct) + "\n";
  };
  for (const auto& a : rep.firms) s += line(a);
  s += line(rep.total);
  return s;
}

std::string monthly_csv(const df::CounterfactualReport& rep) {
  std::string s =
      "period,firm,vol_obs,vol_sim,rev_obs,rev_sim,share_obs,share_sim\n";
  for (const auto& r : rep.monthly)
    s += std::to_string(r.period) + "," + r.firm + "," + fmt(r.vol_obs) + "," +
         fmt(r.vol_sim) + "," + fmt(r.rev_obs) + "," + fmt(r.rev_sim) + "," +
         fmt(r.share_obs) + "," + fmt(r.share_sim) + "\n";
  return s;
}

std::string prices_csv(const df::CounterfactualReport& rep) {
  std::string s = "firm,price_obs_mean,price_cf_mean\n";
  for (const auto& r : rep.prices)
    s += r.firm + "," + fmt(r.price_obs_mean) + "," + fmt(r.price_cf_mean) + "\n";
  return s;
}

struct Moments {
  long long n = 0;
  double sum = 0, sumsq = 0;
  void add(double v) {
    ++n;
    sum += v;
    sumsq += v * v;
  }
  double mean() const { return n > 0 ? sum / n : 0.0; }
  double sd() const {
    if (n < 2) return 0.0;
    double m = mean();
    return std::sqrt(std::max(0.0, (sumsq - n * m * m) / (n - 1)));
  }
};

std::string summary_csv(const df::PanelDataset& ds, bool by_firm) {
  const auto& labels = by_firm ? ds.firms : ds.groups;
  std::vector<std::map<std::string, Moments>> acc(labels.size());
  for (size_t mi = 0; mi < ds.markets.size(); ++mi) {
    const auto& m = ds.markets[mi];
    for (int i = m.obs_begin; i < m.obs_end; ++i) {
      const auto& o = ds.observations[static_cast<size_t>(i)];
      const auto& meta = ds.products[static_cast<size_t>(o.product)];
      size_t key = static_cast<size_t>(by_firm ? meta.firm : meta.group);
      auto& cell = acc[key];
      cell["volume"].add(o.volume);
      cell["revenue"].add(o.volume * o.price);
      cell["share_pct"].add(100.0 * ds.share[static_cast<size_t>(i)]);
      cell["price"].add(o.price);
      cell["cumadv"].add(ds.cumadv[static_cast<size_t>(i)]);
      cell["imgscore"].add(ds.imgscore[static_cast<size_t>(i)]);
    }
  }
  std::string s = std::string(by_firm ? "firm" : "group") +
                  ",n_obs,volume_mean,volume_sd,revenue_mean,revenue_sd,"
                  "share_pct_mean,share_pct_sd,price_mean,price_sd,"
                  "cumadv_mean,cumadv_sd,imgscore_mean,imgscore_sd\n";
  for (size_t l = 0; l < labels.size(); ++l) {
    auto& cell = acc[l];
    s += labels[l] + "," + std::to_string(cell["price"].n);
    for (const char* k : {"volume", "revenue", "share_pct", "price", "cumadv",
                          "imgscore"})
      s += "," + fmt(cell[k].mean()) + "," + fmt(cell[k].sd());
    s += "\n";
  }
  return s;
}

std::string costs_csv(const df::PanelDataset& ds, const df::DemandEstimate& est) {
  df::UtilityParams params = est.params();
  std::string s = "region_id,period,product_id,firm_id,price,mc,markup\n";
  for (size_t mi = 0; mi < ds.markets.size(); ++mi) {
    std::vector<int> obs_ix;
    df::MarketSnapshot snap = df::snapshot_for_market(
        ds, static_cast<int>(mi), params.sigma, est.model, &obs_ix);
    if (snap.size() == 0) continue;
    Eigen::MatrixXd omega = df::ownership_matrix(snap.firm);
    df::CostVector costs = df::recover_costs(snap, params, omega);
    const auto& m = ds.markets[mi];
    for (int j = 0; j < snap.size(); ++j) {
      const auto& meta = ds.products[static_cast<size_t>(snap.product[static_cast<size_t>(j)])];
      s += ds.regions[static_cast<size_t>(m.region)] + "," +
           std::to_string(ds.periods[static_cast<size_t>(m.period_ix)]) + "," +
           meta.product_id + "," + meta.firm_id + "," + fmt(snap.price[j]) +
           "," + fmt(costs.mc[j]) + "," + fmt(snap.price[j] - costs.mc[j]) + "\n";
    }
  }
  return s;
}

std::string tau_grid_csv(const df::TauResult& res) {
  std::string s = "tau,revenue_sim,revenue_target\n";
  for (const auto& [tau, rev] : res.grid)
    s += fmt(tau) + "," + fmt(rev) + "," + fmt(res.target_revenue) + "\n";
  return s;
}

int run(int argc, char** argv) {
  CLI::App app{
      "demandforge: decay-kernel scores, nested-logit/CENL demand estimation "
      "with IV/GMM, price elasticities, Bertrand cost recovery, and "
      "counterfactual simulation"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads,
                 "worker threads (default: all cores; DEMAND_FORGE_THREADS "
                 "overrides)");

  std::string config_path, panel_path, markets_path, scenario_path, out_dir;
  std::string out_panel, out_markets, model_override, pricing_override;
  double target_revenue = -1.0;

  auto add_common = [&](CLI::App* sub, bool needs_panel) {
    sub->add_option("--config", config_path, "JSON config file");
    if (needs_panel) {
      sub->add_option("--panel", panel_path, "panel CSV")->required();
      sub->add_option("--markets", markets_path, "markets CSV")->required();
    }
    sub->add_option("--out-dir", out_dir, "output directory")->required();
  };

  auto* sim = app.add_subcommand("simulate-data",
                                 "generate a synthetic panel with known "
                                 "ground-truth parameters");
  sim->add_option("--config", config_path, "JSON config file");
  sim->add_option("--out", out_panel, "panel CSV path")->required();
  sim->add_option("--markets-out", out_markets,
                  "markets CSV path (default: <out>.markets.csv)");
  sim->add_option("--out-dir", out_dir,
                  "directory for the run manifest (default: panel directory)");

  auto* scores = app.add_subcommand(
      "build-scores", "attach decay-kernel image/advertising scores");
  scores->add_option("--config", config_path, "JSON config file");
  scores->add_option("--panel", panel_path, "panel CSV")->required();
  scores->add_option("--markets", markets_path, "markets CSV")->required();
  scores->add_option("--out", out_panel, "scored CSV path")->required();
  scores->add_option("--out-dir", out_dir,
                     "directory for the run manifest (default: output directory)");

  auto* est_cmd = app.add_subcommand(
      "estimate", "two-step GMM demand estimation with clustered errors");
  add_common(est_cmd, true);
  est_cmd->add_option("--model", model_override, "logit|nested_logit|cenl");

  auto* ela = app.add_subcommand("elasticities",
                                 "own/cross price elasticity group means");
  add_common(ela, true);
  ela->add_option("--model", model_override, "logit|nested_logit|cenl");

  auto* costs_cmd = app.add_subcommand(
      "recover-costs", "marginal costs from Bertrand first-order conditions");
  add_common(costs_cmd, true);
  costs_cmd->add_option("--model", model_override, "logit|nested_logit|cenl");

  auto* cf = app.add_subcommand("counterfactual",
                                "simulate volumes/revenues under a scenario");
  add_common(cf, true);
  cf->add_option("--scenario", scenario_path, "scenario JSON")->required();
  cf->add_option("--model", model_override, "logit|nested_logit|cenl");
  cf->add_option("--pricing", pricing_override, "regulated|bertrand");

  auto* tau_cmd = app.add_subcommand(
      "ad-equivalence",
      "advertising multiplier matching the target firm's revenue");
  add_common(tau_cmd, true);
  tau_cmd->add_option("--scenario", scenario_path, "scenario JSON")->required();
  tau_cmd->add_option("--model", model_override, "logit|nested_logit|cenl");
  tau_cmd->add_option("--target-revenue", target_revenue,
                      "revenue level to match (default: observed)");

  auto* summ = app.add_subcommand("summarize",
                                  "group and firm summary statistics");
  add_common(summ, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    json err{{"error", {{"code", "UsageError"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    std::cerr << app.help() << std::flush;
    return 2;
  }
  if (threads > 0) df::set_thread_count(threads);

  df::RunConfig cfg;
  if (!config_path.empty()) cfg = df::load_run_config(config_path);
  if (!model_override.empty())
    cfg.demand.model = df::model_kind_from_string(model_override);
  if (!pricing_override.empty()) {
    if (pricing_override == "regulated")
      cfg.pricing = df::Scenario::Pricing::regulated;
    else if (pricing_override == "bertrand")
      cfg.pricing = df::Scenario::Pricing::bertrand;
    else
      df::throw_data(df::errc::bad_config, "--pricing must be regulated or bertrand");
  }

  auto load_prepared = [&](RunContext& ctx) {
    ctx.record_input("panel", panel_path);
    ctx.record_input("markets", markets_path);
    if (!config_path.empty()) ctx.record_input("config", config_path);
    ctx.record_config(cfg);
    df::PanelDataset raw = df::load_panel(panel_path, markets_path);
    return df::prepare_dataset(raw, cfg);
  };

  if (sim->parsed()) {
    if (out_markets.empty()) {
      fs::path p(out_panel);
      p.replace_extension();
      out_markets = p.string() + ".markets.csv";
    }
    std::string dir =
        out_dir.empty() ? fs::path(out_panel).parent_path().string() : out_dir;
    RunContext ctx("simulate-data", dir);
    if (!config_path.empty()) ctx.record_input("config", config_path);
    ctx.record_config(cfg);
    ctx.manifest["seed"] = cfg.synth.seed;
    df::PanelDataset ds = df::generate(cfg.synth);
    std::string panel_text = df::serialize_panel(ds);
    std::string markets_text = df::serialize_markets(ds);
    df::write_text_file(out_panel, panel_text);
    df::write_text_file(out_markets, markets_text);
    ctx.manifest["outputs"][fs::path(out_panel).filename().string()] =
        df::fnv1a_hex(panel_text);
    ctx.manifest["outputs"][fs::path(out_markets).filename().string()] =
        df::fnv1a_hex(markets_text);
    ctx.finish();
    std::cout << "wrote " << out_panel << " (" << ds.observations.size()
              << " rows) and " << out_markets << " (" << ds.markets.size()
              << " markets)\n";
    return 0;
  }

  if (scores->parsed()) {
    std::string dir =
        out_dir.empty() ? fs::path(out_panel).parent_path().string() : out_dir;
    RunContext ctx("build-scores", dir);
    ctx.record_input("panel", panel_path);
    ctx.record_input("markets", markets_path);
    if (!config_path.empty()) ctx.record_input("config", config_path);
    ctx.record_config(cfg);
    df::PanelDataset ds = df::load_panel(panel_path, markets_path);
    df::PanelDataset scored =
        df::attach_scores(ds, cfg.image_kernel, cfg.adv_kernel,
                          cfg.image_divisor, cfg.adv_divisor, cfg.window);
    std::string base = df::serialize_panel(scored);
    // append score columns to the canonical rows
    std::string out_text;
    size_t line_start = 0, row = 0;
    while (line_start < base.size()) {
      size_t nl = base.find('\n', line_start);
      std::string line = base.substr(line_start, nl - line_start);
      if (line_start == 0) {
        out_text += line + ",imgscore,cumadv\n";
      } else {
        out_text += line + "," + fmt(scored.imgscore[row]) + "," +
                    fmt(scored.cumadv[row]) + "\n";
        ++row;
      }
      line_start = nl + 1;
    }
    df::write_text_file(out_panel, out_text);
    ctx.manifest["outputs"][fs::path(out_panel).filename().string()] =
        df::fnv1a_hex(out_text);
    if (scored.dropped_strict_window > 0)
      std::cerr << "strict window dropped " << scored.dropped_strict_window
                << " observations\n";
    ctx.finish();
    std::cout << "wrote " << out_panel << "\n";
    return 0;
  }

  if (est_cmd->parsed()) {
    RunContext ctx("estimate", out_dir);
    df::PanelDataset ds = load_prepared(ctx);
    df::DemandEstimate est = df::estimate(ds, cfg.demand);
    df::FirstStageReport fs_rep = df::first_stage_report(ds, cfg.demand);
    ctx.write("coefficients.csv", coefficients_csv(est));
    ctx.write("coefficients.json", coefficients_json(est).dump(2) + "\n");
    ctx.write("first_stage.csv", first_stage_csv(fs_rep));
    ctx.finish();
    if (est.dropped_zero_share > 0)
      std::cerr << "dropped " << est.dropped_zero_share
                << " zero-share rows\n";
    if (est.dropped_hausman > 0)
      std::cerr << "dropped " << est.dropped_hausman
                << " rows without a Hausman price average\n";
    for (const auto& w : est.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << coefficients_csv(est);
    return 0;
  }

  if (ela->parsed()) {
    RunContext ctx("elasticities", out_dir);
    df::PanelDataset ds = load_prepared(ctx);
    df::DemandEstimate est = df::estimate(ds, cfg.demand);
    auto gm = df::group_mean_elasticities(ds, est, cfg.elasticity_share_weighted);
    ctx.write("coefficients.csv", coefficients_csv(est));
    ctx.write("elasticities.csv", elasticity_csv(gm));
    ctx.finish();
    std::cout << elasticity_csv(gm);
    return 0;
  }

  if (costs_cmd->parsed()) {
    RunContext ctx("recover-costs", out_dir);
    df::PanelDataset ds = load_prepared(ctx);
    df::DemandEstimate est = df::estimate(ds, cfg.demand);
    ctx.write("coefficients.csv", coefficients_csv(est));
    ctx.write("costs.csv", costs_csv(ds, est));
    ctx.finish();
    std::cout << "wrote costs.csv\n";
    return 0;
  }

  if (cf->parsed()) {
    RunContext ctx("counterfactual", out_dir);
    df::PanelDataset ds = load_prepared(ctx);
    ctx.record_input("scenario", scenario_path);
    df::Scenario sc = df::load_scenario(scenario_path);
    if (!pricing_override.empty()) sc.pricing = cfg.pricing;
    df::DemandEstimate est = df::estimate(ds, cfg.demand);
    df::CounterfactualReport rep = df::simulate(ds, est, sc, cfg.bertrand);
    ctx.write("coefficients.csv", coefficients_csv(est));
    ctx.write("report.csv", report_csv(rep));
    ctx.write("monthly.csv", monthly_csv(rep));
    if (!rep.prices.empty()) ctx.write("prices.csv", prices_csv(rep));
    ctx.finish();
    std::cout << report_csv(rep);
    return 0;
  }

  if (tau_cmd->parsed()) {
    RunContext ctx("ad-equivalence", out_dir);
    df::PanelDataset ds = load_prepared(ctx);
    ctx.record_input("scenario", scenario_path);
    df::Scenario sc = df::load_scenario(scenario_path);
    df::DemandEstimate est = df::estimate(ds, cfg.demand);
    std::optional<double> target;
    if (target_revenue > 0) target = target_revenue;
    df::TauResult res = df::ad_equivalence_tau(ds, est, sc, target, cfg.tau);
    json tau_json{{"tau_star", res.tau_star},
                  {"target_revenue", res.target_revenue}};
    ctx.write("tau.json", tau_json.dump(2) + "\n");
    ctx.write("tau_grid.csv", tau_grid_csv(res));
    ctx.finish();
    std::cout << "tau_star=" << fmt(res.tau_star) << "\n";
    return 0;
  }

  if (summ->parsed()) {
    RunContext ctx("summarize", out_dir);
    df::PanelDataset ds = load_prepared(ctx);
    ctx.write("summary_by_group.csv", summary_csv(ds, false));
    ctx.write("summary_by_firm.csv", summary_csv(ds, true));
    ctx.finish();
    std::cout << summary_csv(ds, false);
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const df::Error& e) {
    json err{{"error",
              {{"code", df::errc_name(e.code())}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    switch (e.kind()) {
      case df::error_kind::usage: return 2;
      case df::error_kind::data: return 3;
      case df::error_kind::numeric: return 4;
    }
    return 1;
  } catch (const std::exception& e) {
    json err{{"error", {{"code", "Internal"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
}
