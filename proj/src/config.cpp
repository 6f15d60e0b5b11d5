#include "demandforge/config.hpp"

#include <json.hpp>

#include "demandforge/csv.hpp"
#include "demandforge/errors.hpp"

namespace df {

using nlohmann::json;

namespace {

json parse_json(const std::string& text, const std::string& what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded())
    throw_data(errc::bad_config, what + ": invalid JSON");
  if (!j.is_object())
    throw_data(errc::bad_config, what + ": expected a JSON object");
  return j;
}

KernelSpec kernel_from_json(const json& j, const KernelSpec& defaults,
                            const std::string& what) {
  KernelSpec k = defaults;
  if (j.contains("kind")) {
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "geometric")
      k.kind = KernelKind::geometric;
    else if (kind == "linear")
      k.kind = KernelKind::linear;
    else
      throw_data(errc::bad_config, what + ".kind must be geometric or linear");
  }
  if (j.contains("delta")) k.delta = j.at("delta").get<double>();
  if (j.contains("k")) k.horizon_k = j.at("k").get<int>();
  k.validate();
  return k;
}

json kernel_to_json(const KernelSpec& k) {
  return json{{"kind", k.kind == KernelKind::geometric ? "geometric" : "linear"},
              {"delta", k.delta},
              {"k", k.horizon_k}};
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j = parse_json(json_text, "config");
  RunConfig cfg;

  if (j.contains("image_kernel"))
    cfg.image_kernel = kernel_from_json(j.at("image_kernel"), cfg.image_kernel,
                                        "image_kernel");
  if (j.contains("adv_kernel"))
    cfg.adv_kernel = kernel_from_json(j.at("adv_kernel"), cfg.adv_kernel,
                                      "adv_kernel");
  maybe(j, "image_divisor", cfg.image_divisor);
  maybe(j, "adv_divisor", cfg.adv_divisor);
  if (j.contains("window")) {
    std::string w = j.at("window").get<std::string>();
    if (w == "truncated")
      cfg.window = WindowMode::truncated;
    else if (w == "strict")
      cfg.window = WindowMode::strict;
    else
      throw_data(errc::bad_config, "window must be truncated or strict");
  }

  if (j.contains("demand")) {
    const json& d = j.at("demand");
    if (d.contains("model"))
      cfg.demand.model = model_kind_from_string(d.at("model").get<std::string>());
    if (d.contains("fe"))
      cfg.demand.fe = fe_scheme_from_string(d.at("fe").get<std::string>());
    maybe(d, "cold_month_interactions", cfg.demand.cold_month_interactions);
    maybe(d, "adv_endogenous", cfg.demand.adv_endogenous);
    maybe(d, "instruments", cfg.demand.instruments);
    maybe(d, "max_fe_sweeps", cfg.demand.max_fe_sweeps);
    maybe(d, "fe_tol", cfg.demand.fe_tol);
  }

  if (j.contains("pricing")) {
    std::string p = j.at("pricing").get<std::string>();
    if (p == "regulated")
      cfg.pricing = Scenario::Pricing::regulated;
    else if (p == "bertrand")
      cfg.pricing = Scenario::Pricing::bertrand;
    else
      throw_data(errc::bad_config, "pricing must be regulated or bertrand");
  }

  if (j.contains("tau")) {
    const json& t = j.at("tau");
    maybe(t, "max", cfg.tau.tau_max);
    maybe(t, "rel_tol", cfg.tau.rel_tol);
    maybe(t, "grid_step", cfg.tau.grid_step);
    maybe(t, "grid_max", cfg.tau.grid_max);
    if (t.contains("from_period")) cfg.tau.from_period = t.at("from_period").get<long long>();
    if (t.contains("to_period")) cfg.tau.to_period = t.at("to_period").get<long long>();
  }

  if (j.contains("bertrand")) {
    const json& b = j.at("bertrand");
    maybe(b, "tol", cfg.bertrand.tol);
    maybe(b, "max_iter", cfg.bertrand.max_iter);
    maybe(b, "damping", cfg.bertrand.damping);
  }
  maybe(j, "elasticity_share_weighted", cfg.elasticity_share_weighted);

  if (j.contains("synth")) {
    const json& s = j.at("synth");
    SynthConfig& sc = cfg.synth;
    if (s.contains("model"))
      sc.params.model = model_kind_from_string(s.at("model").get<std::string>());
    maybe(s, "alpha", sc.params.alpha);
    maybe(s, "sigma", sc.params.sigma);
    maybe(s, "beta1", sc.params.beta1);
    maybe(s, "beta2", sc.params.beta2);
    maybe(s, "products", sc.n_products);
    maybe(s, "firms", sc.n_firms);
    maybe(s, "groups", sc.n_groups);
    maybe(s, "regions", sc.n_regions);
    maybe(s, "periods", sc.n_periods);
    maybe(s, "seed", sc.seed);
    maybe(s, "xi_sd", sc.xi_sd);
    maybe(s, "price_endogeneity", sc.price_endogeneity);
    maybe(s, "target_firm", sc.target_firm);
    maybe(s, "target_image_uplift", sc.target_image_uplift);
    maybe(s, "outside_share_target", sc.outside_share_target);
    maybe(s, "size_unit", sc.size_unit);
    maybe(s, "entry_delays", sc.entry_delays);
    // generation reuses the analysis kernels unless told otherwise
    sc.image_kernel = cfg.image_kernel;
    sc.adv_kernel = cfg.adv_kernel;
    sc.image_divisor = cfg.image_divisor;
    sc.adv_divisor = cfg.adv_divisor;
    if (s.contains("image_kernel"))
      sc.image_kernel = kernel_from_json(s.at("image_kernel"), sc.image_kernel,
                                         "synth.image_kernel");
    if (s.contains("adv_kernel"))
      sc.adv_kernel = kernel_from_json(s.at("adv_kernel"), sc.adv_kernel,
                                       "synth.adv_kernel");
  } else {
    cfg.synth.image_kernel = cfg.image_kernel;
    cfg.synth.adv_kernel = cfg.adv_kernel;
    cfg.synth.image_divisor = cfg.image_divisor;
    cfg.synth.adv_divisor = cfg.adv_divisor;
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_text_file(path));
}

Scenario parse_scenario(const std::string& json_text) {
  json j = parse_json(json_text, "scenario");
  Scenario sc;
  maybe(j, "name", sc.name);
  maybe(j, "target_firm", sc.target_firm);
  maybe(j, "ad_multiplier", sc.ad_multiplier);
  if (sc.ad_multiplier < -1.0)
    throw_data(errc::bad_config, "ad_multiplier must be >= -1");
  if (j.contains("pricing")) {
    std::string p = j.at("pricing").get<std::string>();
    if (p == "regulated")
      sc.pricing = Scenario::Pricing::regulated;
    else if (p == "bertrand")
      sc.pricing = Scenario::Pricing::bertrand;
    else
      throw_data(errc::bad_config, "scenario pricing must be regulated or bertrand");
  }
  if (j.contains("image_rule")) {
    const json& r = j.at("image_rule");
    std::string kind = r.value("kind", "identity");
    if (kind == "identity") {
      sc.image.kind = ImageRule::Kind::identity;
    } else if (kind == "mean_of_rivals") {
      sc.image.kind = ImageRule::Kind::mean_of_rivals;
    } else if (kind == "rival") {
      sc.image.kind = ImageRule::Kind::rival;
      sc.image.rival_firm = r.value("rival", std::string());
      if (sc.image.rival_firm.empty())
        throw_data(errc::bad_config, "image_rule.rival is required");
    } else if (kind == "custom") {
      sc.image.kind = ImageRule::Kind::custom;
      if (!r.contains("series") || !r.at("series").is_object())
        throw_data(errc::bad_config, "image_rule.series must map period -> score");
      for (const auto& [k, v] : r.at("series").items())
        sc.image.series[std::stoll(k)] = v.get<double>();
    } else {
      throw_data(errc::bad_config, "unknown image_rule.kind '" + kind + "'");
    }
    if (sc.image.kind != ImageRule::Kind::identity && sc.target_firm.empty())
      throw_data(errc::bad_config, "image_rule needs a target_firm");
  }
  return sc;
}

Scenario load_scenario(const std::string& path) {
  return parse_scenario(read_text_file(path));
}

std::string dump_run_config(const RunConfig& cfg) {
  json j;
  j["image_kernel"] = kernel_to_json(cfg.image_kernel);
  j["adv_kernel"] = kernel_to_json(cfg.adv_kernel);
  j["image_divisor"] = cfg.image_divisor;
  j["adv_divisor"] = cfg.adv_divisor;
  j["window"] = cfg.window == WindowMode::truncated ? "truncated" : "strict";
  j["demand"] = {
      {"model", to_string(cfg.demand.model)},
      {"fe", to_string(cfg.demand.fe)},
      {"cold_month_interactions", cfg.demand.cold_month_interactions},
      {"adv_endogenous", cfg.demand.adv_endogenous},
      {"instruments", cfg.demand.instruments},
      {"max_fe_sweeps", cfg.demand.max_fe_sweeps},
      {"fe_tol", cfg.demand.fe_tol},
  };
  j["pricing"] =
      cfg.pricing == Scenario::Pricing::regulated ? "regulated" : "bertrand";
  j["tau"] = {{"max", cfg.tau.tau_max},
              {"rel_tol", cfg.tau.rel_tol},
              {"grid_step", cfg.tau.grid_step},
              {"grid_max", cfg.tau.grid_max}};
  if (cfg.tau.from_period) j["tau"]["from_period"] = *cfg.tau.from_period;
  if (cfg.tau.to_period) j["tau"]["to_period"] = *cfg.tau.to_period;
  j["bertrand"] = {{"tol", cfg.bertrand.tol},
                   {"max_iter", cfg.bertrand.max_iter},
                   {"damping", cfg.bertrand.damping}};
  j["elasticity_share_weighted"] = cfg.elasticity_share_weighted;
  j["synth"] = {
      {"model", to_string(cfg.synth.params.model)},
      {"alpha", cfg.synth.params.alpha},
      {"sigma", cfg.synth.params.sigma},
      {"beta1", cfg.synth.params.beta1},
      {"beta2", cfg.synth.params.beta2},
      {"products", cfg.synth.n_products},
      {"firms", cfg.synth.n_firms},
      {"groups", cfg.synth.n_groups},
      {"regions", cfg.synth.n_regions},
      {"periods", cfg.synth.n_periods},
      {"seed", cfg.synth.seed},
      {"xi_sd", cfg.synth.xi_sd},
      {"price_endogeneity", cfg.synth.price_endogeneity},
      {"target_firm", cfg.synth.target_firm},
      {"target_image_uplift", cfg.synth.target_image_uplift},
      {"outside_share_target", cfg.synth.outside_share_target},
      {"size_unit", cfg.synth.size_unit},
      {"entry_delays", cfg.synth.entry_delays},
  };
  return j.dump(2) + "\n";
}

PanelDataset prepare_dataset(const PanelDataset& ds, const RunConfig& cfg) {
  PanelDataset scored = attach_scores(ds, cfg.image_kernel, cfg.adv_kernel,
                                      cfg.image_divisor, cfg.adv_divisor,
                                      cfg.window);
  return compute_shares(scored);
}

}  // namespace df
