#pragma once

#include <optional>
#include <string>

#include "demandforge/counterfactual.hpp"
#include "demandforge/estimator.hpp"
#include "demandforge/kernels.hpp"
#include "demandforge/synth.hpp"

namespace df {

// Analysis settings shared by the CLI subcommands. JSON keys documented in
// the README; every field has a default so an empty object is valid.
struct RunConfig {
  KernelSpec image_kernel{KernelKind::geometric, 0.4, 6};
  KernelSpec adv_kernel{KernelKind::geometric, 0.4, 6};
  double image_divisor = 100.0;
  double adv_divisor = 1e10;
  WindowMode window = WindowMode::truncated;
  DemandSpec demand;
  Scenario::Pricing pricing = Scenario::Pricing::regulated;
  TauOptions tau;
  BertrandOptions bertrand;
  bool elasticity_share_weighted = false;
  SynthConfig synth;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::string& path);

// Canonical JSON echo of the effective configuration (sorted keys); hashed
// into run manifests.
std::string dump_run_config(const RunConfig& cfg);

// Applies attach_scores and compute_shares in the canonical order.
PanelDataset prepare_dataset(const PanelDataset& ds, const RunConfig& cfg);

}  // namespace df
