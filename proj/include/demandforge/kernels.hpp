#pragma once

#include <string>
#include <vector>

#include "demandforge/panel.hpp"

namespace df {

enum class KernelKind { geometric, linear };

// Decay kernel over monthly lags. Lag 0 always has weight 1; geometric lags
// decay as (1-delta)^n, linear lags as (1-n*delta).
struct KernelSpec {
  KernelKind kind = KernelKind::geometric;
  double delta = 0.4;
  int horizon_k = 6;

  void validate() const;
  double weight(int lag) const;
};

enum class WindowMode {
  truncated,  // sum over the lags available at the sample start
  strict      // drop observations whose period lacks horizon_k prior periods
};

struct ScoreSeries {
  std::string entity_id;
  std::vector<double> values;  // aligned with the dataset period index
};

// out[t] = sum_{n=0..min(k,t)} weight(n) * raw[t-n].
std::vector<double> accumulate(const std::vector<double>& raw,
                               const KernelSpec& spec);

// Scaled score series attached by attach_scores, by entity id.
ScoreSeries firm_image_series(const PanelDataset& ds, const std::string& firm_id);
ScoreSeries brand_adv_series(const PanelDataset& ds, const std::string& brand_id);

// Builds firm-level image scores from news_raw and brand-level cumulative
// advertising from adv_raw, scales them by the divisors, and attaches both to
// every observation. Periods where an entity has no observations contribute 0
// to its raw series. Strict window mode drops the first horizon_k periods.
PanelDataset attach_scores(const PanelDataset& ds, const KernelSpec& img_spec,
                           const KernelSpec& adv_spec,
                           double image_divisor = 100.0,
                           double adv_divisor = 1e10,
                           WindowMode window = WindowMode::truncated);

}  // namespace df
