#include "demandforge/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "demandforge/errors.hpp"

namespace df {

void KernelSpec::validate() const {
  if (horizon_k < 0)
    throw_data(errc::invalid_kernel, "horizon_k must be non-negative");
  if (kind == KernelKind::geometric) {
    if (delta < 0.0 || delta > 1.0)
      throw_data(errc::invalid_kernel,
                 "geometric kernel requires 0 <= delta <= 1");
  } else {
    if (delta < 0.0)
      throw_data(errc::invalid_kernel, "linear kernel requires delta >= 0");
    if (horizon_k * delta >= 1.0)
      throw_data(errc::invalid_kernel,
                 "linear kernel requires horizon_k * delta < 1 (got " +
                     std::to_string(horizon_k * delta) + ")");
  }
}

double KernelSpec::weight(int lag) const {
  if (kind == KernelKind::geometric) return std::pow(1.0 - delta, lag);
  return 1.0 - lag * delta;
}

std::vector<double> accumulate(const std::vector<double>& raw,
                               const KernelSpec& spec) {
  spec.validate();
  for (double v : raw)
    if (v < 0.0 || !std::isfinite(v))
      throw_data(errc::negative_input, "raw series values must be non-negative");

  std::vector<double> w(static_cast<size_t>(spec.horizon_k) + 1);
  for (int n = 0; n <= spec.horizon_k; ++n)
    w[static_cast<size_t>(n)] = spec.weight(n);

  std::vector<double> out(raw.size(), 0.0);
  for (size_t t = 0; t < raw.size(); ++t) {
    int k_avail = std::min<int>(spec.horizon_k, static_cast<int>(t));
    double acc = 0.0;
    for (int n = 0; n <= k_avail; ++n)
      acc += w[static_cast<size_t>(n)] * raw[t - static_cast<size_t>(n)];
    out[t] = acc;
  }
  return out;
}

ScoreSeries firm_image_series(const PanelDataset& ds, const std::string& firm_id) {
  if (!ds.has_scores)
    throw_data(errc::invalid_value, "dataset has no attached scores");
  int f = ds.find_firm(firm_id);
  if (f < 0) throw_data(errc::invalid_value, "unknown firm '" + firm_id + "'");
  return {firm_id, ds.firm_imgscore[static_cast<size_t>(f)]};
}

ScoreSeries brand_adv_series(const PanelDataset& ds, const std::string& brand_id) {
  if (!ds.has_scores)
    throw_data(errc::invalid_value, "dataset has no attached scores");
  for (size_t b = 0; b < ds.brands.size(); ++b)
    if (ds.brands[b] == brand_id) return {brand_id, ds.brand_cumadv[b]};
  throw_data(errc::invalid_value, "unknown brand '" + brand_id + "'");
}

PanelDataset attach_scores(const PanelDataset& ds, const KernelSpec& img_spec,
                           const KernelSpec& adv_spec, double image_divisor,
                           double adv_divisor, WindowMode window) {
  img_spec.validate();
  adv_spec.validate();
  if (image_divisor <= 0.0 || adv_divisor <= 0.0)
    throw_data(errc::bad_config, "score divisors must be positive");

  const size_t T = ds.periods.size();
  std::vector<std::vector<double>> news(ds.firms.size(),
                                        std::vector<double>(T, 0.0));
  std::vector<std::vector<double>> adv(ds.brands.size(),
                                       std::vector<double>(T, 0.0));
  for (const auto& o : ds.observations) {
    const auto& meta = ds.products[static_cast<size_t>(o.product)];
    news[static_cast<size_t>(meta.firm)][static_cast<size_t>(o.period_ix)] = o.news_raw;
    adv[static_cast<size_t>(meta.brand)][static_cast<size_t>(o.period_ix)] = o.adv_raw;
  }

  PanelDataset out = ds;
  out.firm_imgscore.resize(ds.firms.size());
  for (size_t f = 0; f < ds.firms.size(); ++f) {
    out.firm_imgscore[f] = accumulate(news[f], img_spec);
    for (double& v : out.firm_imgscore[f]) v /= image_divisor;
  }
  out.brand_cumadv.resize(ds.brands.size());
  for (size_t b = 0; b < ds.brands.size(); ++b) {
    out.brand_cumadv[b] = accumulate(adv[b], adv_spec);
    for (double& v : out.brand_cumadv[b]) v /= adv_divisor;
  }
  out.image_divisor = image_divisor;
  out.adv_divisor = adv_divisor;

  if (window == WindowMode::strict) {
    int k_drop = std::max(img_spec.horizon_k, adv_spec.horizon_k);
    if (k_drop >= static_cast<int>(T))
      throw_data(errc::insufficient_history,
                 "strict window with horizon " + std::to_string(k_drop) +
                     " leaves no periods out of " + std::to_string(T));
    size_t before = out.observations.size();
    std::erase_if(out.observations,
                  [&](const Observation& o) { return o.period_ix < k_drop; });
    std::erase_if(out.markets,
                  [&](const MarketDef& m) { return m.period_ix < k_drop; });
    out.dropped_strict_window = static_cast<int>(before - out.observations.size());
    if (out.observations.empty())
      throw_data(errc::insufficient_history,
                 "strict window dropped every observation");
    // share columns no longer align with rows
    out.has_shares = false;
    out.share.clear();
    out.within_share.clear();
    out.rev_share.clear();
    out.rev_within_share.clear();
    out.outside_share.clear();
    out.rev_outside_share.clear();
    finalize_panel(out);
  }

  out.imgscore.resize(out.observations.size());
  out.cumadv.resize(out.observations.size());
  for (size_t i = 0; i < out.observations.size(); ++i) {
    const auto& o = out.observations[i];
    const auto& meta = out.products[static_cast<size_t>(o.product)];
    out.imgscore[i] =
        out.firm_imgscore[static_cast<size_t>(meta.firm)][static_cast<size_t>(o.period_ix)];
    out.cumadv[i] =
        out.brand_cumadv[static_cast<size_t>(meta.brand)][static_cast<size_t>(o.period_ix)];
  }
  out.has_scores = true;
  return out;
}

}  // namespace df
