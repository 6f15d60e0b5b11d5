#include "demandforge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "demandforge/errors.hpp"
#include "demandforge/threading.hpp"

namespace df {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t a,
                          std::uint64_t b = 0) {
  return splitmix64(seed ^ splitmix64(tag ^ splitmix64(a ^ splitmix64(b))));
}

std::vector<double> ar1_series(std::mt19937_64& rng, int T, double phi,
                               double sd) {
  std::normal_distribution<double> norm(0.0, 1.0);
  std::vector<double> z(static_cast<size_t>(T));
  double innov = std::sqrt(std::max(0.0, 1.0 - phi * phi));
  z[0] = norm(rng) * sd;
  for (int t = 1; t < T; ++t)
    z[static_cast<size_t>(t)] = phi * z[static_cast<size_t>(t - 1)] +
                                innov * sd * norm(rng);
  return z;
}

// split `total` into `parts` counts, largest first: the default 30/4 firm
// split is {17,7,4,2} and the group split is {19,3,6,2}, mirroring a market
// with one dominant firm and one dominant segment
std::vector<int> default_counts(int total, int parts, bool firm_like) {
  if (parts == 4 && total == 30)
    return firm_like ? std::vector<int>{17, 7, 4, 2} : std::vector<int>{19, 3, 6, 2};
  std::vector<int> out(static_cast<size_t>(parts), total / parts);
  for (int i = 0; i < total % parts; ++i) out[static_cast<size_t>(i)] += 1;
  return out;
}

// interleaved labels: repeatedly pick the label with the largest remaining
// fraction of its quota
std::vector<int> interleave_labels(const std::vector<int>& quota) {
  int total = 0;
  for (int q : quota) total += q;
  std::vector<int> remaining = quota;
  std::vector<int> out;
  out.reserve(static_cast<size_t>(total));
  for (int step = 0; step < total; ++step) {
    int best = -1;
    double best_frac = -1.0;
    for (size_t g = 0; g < quota.size(); ++g) {
      if (remaining[g] <= 0 || quota[g] <= 0) continue;
      double frac = static_cast<double>(remaining[g]) / quota[g];
      if (frac > best_frac) {
        best_frac = frac;
        best = static_cast<int>(g);
      }
    }
    out.push_back(best);
    remaining[static_cast<size_t>(best)] -= 1;
  }
  return out;
}

// The default unbalanced panel drops 1,380 of the 20,340 potential rows at
// the default dimensions: six entrants (delay sum 117, over 6 regions = 702
// rows) and six single-region assortment gaps (6 x 113 = 678 rows), which
// lands exactly on 18,960 observations.
std::vector<int> default_entry_delays(const SynthConfig& cfg) {
  std::vector<int> delays(static_cast<size_t>(cfg.n_products), 0);
  if (cfg.n_products == 30 && cfg.n_regions == 6 && cfg.n_periods == 113) {
    const int entrants[] = {2, 5, 8, 17, 20, 26};
    const int schedule[] = {30, 25, 22, 20, 12, 8};
    for (int i = 0; i < 6; ++i)
      delays[static_cast<size_t>(entrants[i])] = schedule[i];
    return delays;
  }
  // generic staggered entry over the first third of the sample
  int at = 0;
  int n_entrants = 0;
  for (int p = 2; p < cfg.n_products; p += 3) ++n_entrants;
  for (int p = 2; p < cfg.n_products; p += 3) {
    double frac = n_entrants > 1 ? static_cast<double>(at) / (n_entrants - 1) : 0.0;
    int delay = static_cast<int>(std::lround(
        (1.0 - frac) * cfg.n_periods / 3.0 + frac * cfg.n_periods / 20.0));
    delays[static_cast<size_t>(p)] = std::min(delay, cfg.n_periods - 1);
    ++at;
  }
  return delays;
}

std::vector<int> default_region_gaps(const SynthConfig& cfg,
                                     const std::vector<int>& entry) {
  std::vector<int> gap(static_cast<size_t>(cfg.n_products), -1);
  if (cfg.n_regions < 2) return gap;
  if (cfg.n_products == 30 && cfg.n_regions == 6 && cfg.n_periods == 113) {
    const int products[] = {1, 7, 13, 19, 25, 29};
    for (int i = 0; i < 6; ++i) gap[static_cast<size_t>(products[i])] = i;
    return gap;
  }
  int at = 0;
  for (int p = 1; p < cfg.n_products; p += 5) {
    if (entry[static_cast<size_t>(p)] > 0) continue;
    gap[static_cast<size_t>(p)] = at % cfg.n_regions;
    ++at;
  }
  return gap;
}

std::string zero_pad(int v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

PanelDataset generate(const SynthConfig& cfg) {
  cfg.params.validate();
  cfg.image_kernel.validate();
  cfg.adv_kernel.validate();
  if (cfg.n_products < 1 || cfg.n_firms < 1 || cfg.n_groups < 1 ||
      cfg.n_regions < 1 || cfg.n_periods < 1)
    throw_data(errc::bad_config, "synthetic dimensions must be positive");
  if (cfg.n_firms > cfg.n_products || cfg.n_groups > cfg.n_products)
    throw_data(errc::bad_config, "more firms/groups than products");
  const bool cenl = cfg.params.model == ModelKind::cenl;

  const int J = cfg.n_products, F = cfg.n_firms, G = cfg.n_groups,
            R = cfg.n_regions, T = cfg.n_periods;

  PanelDataset ds;
  for (int f = 0; f < F; ++f) ds.firms.push_back("F" + std::to_string(f + 1));
  for (int r = 0; r < R; ++r) ds.regions.push_back("R" + std::to_string(r + 1));
  if (G == 4)
    ds.groups = {"red_soup", "white_soup", "soupless", "cold"};
  else
    for (int g = 0; g < G; ++g) ds.groups.push_back("G" + std::to_string(g + 1));
  for (int t = 0; t < T; ++t) ds.periods.push_back(t);

  // assignment: contiguous firm blocks, interleaved groups, paired brands
  std::vector<int> firm_counts = default_counts(J, F, true);
  std::vector<int> group_of = interleave_labels(default_counts(J, G, false));
  std::vector<int> firm_of(static_cast<size_t>(J));
  {
    int at = 0;
    for (int f = 0; f < F; ++f)
      for (int i = 0; i < firm_counts[static_cast<size_t>(f)]; ++i)
        firm_of[static_cast<size_t>(at++)] = f;
  }
  std::vector<int> brand_of(static_cast<size_t>(J));
  {
    int brand = -1;
    int prev_firm = -1, within = 0;
    for (int p = 0; p < J; ++p) {
      if (firm_of[static_cast<size_t>(p)] != prev_firm) {
        prev_firm = firm_of[static_cast<size_t>(p)];
        within = 0;
      }
      if (within % 2 == 0) ++brand;
      brand_of[static_cast<size_t>(p)] = brand;
      ++within;
    }
    for (int b = 0; b <= brand; ++b) ds.brands.push_back("B" + zero_pad(b + 1, 2));
  }
  const int cold_group = G - 1;
  for (int p = 0; p < J; ++p) {
    ProductMeta meta;
    meta.product_id = "P" + zero_pad(p + 1, 2);
    meta.firm = firm_of[static_cast<size_t>(p)];
    meta.brand = brand_of[static_cast<size_t>(p)];
    meta.group = group_of[static_cast<size_t>(p)];
    meta.firm_id = ds.firms[static_cast<size_t>(meta.firm)];
    meta.brand_id = ds.brands[static_cast<size_t>(meta.brand)];
    meta.group_id = ds.groups[static_cast<size_t>(meta.group)];
    meta.is_cold = (G > 1 && meta.group == cold_group);
    ds.products.push_back(meta);
  }

  std::vector<int> entry =
      cfg.entry_delays.empty() ? default_entry_delays(cfg) : cfg.entry_delays;
  if (static_cast<int>(entry.size()) != J)
    throw_data(errc::bad_config, "entry_delays must have one entry per product");
  std::vector<int> gap =
      cfg.region_gap.empty() ? default_region_gaps(cfg, entry) : cfg.region_gap;
  if (static_cast<int>(gap.size()) != J)
    throw_data(errc::bad_config, "region_gap must have one entry per product");
  auto present = [&](int p, int r, int t) {
    return t >= entry[static_cast<size_t>(p)] && gap[static_cast<size_t>(p)] != r;
  };

  // structural draws, one stream per concern
  std::mt19937_64 rng_fe(stream_seed(cfg.seed, 0xFE, 0));
  std::normal_distribution<double> norm(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<double> prod_fe(static_cast<size_t>(J)), group_fe(static_cast<size_t>(G)),
      region_fe(static_cast<size_t>(R));
  for (auto& v : prod_fe) v = cfg.product_fe_sd * norm(rng_fe);
  for (int p = 0; p < J; ++p)
    if (entry[static_cast<size_t>(p)] > 0)
      prod_fe[static_cast<size_t>(p)] += cfg.entrant_fe_boost;
  for (auto& v : group_fe) v = cfg.group_fe_sd * norm(rng_fe);
  for (auto& v : region_fe) v = cfg.region_fe_sd * norm(rng_fe);
  std::vector<double> time_fe;
  {
    std::mt19937_64 rng_t(stream_seed(cfg.seed, 0x71, 0));
    time_fe = ar1_series(rng_t, T, 0.7, cfg.time_fe_sd);
  }

  // product cost processes, common across regions
  std::vector<double> cost_base(static_cast<size_t>(J));
  std::vector<std::vector<double>> cost(static_cast<size_t>(J));
  for (int p = 0; p < J; ++p) {
    std::mt19937_64 rc(stream_seed(cfg.seed, 0xC0, static_cast<std::uint64_t>(p)));
    std::uniform_real_distribution<double> u(cfg.cost_base_lo, cfg.cost_base_hi);
    cost_base[static_cast<size_t>(p)] = u(rc);
    auto z = ar1_series(rc, T, cfg.cost_ar, 1.0);
    cost[static_cast<size_t>(p)].resize(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t)
      cost[static_cast<size_t>(p)][static_cast<size_t>(t)] =
          cost_base[static_cast<size_t>(p)] * std::exp(cfg.cost_sd * z[static_cast<size_t>(t)]);
  }

  // firm news counts; zero when the firm has nothing on the market
  std::vector<int> firm_first(static_cast<size_t>(F), T);
  std::vector<int> brand_first(ds.brands.size(), T);
  for (int p = 0; p < J; ++p) {
    firm_first[static_cast<size_t>(firm_of[static_cast<size_t>(p)])] =
        std::min(firm_first[static_cast<size_t>(firm_of[static_cast<size_t>(p)])],
                 entry[static_cast<size_t>(p)]);
    brand_first[static_cast<size_t>(brand_of[static_cast<size_t>(p)])] =
        std::min(brand_first[static_cast<size_t>(brand_of[static_cast<size_t>(p)])],
                 entry[static_cast<size_t>(p)]);
  }
  std::vector<std::vector<double>> news(static_cast<size_t>(F),
                                        std::vector<double>(static_cast<size_t>(T), 0.0));
  {
    std::vector<double> base(static_cast<size_t>(F));
    double rival_mean = 0.0;
    int rivals = 0;
    for (int f = 0; f < F; ++f) {
      std::mt19937_64 rb(stream_seed(cfg.seed, 0x4D, static_cast<std::uint64_t>(f)));
      std::uniform_real_distribution<double> u(cfg.news_base_lo, cfg.news_base_hi);
      base[static_cast<size_t>(f)] = u(rb);
      if (f != cfg.target_firm) {
        rival_mean += base[static_cast<size_t>(f)];
        ++rivals;
      }
    }
    // pin the target's level to the rival mean so the image ordering holds
    // over the whole sample, not just where the ramp has kicked in
    if (rivals > 0 && cfg.target_firm >= 0 && cfg.target_firm < F)
      base[static_cast<size_t>(cfg.target_firm)] =
          cfg.target_base_boost * rival_mean / rivals;
    for (int f = 0; f < F; ++f) {
      std::mt19937_64 rn(stream_seed(cfg.seed, 0x4E, static_cast<std::uint64_t>(f)));
      auto w = ar1_series(rn, T, 0.9, 0.3);
      for (int t = 0; t < T; ++t) {
        if (t < firm_first[static_cast<size_t>(f)]) continue;
        double lambda = base[static_cast<size_t>(f)] * std::exp(w[static_cast<size_t>(t)]);
        if (f == cfg.target_firm && T > 1) {
          double ramp = std::max(0.0, (t - T / 2.0) / (T / 2.0));
          lambda *= 1.0 + cfg.target_image_uplift * ramp;
        }
        std::poisson_distribution<int> pois(lambda);
        news[static_cast<size_t>(f)][static_cast<size_t>(t)] = pois(rn);
      }
    }
  }

  // rival entries per (firm, period): product launches by other firms
  std::vector<std::vector<int>> rival_entries(static_cast<size_t>(F),
                                              std::vector<int>(static_cast<size_t>(T), 0));
  for (int p = 0; p < J; ++p) {
    int e = entry[static_cast<size_t>(p)];
    if (e <= 0 || e >= T) continue;
    for (int f = 0; f < F; ++f)
      if (f != firm_of[static_cast<size_t>(p)])
        rival_entries[static_cast<size_t>(f)][static_cast<size_t>(e)] += 1;
  }

  // brand ad spend; marketing pushes back for a few months after a rival
  // launch, which is what gives the entry instrument its first-stage bite
  std::vector<std::vector<double>> adv(ds.brands.size(),
                                       std::vector<double>(static_cast<size_t>(T), 0.0));
  for (size_t b = 0; b < ds.brands.size(); ++b) {
    std::mt19937_64 ra(stream_seed(cfg.seed, 0xAD, b));
    std::uniform_real_distribution<double> u(std::log(cfg.adv_scale_lo),
                                             std::log(cfg.adv_scale_hi));
    double scale = std::exp(u(ra));
    auto v = ar1_series(ra, T, 0.8, 0.4);
    int firm = -1;
    for (int p = 0; p < J; ++p)
      if (brand_of[static_cast<size_t>(p)] == static_cast<int>(b))
        firm = firm_of[static_cast<size_t>(p)];
    for (int t = 0; t < T; ++t) {
      if (t < brand_first[b]) continue;
      bool off = unif(ra) < cfg.adv_off_prob;
      double push = 0.0;
      for (int lag = 0; lag <= 2 && t - lag >= 0; ++lag)
        push += rival_entries[static_cast<size_t>(firm)][static_cast<size_t>(t - lag)];
      double level = scale * std::exp(v[static_cast<size_t>(t)]) *
                     (1.0 + cfg.adv_entry_response * push);
      adv[b][static_cast<size_t>(t)] = off ? 0.0 : level;
    }
  }

  // scores exactly as attach_scores will rebuild them
  std::vector<std::vector<double>> img(static_cast<size_t>(F));
  for (int f = 0; f < F; ++f) {
    img[static_cast<size_t>(f)] = accumulate(news[static_cast<size_t>(f)], cfg.image_kernel);
    for (double& v : img[static_cast<size_t>(f)]) v /= cfg.image_divisor;
  }
  std::vector<std::vector<double>> cadv(ds.brands.size());
  for (size_t b = 0; b < ds.brands.size(); ++b) {
    cadv[b] = accumulate(adv[b], cfg.adv_kernel);
    for (double& v : cadv[b]) v /= cfg.adv_divisor;
  }

  // region populations
  std::vector<double> pop(static_cast<size_t>(R));
  {
    const double base[] = {10.5e6, 7.4e6, 5.2e6, 3.6e6, 2.8e6, 1.6e6};
    for (int r = 0; r < R; ++r)
      pop[static_cast<size_t>(r)] = r < 6 ? base[r] : 1.2e7 / (2.0 + r);
  }

  // per-market demand shocks and price noise, one stream per market
  std::vector<std::vector<double>> xi(static_cast<size_t>(R) * T);
  std::vector<std::vector<double>> price(static_cast<size_t>(R) * T);
  parallel_for(static_cast<size_t>(R) * static_cast<size_t>(T), [&](std::size_t m) {
    int r = static_cast<int>(m) / T;
    int t = static_cast<int>(m) % T;
    std::mt19937_64 rm(stream_seed(cfg.seed, 0x3C, static_cast<std::uint64_t>(r),
                                   static_cast<std::uint64_t>(t)));
    std::normal_distribution<double> n01(0.0, 1.0);
    xi[m].assign(static_cast<size_t>(J), 0.0);
    price[m].assign(static_cast<size_t>(J), 0.0);
    for (int p = 0; p < J; ++p) {
      double e = cfg.xi_sd * n01(rm);
      double eta = cfg.region_cost_sd * cost_base[static_cast<size_t>(p)] * n01(rm);
      xi[m][static_cast<size_t>(p)] = e;
      price[m][static_cast<size_t>(p)] =
          std::max(0.05, cost[static_cast<size_t>(p)][static_cast<size_t>(t)] +
                             cfg.price_endogeneity * e + eta);
    }
  });

  // mean utility up to the calibration shift
  auto base_delta = [&](int r, int t, int p) {
    const double pr = price[static_cast<size_t>(r) * T + static_cast<size_t>(t)]
                           [static_cast<size_t>(p)];
    double d = cfg.params.alpha * (cenl ? std::log(pr) : pr);
    int f = firm_of[static_cast<size_t>(p)];
    int b = brand_of[static_cast<size_t>(p)];
    int g = group_of[static_cast<size_t>(p)];
    d += cfg.params.beta1 * img[static_cast<size_t>(f)][static_cast<size_t>(t)];
    d += cfg.params.beta2 * cadv[static_cast<size_t>(b)][static_cast<size_t>(t)];
    d += prod_fe[static_cast<size_t>(p)] + group_fe[static_cast<size_t>(g)] +
         time_fe[static_cast<size_t>(t)] + region_fe[static_cast<size_t>(r)];
    if (G > 1 && g == cold_group)
      d += cfg.cold_season_amplitude * std::cos(2.0 * M_PI * ((t % 12) - 6) / 12.0);
    d += xi[static_cast<size_t>(r) * T + static_cast<size_t>(t)][static_cast<size_t>(p)];
    return d;
  };

  auto market_snapshot = [&](int r, int t, double shift) {
    MarketSnapshot snap;
    snap.model = cfg.params.model;
    for (int p = 0; p < J; ++p) {
      if (!present(p, r, t)) continue;
      snap.product.push_back(p);
      snap.group.push_back(group_of[static_cast<size_t>(p)]);
      snap.firm.push_back(firm_of[static_cast<size_t>(p)]);
      snap.price.conservativeResize(snap.price.size() + 1);
      snap.price[snap.price.size() - 1] =
          price[static_cast<size_t>(r) * T + static_cast<size_t>(t)][static_cast<size_t>(p)];
      snap.delta.conservativeResize(snap.delta.size() + 1);
      snap.delta[snap.delta.size() - 1] = base_delta(r, t, p) + shift;
    }
    return snap;
  };

  // calibrate a common utility shift so the average outside share hits the
  // target; the shift is absorbed by time effects at estimation
  auto mean_outside = [&](double shift) {
    std::vector<double> out(static_cast<size_t>(R) * T, 1.0);
    parallel_for(out.size(), [&](std::size_t m) {
      int r = static_cast<int>(m) / T;
      int t = static_cast<int>(m) % T;
      ShareResult s = shares_from_utilities(market_snapshot(r, t, shift), cfg.params);
      out[m] = s.outside;
    });
    double acc = 0.0;
    for (double v : out) acc += v;
    return acc / static_cast<double>(out.size());
  };
  double lo = -25.0, hi = 25.0;
  for (int it = 0; it < 70; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mean_outside(mid) > cfg.outside_share_target)
      lo = mid;  // too much outside: raise utilities
    else
      hi = mid;
  }
  const double shift = 0.5 * (lo + hi);

  // materialize observations
  std::vector<std::vector<Observation>> per_market(static_cast<size_t>(R) * T);
  std::vector<double> market_rev(static_cast<size_t>(R) * T, 0.0);
  parallel_for(per_market.size(), [&](std::size_t m) {
    int r = static_cast<int>(m) / T;
    int t = static_cast<int>(m) % T;
    MarketSnapshot snap = market_snapshot(r, t, shift);
    ShareResult s = shares_from_utilities(snap, cfg.params);
    if (!(s.outside > 0.0))
      throw_numeric(errc::degenerate_market,
                    "outside share not positive in generated market");
    const double M = pop[static_cast<size_t>(r)] * cfg.size_unit;
    for (int j = 0; j < snap.size(); ++j) {
      int p = snap.product[static_cast<size_t>(j)];
      Observation o;
      o.product = p;
      o.region = r;
      o.period_ix = t;
      o.price = snap.price[j];
      if (cenl) {
        // shares are revenue shares; expenditure scale set below per region
        o.volume = s.share[j] / snap.price[j];  // rescaled after E_r is known
      } else {
        o.volume = s.share[j] * M;
      }
      o.news_raw = news[static_cast<size_t>(firm_of[static_cast<size_t>(p)])]
                       [static_cast<size_t>(t)];
      o.adv_raw = adv[static_cast<size_t>(brand_of[static_cast<size_t>(p)])]
                     [static_cast<size_t>(t)];
      per_market[m].push_back(o);
      market_rev[m] += o.volume * o.price;
    }
  });

  // expenditure sizes per region
  std::vector<double> expend(static_cast<size_t>(R), 0.0);
  if (cenl) {
    // fix E_r, then scale revenue-share volumes into currency terms
    for (int r = 0; r < R; ++r)
      expend[static_cast<size_t>(r)] = pop[static_cast<size_t>(r)] * cfg.size_unit;
    for (int r = 0; r < R; ++r)
      for (int t = 0; t < T; ++t)
        for (auto& o : per_market[static_cast<size_t>(r) * T + static_cast<size_t>(t)])
          o.volume *= expend[static_cast<size_t>(r)];
  } else {
    // twice the region's average monthly spending, bumped if a spike month
    // would breach it
    for (int r = 0; r < R; ++r) {
      double mean = 0.0, peak = 0.0;
      for (int t = 0; t < T; ++t) {
        double rev = market_rev[static_cast<size_t>(r) * T + static_cast<size_t>(t)];
        mean += rev;
        peak = std::max(peak, rev);
      }
      mean /= T;
      expend[static_cast<size_t>(r)] = std::max(2.0 * mean, 1.05 * peak);
    }
  }

  for (int r = 0; r < R; ++r) {
    for (int t = 0; t < T; ++t) {
      MarketDef m;
      m.region = r;
      m.period_ix = t;
      m.population = pop[static_cast<size_t>(r)];
      m.size_unit = cfg.size_unit;
      m.expenditure_size = expend[static_cast<size_t>(r)];
      if (cenl) {
        // keep volume shares well inside the market under CENL generation too
        double vol = 0.0;
        for (const auto& o : per_market[static_cast<size_t>(r) * T + static_cast<size_t>(t)])
          vol += o.volume;
        if (vol >= m.size()) m.population = 2.0 * vol / m.size_unit;
      }
      ds.markets.push_back(m);
      for (const auto& o : per_market[static_cast<size_t>(r) * T + static_cast<size_t>(t)])
        ds.observations.push_back(o);
    }
  }

  finalize_panel(ds);
  return ds;
}

GridEquilibrium brute_force_bertrand(const Eigen::VectorXd& mc,
                                     const UtilityParams& params,
                                     const MarketSnapshot& ref,
                                     const Eigen::VectorXd& delta_cf,
                                     const Eigen::MatrixXd& omega, double lo,
                                     double hi, double grid_step) {
  const int J = ref.size();
  if (J > 2)
    throw_numeric(errc::domain_error, "grid oracle supports at most 2 products");
  if (!(hi > lo) || grid_step <= 0.0)
    throw_numeric(errc::domain_error, "bad price bracket");

  const long n_grid = static_cast<long>(std::floor((hi - lo) / grid_step)) + 1;
  auto demand_at = [&](const Eigen::VectorXd& p) {
    MarketSnapshot snap = ref;
    snap.price = p;
    if (ref.model == ModelKind::cenl)
      snap.delta = delta_cf.array() +
                   params.alpha * (p.array().log() - ref.price.array().log());
    else
      snap.delta =
          delta_cf.array() + params.alpha * (p.array() - ref.price.array());
    return demand_vector(snap, params);
  };

  Eigen::VectorXd p = ref.price;
  GridEquilibrium out;
  std::vector<long> idx(static_cast<size_t>(J), -1);
  for (int sweep = 0; sweep < 200; ++sweep) {
    bool moved = false;
    for (int j = 0; j < J; ++j) {
      long best_i = -1;
      double best_profit = -std::numeric_limits<double>::infinity();
      Eigen::VectorXd trial = p;
      for (long i = 0; i < n_grid; ++i) {
        trial[j] = lo + grid_step * static_cast<double>(i);
        Eigen::VectorXd d = demand_at(trial);
        double profit = 0.0;
        for (int k = 0; k < J; ++k)
          if (omega(j, k) > 0.0) profit += (trial[k] - mc[k]) * d[k];
        if (profit > best_profit) {
          best_profit = profit;
          best_i = i;
        }
      }
      if (best_i == 0 || best_i == n_grid - 1)
        throw_numeric(errc::grid_too_coarse,
                      "best response at bracket edge; widen [lo, hi]");
      if (best_i != idx[static_cast<size_t>(j)]) moved = true;
      idx[static_cast<size_t>(j)] = best_i;
      p[j] = lo + grid_step * static_cast<double>(best_i);
    }
    out.sweeps = sweep + 1;
    if (!moved) {
      out.price = p;
      return out;
    }
  }
  throw_numeric(errc::no_convergence, "grid best responses did not settle");
}

}  // namespace df
