#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace df {

struct ProductMeta {
  std::string product_id;
  std::string firm_id;
  std::string brand_id;
  std::string group_id;
  bool is_cold = false;
  // interned indexes, filled on dataset construction
  int firm = -1;
  int brand = -1;
  int group = -1;
};

struct Observation {
  int product = -1;   // index into PanelDataset::products
  int region = -1;    // index into PanelDataset::regions
  int period_ix = -1; // index into PanelDataset::periods
  double price = 0.0;
  double volume = 0.0;
  double adv_raw = 0.0;   // brand-level monthly ad spend
  double news_raw = 0.0;  // firm-level monthly article count
};

struct MarketDef {
  int region = -1;
  int period_ix = -1;
  double population = 0.0;
  double size_unit = 10.0;
  double expenditure_size = 0.0;
  // span of this market's observations (observations are market-contiguous)
  int obs_begin = 0;
  int obs_end = 0;

  double size() const { return population * size_unit; }
};

// Long-format product x market panel. Immutable after construction; the
// share/score augmentations return a new value.
struct PanelDataset {
  std::vector<ProductMeta> products;
  std::vector<std::string> firms;
  std::vector<std::string> brands;
  std::vector<std::string> groups;
  std::vector<std::string> regions;
  std::vector<long long> periods;  // sorted unique period labels
  std::vector<MarketDef> markets;  // sorted by (region, period_ix)
  std::vector<Observation> observations;  // sorted by (region, period_ix, product)

  // share augmentation (compute_shares)
  bool has_shares = false;
  std::vector<double> share;            // per observation, volume / M_m
  std::vector<double> within_share;     // s_{j|g,m}
  std::vector<double> rev_share;        // price*volume / E_m
  std::vector<double> rev_within_share; // within-group revenue share
  std::vector<double> outside_share;      // per market
  std::vector<double> rev_outside_share;  // per market

  // score augmentation (attach_scores)
  bool has_scores = false;
  std::vector<double> imgscore;  // per observation, scaled by image_divisor
  std::vector<double> cumadv;    // per observation, scaled by adv_divisor
  std::vector<std::vector<double>> firm_imgscore;  // [firm][period_ix], scaled
  std::vector<std::vector<double>> brand_cumadv;   // [brand][period_ix], scaled
  double image_divisor = 1.0;
  double adv_divisor = 1.0;
  int dropped_strict_window = 0;

  int market_index(int region, int period_ix) const;
  // Calendar month in [0, 12). Periods that look like YYYYMM use the MM
  // digits; otherwise the period label modulo 12.
  int month_of(int period_ix) const;

  int find_firm(const std::string& id) const;
  int find_product(const std::string& id) const;
};

// Loads and validates the panel + markets CSV pair.
//
// Panel header (exact):
//   product_id,firm_id,brand_id,group_id,is_cold,region_id,period,price,volume,adv_raw,news_raw
// Markets header (exact):
//   region_id,period,population,size_unit,expenditure_size
PanelDataset load_panel(const std::string& panel_csv_path,
                        const std::string& markets_csv_path);

PanelDataset parse_panel(const std::string& panel_text,
                         const std::string& markets_text,
                         const std::string& origin = "panel");

// Re-checks every dataset invariant; throws on violation. load_panel and the
// synthetic generator both funnel through this.
void validate_panel(const PanelDataset& ds);

// Sorts markets/observations into canonical order, computes market spans,
// and validates. For programmatically built datasets.
void finalize_panel(PanelDataset& ds);

// Volume shares s_jm = volume / M_m, within-group shares, revenue shares, and
// per-market outside shares. Returns an augmented copy.
PanelDataset compute_shares(const PanelDataset& ds);

// Canonical serializations: sorted rows, shortest round-trip numerals, LF.
std::string serialize_panel(const PanelDataset& ds);
std::string serialize_markets(const PanelDataset& ds);

}  // namespace df
