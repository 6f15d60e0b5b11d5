#include "demandforge/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "demandforge/csv.hpp"
#include "demandforge/errors.hpp"

namespace df {

namespace {

double parse_number(const std::string& s, const std::string& where) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw_data(errc::invalid_value, where + ": not a number: '" + s + "'");
  if (!std::isfinite(v))
    throw_data(errc::invalid_value, where + ": non-finite value");
  return v;
}

long long parse_period(const std::string& s, const std::string& where) {
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw_data(errc::invalid_value, where + ": bad period: '" + s + "'");
  return v;
}

bool parse_flag(const std::string& s, const std::string& where) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw_data(errc::invalid_value, where + ": bad boolean: '" + s + "'");
}

int intern(std::vector<std::string>& pool, std::map<std::string, int>& index,
           const std::string& id) {
  auto it = index.find(id);
  if (it != index.end()) return it->second;
  int ix = static_cast<int>(pool.size());
  pool.push_back(id);
  index.emplace(id, ix);
  return ix;
}

void require_header(const CsvTable& t, const std::vector<std::string>& want,
                    const std::string& origin) {
  for (const auto& col : want)
    if (t.column(col) < 0)
      throw_data(errc::missing_column, origin + ": missing column '" + col + "'");
}

}  // namespace

int PanelDataset::market_index(int region, int period_ix) const {
  MarketDef probe;
  probe.region = region;
  probe.period_ix = period_ix;
  auto cmp = [](const MarketDef& a, const MarketDef& b) {
    return std::tie(a.region, a.period_ix) < std::tie(b.region, b.period_ix);
  };
  auto it = std::lower_bound(markets.begin(), markets.end(), probe, cmp);
  if (it == markets.end() || it->region != region || it->period_ix != period_ix)
    return -1;
  return static_cast<int>(it - markets.begin());
}

int PanelDataset::month_of(int period_ix) const {
  long long p = periods[static_cast<size_t>(period_ix)];
  if (p >= 190001 && p <= 299912) {
    long long mm = p % 100;
    if (mm >= 1 && mm <= 12) return static_cast<int>(mm - 1);
  }
  long long m = p % 12;
  if (m < 0) m += 12;
  return static_cast<int>(m);
}

int PanelDataset::find_firm(const std::string& id) const {
  for (size_t i = 0; i < firms.size(); ++i)
    if (firms[i] == id) return static_cast<int>(i);
  return -1;
}

int PanelDataset::find_product(const std::string& id) const {
  for (size_t i = 0; i < products.size(); ++i)
    if (products[i].product_id == id) return static_cast<int>(i);
  return -1;
}

PanelDataset parse_panel(const std::string& panel_text,
                         const std::string& markets_text,
                         const std::string& origin) {
  const std::vector<std::string> panel_cols = {
      "product_id", "firm_id", "brand_id", "group_id", "is_cold", "region_id",
      "period",     "price",   "volume",   "adv_raw",  "news_raw"};
  const std::vector<std::string> market_cols = {
      "region_id", "period", "population", "size_unit", "expenditure_size"};

  CsvTable panel = parse_csv(panel_text, origin);
  CsvTable markets = parse_csv(markets_text, origin + " markets");
  require_header(panel, panel_cols, origin);
  require_header(markets, market_cols, origin + " markets");

  PanelDataset ds;
  std::map<std::string, int> firm_ix, brand_ix, group_ix, region_ix, product_ix;
  std::set<long long> period_set;

  const int c_pid = panel.column("product_id"), c_firm = panel.column("firm_id"),
            c_brand = panel.column("brand_id"), c_group = panel.column("group_id"),
            c_cold = panel.column("is_cold"), c_region = panel.column("region_id"),
            c_period = panel.column("period"), c_price = panel.column("price"),
            c_vol = panel.column("volume"), c_adv = panel.column("adv_raw"),
            c_news = panel.column("news_raw");

  // First pass: collect the period universe from both files so indexes are
  // stable before observations are built.
  for (const auto& r : panel.rows)
    period_set.insert(parse_period(r[static_cast<size_t>(c_period)], origin));
  const int mc_region = markets.column("region_id"),
            mc_period = markets.column("period"),
            mc_pop = markets.column("population"),
            mc_unit = markets.column("size_unit"),
            mc_exp = markets.column("expenditure_size");
  for (const auto& r : markets.rows)
    period_set.insert(parse_period(r[static_cast<size_t>(mc_period)], origin));
  ds.periods.assign(period_set.begin(), period_set.end());
  auto period_index = [&](long long p) {
    auto it = std::lower_bound(ds.periods.begin(), ds.periods.end(), p);
    return static_cast<int>(it - ds.periods.begin());
  };

  for (size_t i = 0; i < markets.rows.size(); ++i) {
    const auto& r = markets.rows[i];
    std::string where = origin + " markets row " + std::to_string(i + 2);
    MarketDef m;
    m.region = intern(ds.regions, region_ix, r[static_cast<size_t>(mc_region)]);
    m.period_ix = period_index(parse_period(r[static_cast<size_t>(mc_period)], where));
    m.population = parse_number(r[static_cast<size_t>(mc_pop)], where);
    m.size_unit = parse_number(r[static_cast<size_t>(mc_unit)], where);
    m.expenditure_size = parse_number(r[static_cast<size_t>(mc_exp)], where);
    if (m.population <= 0 || m.size_unit <= 0)
      throw_data(errc::invalid_value, where + ": population and size_unit must be positive");
    ds.markets.push_back(m);
  }

  for (size_t i = 0; i < panel.rows.size(); ++i) {
    const auto& r = panel.rows[i];
    std::string where = origin + " row " + std::to_string(i + 2);
    ProductMeta meta;
    meta.product_id = r[static_cast<size_t>(c_pid)];
    meta.firm_id = r[static_cast<size_t>(c_firm)];
    meta.brand_id = r[static_cast<size_t>(c_brand)];
    meta.group_id = r[static_cast<size_t>(c_group)];
    meta.is_cold = parse_flag(r[static_cast<size_t>(c_cold)], where);

    auto it = product_ix.find(meta.product_id);
    int p;
    if (it == product_ix.end()) {
      meta.firm = intern(ds.firms, firm_ix, meta.firm_id);
      meta.brand = intern(ds.brands, brand_ix, meta.brand_id);
      meta.group = intern(ds.groups, group_ix, meta.group_id);
      p = static_cast<int>(ds.products.size());
      ds.products.push_back(meta);
      product_ix.emplace(meta.product_id, p);
    } else {
      p = it->second;
      const ProductMeta& have = ds.products[static_cast<size_t>(p)];
      if (have.firm_id != meta.firm_id || have.brand_id != meta.brand_id ||
          have.group_id != meta.group_id || have.is_cold != meta.is_cold)
        throw_data(errc::inconsistent_product,
                   where + ": product '" + meta.product_id +
                       "' redefined with different firm/brand/group/is_cold");
    }

    Observation o;
    o.product = p;
    o.region = intern(ds.regions, region_ix, r[static_cast<size_t>(c_region)]);
    o.period_ix = period_index(parse_period(r[static_cast<size_t>(c_period)], where));
    o.price = parse_number(r[static_cast<size_t>(c_price)], where);
    o.volume = parse_number(r[static_cast<size_t>(c_vol)], where);
    o.adv_raw = parse_number(r[static_cast<size_t>(c_adv)], where);
    o.news_raw = parse_number(r[static_cast<size_t>(c_news)], where);
    ds.observations.push_back(o);
  }

  finalize_panel(ds);
  return ds;
}

void finalize_panel(PanelDataset& ds) {
  std::sort(ds.markets.begin(), ds.markets.end(),
            [](const MarketDef& a, const MarketDef& b) {
              return std::tie(a.region, a.period_ix) <
                     std::tie(b.region, b.period_ix);
            });
  std::sort(ds.observations.begin(), ds.observations.end(),
            [](const Observation& a, const Observation& b) {
              return std::tie(a.region, a.period_ix, a.product) <
                     std::tie(b.region, b.period_ix, b.product);
            });

  size_t oi = 0;
  for (auto& m : ds.markets) {
    while (oi < ds.observations.size() &&
           std::tie(ds.observations[oi].region, ds.observations[oi].period_ix) <
               std::tie(m.region, m.period_ix))
      ++oi;  // orphans caught by validate_panel
    m.obs_begin = static_cast<int>(oi);
    while (oi < ds.observations.size() &&
           ds.observations[oi].region == m.region &&
           ds.observations[oi].period_ix == m.period_ix)
      ++oi;
    m.obs_end = static_cast<int>(oi);
  }

  validate_panel(ds);
}

PanelDataset load_panel(const std::string& panel_csv_path,
                        const std::string& markets_csv_path) {
  return parse_panel(read_text_file(panel_csv_path),
                     read_text_file(markets_csv_path), panel_csv_path);
}

void validate_panel(const PanelDataset& ds) {
  // market key uniqueness
  for (size_t i = 1; i < ds.markets.size(); ++i) {
    const auto& a = ds.markets[i - 1];
    const auto& b = ds.markets[i];
    if (a.region == b.region && a.period_ix == b.period_ix)
      throw_data(errc::duplicate_key,
                 "duplicate market (" + ds.regions[static_cast<size_t>(a.region)] +
                     ", " + std::to_string(ds.periods[static_cast<size_t>(a.period_ix)]) + ")");
  }

  auto obs_name = [&](const Observation& o) {
    return "(" + ds.products[static_cast<size_t>(o.product)].product_id + ", " +
           ds.regions[static_cast<size_t>(o.region)] + ", " +
           std::to_string(ds.periods[static_cast<size_t>(o.period_ix)]) + ")";
  };

  for (size_t i = 0; i < ds.observations.size(); ++i) {
    const auto& o = ds.observations[i];
    if (o.product < 0 || o.product >= static_cast<int>(ds.products.size()))
      throw_data(errc::orphan_product,
                 "observation " + std::to_string(i) + " references unknown product");
    if (o.volume < 0)
      throw_data(errc::invalid_value, "negative volume at " + obs_name(o));
    if (o.adv_raw < 0 || o.news_raw < 0)
      throw_data(errc::invalid_value, "negative adv_raw/news_raw at " + obs_name(o));
    if (o.volume > 0 && o.price <= 0)
      throw_data(errc::invalid_value,
                 "non-positive price with positive volume at " + obs_name(o));
    if (i > 0) {
      const auto& prev = ds.observations[i - 1];
      if (prev.region == o.region && prev.period_ix == o.period_ix &&
          prev.product == o.product)
        throw_data(errc::duplicate_key, "duplicate observation " + obs_name(o));
    }
  }

  // every observation inside some market span; spans computed from sorted order
  size_t covered = 0;
  for (const auto& m : ds.markets) {
    if (m.obs_begin != static_cast<int>(covered))
      throw_data(errc::missing_market,
                 "observation " + obs_name(ds.observations[covered]) +
                     " has no market definition");
    covered = static_cast<size_t>(m.obs_end);
  }
  if (covered != ds.observations.size())
    throw_data(errc::missing_market,
               "observation " + obs_name(ds.observations[covered]) +
                   " has no market definition");

  // product metadata consistency
  std::set<std::string> seen_products;
  for (const auto& p : ds.products) {
    if (!seen_products.insert(p.product_id).second)
      throw_data(errc::duplicate_key, "duplicate product_id '" + p.product_id + "'");
    if (p.firm < 0 || p.firm >= static_cast<int>(ds.firms.size()) ||
        p.brand < 0 || p.brand >= static_cast<int>(ds.brands.size()) ||
        p.group < 0 || p.group >= static_cast<int>(ds.groups.size()))
      throw_data(errc::orphan_product,
                 "product '" + p.product_id + "' has unresolved firm/brand/group");
  }

  // firm/brand level series must be consistent within a period
  {
    std::map<std::pair<int, int>, double> firm_news, brand_adv;
    for (const auto& o : ds.observations) {
      const auto& meta = ds.products[static_cast<size_t>(o.product)];
      auto fk = std::make_pair(meta.firm, o.period_ix);
      auto [fit, fnew] = firm_news.emplace(fk, o.news_raw);
      if (!fnew && fit->second != o.news_raw)
        throw_data(errc::invalid_value,
                   "news_raw differs within firm '" + meta.firm_id +
                       "' at period " +
                       std::to_string(ds.periods[static_cast<size_t>(o.period_ix)]));
      auto bk = std::make_pair(meta.brand, o.period_ix);
      auto [bit, bnew] = brand_adv.emplace(bk, o.adv_raw);
      if (!bnew && bit->second != o.adv_raw)
        throw_data(errc::invalid_value,
                   "adv_raw differs within brand '" + meta.brand_id +
                       "' at period " +
                       std::to_string(ds.periods[static_cast<size_t>(o.period_ix)]));
    }
  }

  // market size and expenditure dominate observed totals
  for (const auto& m : ds.markets) {
    double vol = 0, rev = 0;
    for (int i = m.obs_begin; i < m.obs_end; ++i) {
      vol += ds.observations[static_cast<size_t>(i)].volume;
      rev += ds.observations[static_cast<size_t>(i)].volume *
             ds.observations[static_cast<size_t>(i)].price;
    }
    std::string mk = "(" + ds.regions[static_cast<size_t>(m.region)] + ", " +
                     std::to_string(ds.periods[static_cast<size_t>(m.period_ix)]) + ")";
    if (vol >= m.size())
      throw_data(errc::market_size_violation,
                 "market " + mk + ": observed volume " + format_double(vol) +
                     " >= market size " + format_double(m.size()));
    if (m.obs_end > m.obs_begin && rev >= m.expenditure_size)
      throw_data(errc::market_size_violation,
                 "market " + mk + ": observed revenue " + format_double(rev) +
                     " >= expenditure size " + format_double(m.expenditure_size));
  }
}

PanelDataset compute_shares(const PanelDataset& ds) {
  PanelDataset out = ds;
  size_t n = ds.observations.size();
  out.share.assign(n, 0.0);
  out.within_share.assign(n, 0.0);
  out.rev_share.assign(n, 0.0);
  out.rev_within_share.assign(n, 0.0);
  out.outside_share.assign(ds.markets.size(), 1.0);
  out.rev_outside_share.assign(ds.markets.size(), 1.0);

  for (size_t mi = 0; mi < ds.markets.size(); ++mi) {
    const auto& m = ds.markets[mi];
    const double M = m.size();
    const double E = m.expenditure_size;
    std::map<int, double> group_vol, group_rev;
    std::map<int, int> group_members;
    double tot_vol = 0, tot_rev = 0;
    for (int i = m.obs_begin; i < m.obs_end; ++i) {
      const auto& o = ds.observations[static_cast<size_t>(i)];
      int g = ds.products[static_cast<size_t>(o.product)].group;
      group_vol[g] += o.volume;
      group_rev[g] += o.volume * o.price;
      group_members[g] += 1;
      tot_vol += o.volume;
      tot_rev += o.volume * o.price;
    }
    for (const auto& [g, members] : group_members) {
      if (members > 0 && group_vol[g] <= 0.0)
        throw_data(errc::zero_group_share,
                   "group '" + ds.groups[static_cast<size_t>(g)] + "' in market (" +
                       ds.regions[static_cast<size_t>(m.region)] + ", " +
                       std::to_string(ds.periods[static_cast<size_t>(m.period_ix)]) +
                       ") has zero total volume with " + std::to_string(members) +
                       " member(s)");
    }
    for (int i = m.obs_begin; i < m.obs_end; ++i) {
      const auto& o = ds.observations[static_cast<size_t>(i)];
      int g = ds.products[static_cast<size_t>(o.product)].group;
      out.share[static_cast<size_t>(i)] = o.volume / M;
      out.within_share[static_cast<size_t>(i)] = o.volume / group_vol[g];
      double rev = o.volume * o.price;
      out.rev_share[static_cast<size_t>(i)] = E > 0 ? rev / E : 0.0;
      out.rev_within_share[static_cast<size_t>(i)] =
          group_rev[g] > 0 ? rev / group_rev[g] : 0.0;
    }
    out.outside_share[mi] = 1.0 - tot_vol / M;
    out.rev_outside_share[mi] = E > 0 ? 1.0 - tot_rev / E : 1.0;
  }
  out.has_shares = true;
  return out;
}

std::string serialize_panel(const PanelDataset& ds) {
  std::string s =
      "product_id,firm_id,brand_id,group_id,is_cold,region_id,period,price,"
      "volume,adv_raw,news_raw\n";
  for (const auto& o : ds.observations) {
    const auto& p = ds.products[static_cast<size_t>(o.product)];
    s += p.product_id;
    s += ',';
    s += p.firm_id;
    s += ',';
    s += p.brand_id;
    s += ',';
    s += p.group_id;
    s += ',';
    s += p.is_cold ? '1' : '0';
    s += ',';
    s += ds.regions[static_cast<size_t>(o.region)];
    s += ',';
    s += std::to_string(ds.periods[static_cast<size_t>(o.period_ix)]);
    s += ',';
    s += format_double(o.price);
    s += ',';
    s += format_double(o.volume);
    s += ',';
    s += format_double(o.adv_raw);
    s += ',';
    s += format_double(o.news_raw);
    s += '\n';
  }
  return s;
}

std::string serialize_markets(const PanelDataset& ds) {
  std::string s = "region_id,period,population,size_unit,expenditure_size\n";
  for (const auto& m : ds.markets) {
    s += ds.regions[static_cast<size_t>(m.region)];
    s += ',';
    s += std::to_string(ds.periods[static_cast<size_t>(m.period_ix)]);
    s += ',';
    s += format_double(m.population);
    s += ',';
    s += format_double(m.size_unit);
    s += ',';
    s += format_double(m.expenditure_size);
    s += '\n';
  }
  return s;
}

}  // namespace df
