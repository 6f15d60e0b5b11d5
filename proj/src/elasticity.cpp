#include "demandforge/elasticity.hpp"

#include <cmath>
#include <limits>

#include "demandforge/errors.hpp"
#include "demandforge/threading.hpp"

namespace df {

ElasticityMatrix elasticities(const MarketSnapshot& snap,
                              const UtilityParams& params) {
  const int J = snap.size();
  ShareResult s = shares_from_utilities(snap, params);
  const double lam = params.lambda();
  const double sig = 1.0 - lam;
  const double a = params.alpha;
  const bool cenl = snap.model == ModelKind::cenl;

  ElasticityMatrix out;
  out.product = snap.product;
  out.eps.resize(J, J);
  for (int j = 0; j < J; ++j) {
    for (int k = 0; k < J; ++k) {
      double d1 = (j == k) ? 1.0 : 0.0;
      double d2 = (snap.group[j] == snap.group[k]) ? 1.0 : 0.0;
      double core = d1 / lam - (sig / lam) * s.within[j] * d2 - s.share[j];
      double ratio = s.share[k] / s.share[j];
      if (cenl)
        out.eps(j, k) = a * ratio * core - d1;
      else
        out.eps(j, k) = a * snap.price[k] * ratio * core;
    }
  }
  return out;
}

GroupMeanElasticities group_mean_elasticities(const PanelDataset& ds,
                                              const DemandEstimate& est,
                                              bool share_weighted) {
  if (!ds.has_shares)
    throw_numeric(errc::domain_error, "dataset has no computed shares");
  const int G = static_cast<int>(ds.groups.size());
  UtilityParams params = est.params();

  struct Cell {
    double own = 0, same = 0, other = 0;
    double w_own = 0, w_same = 0, w_other = 0;
    long long n_own = 0, n_same = 0, n_other = 0;
  };
  std::vector<std::vector<Cell>> acc(ds.markets.size(),
                                     std::vector<Cell>(static_cast<size_t>(G)));

  parallel_for(ds.markets.size(), [&](std::size_t mi) {
    MarketSnapshot snap =
        snapshot_for_market(ds, static_cast<int>(mi), params.sigma, est.model);
    const int J = snap.size();
    if (J == 0) return;
    ElasticityMatrix em = elasticities(snap, params);
    ShareResult s = shares_from_utilities(snap, params);
    for (int j = 0; j < J; ++j) {
      int g = snap.group[j];
      Cell& cell = acc[mi][static_cast<size_t>(g)];
      double w = share_weighted ? s.share[j] : 1.0;
      cell.own += w * em.eps(j, j);
      cell.w_own += w;
      cell.n_own += 1;
      for (int k = 0; k < J; ++k) {
        if (k == j) continue;
        if (snap.group[k] == g) {
          cell.same += w * em.eps(j, k);
          cell.w_same += w;
          cell.n_same += 1;
        } else {
          cell.other += w * em.eps(j, k);
          cell.w_other += w;
          cell.n_other += 1;
        }
      }
    }
  });

  GroupMeanElasticities out;
  out.group_names.assign(ds.groups.begin(), ds.groups.end());
  out.group_names.push_back("All");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.own.assign(static_cast<size_t>(G) + 1, nan);
  out.cross_same.assign(static_cast<size_t>(G) + 1, nan);
  out.cross_other.assign(static_cast<size_t>(G) + 1, nan);
  out.n_own.assign(static_cast<size_t>(G) + 1, 0);
  out.n_cross_same.assign(static_cast<size_t>(G) + 1, 0);
  out.n_cross_other.assign(static_cast<size_t>(G) + 1, 0);

  // fixed summation order: markets then groups
  std::vector<Cell> total(static_cast<size_t>(G) + 1);
  for (size_t mi = 0; mi < acc.size(); ++mi) {
    for (int g = 0; g <= G; ++g) {
      const Cell* src = nullptr;
      if (g < G) src = &acc[mi][static_cast<size_t>(g)];
      Cell& dst = total[static_cast<size_t>(g)];
      if (g == G) {
        for (int h = 0; h < G; ++h) {
          const Cell& c = acc[mi][static_cast<size_t>(h)];
          dst.own += c.own; dst.w_own += c.w_own; dst.n_own += c.n_own;
          dst.same += c.same; dst.w_same += c.w_same; dst.n_same += c.n_same;
          dst.other += c.other; dst.w_other += c.w_other; dst.n_other += c.n_other;
        }
      } else {
        dst.own += src->own; dst.w_own += src->w_own; dst.n_own += src->n_own;
        dst.same += src->same; dst.w_same += src->w_same; dst.n_same += src->n_same;
        dst.other += src->other; dst.w_other += src->w_other; dst.n_other += src->n_other;
      }
    }
  }
  for (int g = 0; g <= G; ++g) {
    const Cell& c = total[static_cast<size_t>(g)];
    if (c.w_own > 0) out.own[static_cast<size_t>(g)] = c.own / c.w_own;
    if (c.w_same > 0) out.cross_same[static_cast<size_t>(g)] = c.same / c.w_same;
    if (c.w_other > 0) out.cross_other[static_cast<size_t>(g)] = c.other / c.w_other;
    out.n_own[static_cast<size_t>(g)] = c.n_own;
    out.n_cross_same[static_cast<size_t>(g)] = c.n_same;
    out.n_cross_other[static_cast<size_t>(g)] = c.n_other;
  }
  return out;
}

}  // namespace df
