#include "demandforge/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "demandforge/errors.hpp"

namespace df {

FeScheme fe_scheme_from_string(const std::string& s) {
  if (s == "product_time_region") return FeScheme::product_time_region;
  if (s == "product_market") return FeScheme::product_market;
  throw_data(errc::bad_config, "unknown fe scheme: '" + s + "'");
}

std::string to_string(FeScheme f) {
  return f == FeScheme::product_time_region ? "product_time_region"
                                            : "product_market";
}

double DemandEstimate::coefficient(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return coef[static_cast<Eigen::Index>(i)];
  throw_numeric(errc::domain_error, "estimate has no coefficient '" + name + "'");
}

bool DemandEstimate::has(const std::string& name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

double DemandEstimate::se_of(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return se[static_cast<Eigen::Index>(i)];
  throw_numeric(errc::domain_error, "estimate has no coefficient '" + name + "'");
}

UtilityParams DemandEstimate::params() const {
  UtilityParams p;
  p.model = model;
  p.alpha = alpha();
  p.sigma = sigma();
  p.beta1 = beta1();
  p.beta2 = beta2();
  return p;
}

InstrumentSet build_instruments(const PanelDataset& ds, const DemandSpec& spec) {
  const size_t n = ds.observations.size();
  const size_t P = ds.products.size();
  const size_t T = ds.periods.size();

  bool want_entry =
      spec.adv_endogenous ||
      std::find(spec.instruments.begin(), spec.instruments.end(),
                "rival_entry") != spec.instruments.end();
  std::vector<std::string> names = spec.instruments;
  if (want_entry && std::find(names.begin(), names.end(), "rival_entry") == names.end())
    names.push_back("rival_entry");
  for (const auto& nm : names)
    if (nm != "hausman_price" && nm != "rival_count" && nm != "rival_entry")
      throw_data(errc::bad_config, "unknown instrument '" + nm + "'");

  // price sums per (product, period) across regions, for the leave-one-out mean
  std::vector<double> price_sum(P * T, 0.0);
  std::vector<int> price_cnt(P * T, 0);
  for (const auto& o : ds.observations) {
    if (o.price <= 0.0) continue;
    size_t key = static_cast<size_t>(o.product) * T + static_cast<size_t>(o.period_ix);
    price_sum[key] += o.price;
    price_cnt[key] += 1;
  }

  // national first appearance per product; entrants at the sample start are
  // incumbents, not entries
  std::vector<int> first_period(P, std::numeric_limits<int>::max());
  for (const auto& o : ds.observations)
    first_period[static_cast<size_t>(o.product)] =
        std::min(first_period[static_cast<size_t>(o.product)], o.period_ix);
  int min_period = std::numeric_limits<int>::max();
  for (size_t p = 0; p < P; ++p) min_period = std::min(min_period, first_period[p]);

  // entries per (firm, period): products of that firm first appearing then
  std::map<std::pair<int, int>, int> firm_entries;
  std::map<int, int> total_entries;
  for (size_t p = 0; p < P; ++p) {
    if (first_period[p] == std::numeric_limits<int>::max() ||
        first_period[p] == min_period)
      continue;
    firm_entries[{ds.products[p].firm, first_period[p]}] += 1;
    total_entries[first_period[p]] += 1;
  }

  InstrumentSet out;
  out.names = names;
  out.columns = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                      static_cast<Eigen::Index>(names.size()));
  out.valid.assign(n, 1);

  bool want_count = std::find(names.begin(), names.end(), "rival_count") != names.end();

  // same-group per-market counts by firm, via market spans
  for (size_t mi = 0; mi < ds.markets.size() && want_count; ++mi) {
    const auto& m = ds.markets[mi];
    std::map<int, int> group_count;
    std::map<std::pair<int, int>, int> group_firm_count;
    for (int i = m.obs_begin; i < m.obs_end; ++i) {
      const auto& meta =
          ds.products[static_cast<size_t>(ds.observations[static_cast<size_t>(i)].product)];
      group_count[meta.group] += 1;
      group_firm_count[{meta.group, meta.firm}] += 1;
    }
    int col = -1;
    for (size_t c = 0; c < names.size(); ++c)
      if (names[c] == "rival_count") col = static_cast<int>(c);
    for (int i = m.obs_begin; i < m.obs_end; ++i) {
      const auto& meta =
          ds.products[static_cast<size_t>(ds.observations[static_cast<size_t>(i)].product)];
      out.columns(i, col) = group_count[meta.group] -
                            group_firm_count[{meta.group, meta.firm}];
    }
  }

  for (size_t i = 0; i < n; ++i) {
    const auto& o = ds.observations[i];
    const auto& meta = ds.products[static_cast<size_t>(o.product)];
    for (size_t c = 0; c < names.size(); ++c) {
      if (names[c] == "hausman_price") {
        size_t key = static_cast<size_t>(o.product) * T + static_cast<size_t>(o.period_ix);
        int cnt = price_cnt[key] - (o.price > 0.0 ? 1 : 0);
        double sum = price_sum[key] - (o.price > 0.0 ? o.price : 0.0);
        if (cnt <= 0) {
          out.valid[i] = 0;
          ++out.n_hausman_missing;
        } else {
          out.columns(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
              sum / cnt;
        }
      } else if (names[c] == "rival_entry") {
        auto it = total_entries.find(o.period_ix);
        int tot = it == total_entries.end() ? 0 : it->second;
        auto fit = firm_entries.find({meta.firm, o.period_ix});
        int own = fit == firm_entries.end() ? 0 : fit->second;
        out.columns(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
            tot - own;
      }
    }
  }
  return out;
}

namespace {

std::vector<int> compact_codes(const std::vector<int>& raw, int* n_levels) {
  std::map<int, int> remap;
  std::vector<int> out(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    auto [it, fresh] = remap.emplace(raw[i], static_cast<int>(remap.size()));
    (void)fresh;
    out[i] = it->second;
  }
  *n_levels = static_cast<int>(remap.size());
  return out;
}

struct ClusteredOls {
  Eigen::VectorXd beta;
  Eigen::VectorXd resid;
  Eigen::MatrixXd vcov;
};

ClusteredOls clustered_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const std::vector<int>& cluster, int n_clusters) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols())
    throw_numeric(errc::rank_deficient, "collinear regressors in OLS step");
  ClusteredOls r;
  r.beta = qr.solve(y);
  r.resid = y - X * r.beta;

  const int k = static_cast<int>(X.cols());
  Eigen::MatrixXd bread =
      (X.transpose() * X).ldlt().solve(Eigen::MatrixXd::Identity(k, k));
  std::map<int, Eigen::VectorXd> byc;
  for (int i = 0; i < X.rows(); ++i) {
    auto [it, fresh] = byc.emplace(cluster[static_cast<size_t>(i)],
                                   Eigen::VectorXd::Zero(k));
    (void)fresh;
    it->second += X.row(i).transpose() * r.resid[i];
  }
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
  for (const auto& [c, v] : byc) meat += v * v.transpose();
  double corr = n_clusters > 1 ? static_cast<double>(n_clusters) / (n_clusters - 1) : 1.0;
  r.vcov = corr * bread * meat * bread;
  return r;
}

}  // namespace

RegressionFrame build_regression_frame(const PanelDataset& ds,
                                       const DemandSpec& spec) {
  if (!ds.has_shares)
    throw_numeric(errc::domain_error, "estimate needs compute_shares output");
  if (!ds.has_scores)
    throw_numeric(errc::domain_error, "estimate needs attach_scores output");

  InstrumentSet iv = build_instruments(ds, spec);
  const bool nested = spec.model != ModelKind::logit;
  const bool cenl = spec.model == ModelKind::cenl;

  RegressionFrame fr;
  std::vector<int> rows;
  for (size_t i = 0; i < ds.observations.size(); ++i) {
    const auto& o = ds.observations[i];
    if (o.volume <= 0.0) {
      ++fr.dropped_zero_share;  // log-share undefined
      continue;
    }
    if (!iv.valid[i]) {
      ++fr.dropped_hausman;
      continue;
    }
    rows.push_back(static_cast<int>(i));
  }
  if (rows.empty())
    throw_numeric(errc::domain_error, "no usable estimation rows");

  const int n = static_cast<int>(rows.size());
  fr.obs = rows;

  fr.x_names = {"price"};
  if (nested) fr.x_names.push_back("ln_within_share");
  if (spec.adv_endogenous) fr.x_names.push_back("cumadv");
  fr.n_endog = static_cast<int>(fr.x_names.size());
  fr.x_names.push_back("imgscore");
  if (!spec.adv_endogenous) fr.x_names.push_back("cumadv");
  const int kx = static_cast<int>(fr.x_names.size());

  fr.z_names = iv.names;
  fr.n_excluded = static_cast<int>(fr.z_names.size());
  const int n_exog = kx - fr.n_endog;
  if (fr.n_excluded < fr.n_endog)
    throw_data(errc::bad_config, "need at least as many instruments as endogenous regressors");

  fr.y.resize(n);
  fr.X.resize(n, kx);
  fr.Z.resize(n, fr.n_excluded + n_exog);

  for (int r = 0; r < n; ++r) {
    size_t i = static_cast<size_t>(rows[static_cast<size_t>(r)]);
    const auto& o = ds.observations[i];
    int mi = ds.market_index(o.region, o.period_ix);
    double s = cenl ? ds.rev_share[i] : ds.share[i];
    double s0 = cenl ? ds.rev_outside_share[static_cast<size_t>(mi)]
                     : ds.outside_share[static_cast<size_t>(mi)];
    double within = cenl ? ds.rev_within_share[i] : ds.within_share[i];
    if (!(s > 0.0) || !(s0 > 0.0) || !(within > 0.0))
      throw_numeric(errc::domain_error, "non-positive share on a positive-volume row");
    fr.y[r] = std::log(s / s0);

    int c = 0;
    fr.X(r, c++) = cenl ? std::log(o.price) : o.price;
    if (nested) fr.X(r, c++) = std::log(within);
    if (spec.adv_endogenous) fr.X(r, c++) = ds.cumadv[i];
    fr.X(r, c++) = ds.imgscore[i];
    if (!spec.adv_endogenous) fr.X(r, c++) = ds.cumadv[i];

    for (int zc = 0; zc < fr.n_excluded; ++zc) {
      double v = iv.columns(static_cast<Eigen::Index>(i), zc);
      if (fr.z_names[static_cast<size_t>(zc)] == "hausman_price" && cenl)
        v = std::log(v);
      fr.Z(r, zc) = v;
    }
    fr.cluster.push_back(mi);
  }
  fr.Z.rightCols(n_exog) = fr.X.rightCols(n_exog);

  std::set<int> uniq(fr.cluster.begin(), fr.cluster.end());
  fr.n_clusters = static_cast<int>(uniq.size());

  // absorption factors
  std::vector<int> prod_raw(static_cast<size_t>(n)), per_raw(static_cast<size_t>(n)),
      reg_raw(static_cast<size_t>(n)), mkt_raw(static_cast<size_t>(n)),
      cold_raw(static_cast<size_t>(n));
  for (int r = 0; r < n; ++r) {
    size_t i = static_cast<size_t>(rows[static_cast<size_t>(r)]);
    const auto& o = ds.observations[i];
    const auto& meta = ds.products[static_cast<size_t>(o.product)];
    prod_raw[static_cast<size_t>(r)] = o.product;
    per_raw[static_cast<size_t>(r)] = o.period_ix;
    reg_raw[static_cast<size_t>(r)] = o.region;
    mkt_raw[static_cast<size_t>(r)] = fr.cluster[static_cast<size_t>(r)];
    cold_raw[static_cast<size_t>(r)] =
        meta.is_cold ? 1 + ds.month_of(o.period_ix) : 0;
  }
  auto add_factor = [&](const std::string& name, const std::vector<int>& raw) {
    int levels = 0;
    fr.fe.codes.push_back(compact_codes(raw, &levels));
    fr.fe.n_levels.push_back(levels);
    fr.fe.names.push_back(name);
  };
  add_factor("product", prod_raw);
  if (spec.fe == FeScheme::product_time_region) {
    add_factor("time", per_raw);
    add_factor("region", reg_raw);
  } else {
    add_factor("market", mkt_raw);
  }
  if (spec.cold_month_interactions) add_factor("cold_month", cold_raw);

  return fr;
}

namespace {

Eigen::MatrixXd cluster_meat(const Eigen::MatrixXd& Z, const Eigen::VectorXd& u,
                             const std::vector<int>& cluster) {
  const int q = static_cast<int>(Z.cols());
  std::map<int, Eigen::VectorXd> byc;
  for (int i = 0; i < Z.rows(); ++i) {
    auto [it, fresh] = byc.emplace(cluster[static_cast<size_t>(i)],
                                   Eigen::VectorXd::Zero(q));
    (void)fresh;
    it->second += Z.row(i).transpose() * u[i];
  }
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(q, q);
  for (const auto& [c, v] : byc) S += v * v.transpose();
  return S;
}

double sw_f_statistic(const Eigen::MatrixXd& Xe, int e,
                      const Eigen::MatrixXd& Zex, const Eigen::MatrixXd& Wex,
                      const std::vector<int>& cluster, int n_clusters) {
  const int n = static_cast<int>(Xe.rows());
  const int E = static_cast<int>(Xe.cols());
  const int q = static_cast<int>(Zex.cols());
  const int m = static_cast<int>(Wex.cols());

  Eigen::MatrixXd ZW(n, q + m);
  ZW << Zex, Wex;

  // residualize x_e on the other endogenous regressors' reduced-form fits
  Eigen::VectorXd target = Xe.col(e);
  if (E > 1) {
    Eigen::MatrixXd fits(n, E - 1 + m);
    int at = 0;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_zw(ZW);
    for (int l = 0; l < E; ++l) {
      if (l == e) continue;
      fits.col(at++) = ZW * qr_zw.solve(Xe.col(l));
    }
    if (m > 0) fits.rightCols(m) = Wex;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_f(fits);
    target -= fits * qr_f.solve(target);
  }

  ClusteredOls fs = clustered_ols(ZW, target, cluster, n_clusters);
  Eigen::VectorXd b = fs.beta.head(q);
  Eigen::MatrixXd Vq = fs.vcov.topLeftCorner(q, q);
  Eigen::LDLT<Eigen::MatrixXd> ld(Vq);
  if (ld.info() != Eigen::Success)
    throw_numeric(errc::rank_deficient, "singular covariance in first-stage F");
  double wald = b.dot(ld.solve(b));
  int dof = q - (E - 1);
  if (dof <= 0)
    throw_numeric(errc::rank_deficient, "too few instruments for first-stage F");
  return wald / dof;
}

}  // namespace

Eigen::VectorXd ols_coefficients(const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd& y) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols())
    throw_numeric(errc::rank_deficient, "collinear regressors");
  return qr.solve(y);
}

Eigen::VectorXd tsls_coefficients(const Eigen::MatrixXd& X,
                                  const Eigen::MatrixXd& Z,
                                  const Eigen::VectorXd& y) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_z(Z);
  if (qr_z.rank() < Z.cols())
    throw_numeric(errc::rank_deficient, "collinear instruments");
  Eigen::MatrixXd Xhat = Z * qr_z.solve(X);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_xh(Xhat);
  if (qr_xh.rank() < X.cols())
    throw_numeric(errc::rank_deficient,
                  "regressors collinear (projected design is rank deficient)");
  return qr_xh.solve(y);
}

GmmResult two_step_gmm(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                       const Eigen::VectorXd& y, const std::vector<int>& cluster,
                       DemandSpec::Weighting weighting) {
  const int kx = static_cast<int>(X.cols());
  const int kz = static_cast<int>(Z.cols());

  Eigen::VectorXd b1 = tsls_coefficients(X, Z, y);
  Eigen::VectorXd u1 = y - X * b1;

  Eigen::MatrixXd G = Z.transpose() * X;
  Eigen::VectorXd Zy = Z.transpose() * y;
  Eigen::MatrixXd W;
  if (weighting == DemandSpec::Weighting::clustered) {
    Eigen::MatrixXd S1 = cluster_meat(Z, u1, cluster);
    Eigen::LDLT<Eigen::MatrixXd> ld(S1);
    if (ld.info() != Eigen::Success)
      throw_numeric(errc::rank_deficient, "singular GMM weight matrix");
    W = ld.solve(Eigen::MatrixXd::Identity(kz, kz));
  } else {
    W = (Z.transpose() * Z).ldlt().solve(Eigen::MatrixXd::Identity(kz, kz));
  }
  Eigen::MatrixXd GWG = G.transpose() * W * G;
  Eigen::LDLT<Eigen::MatrixXd> gwg(GWG);
  if (gwg.info() != Eigen::Success)
    throw_numeric(errc::rank_deficient, "GMM normal equations singular");

  GmmResult r;
  r.coef = gwg.solve(G.transpose() * W * Zy);
  r.residuals = y - X * r.coef;

  std::set<int> uniq(cluster.begin(), cluster.end());
  int n_clusters = static_cast<int>(uniq.size());
  Eigen::MatrixXd S2 = cluster_meat(Z, r.residuals, cluster);
  double corr =
      n_clusters > 1 ? static_cast<double>(n_clusters) / (n_clusters - 1) : 1.0;
  Eigen::MatrixXd bread = gwg.solve(Eigen::MatrixXd::Identity(kx, kx));
  Eigen::MatrixXd mid = G.transpose() * W * S2 * W * G;
  r.vcov = corr * bread * mid * bread;
  r.se = r.vcov.diagonal().cwiseMax(0.0).cwiseSqrt();

  Eigen::VectorXd foc = G.transpose() * W * (Z.transpose() * r.residuals);
  Eigen::VectorXd foc_scale = G.transpose() * W * Zy;
  r.foc = foc.cwiseAbs().maxCoeff() / (1.0 + foc_scale.cwiseAbs().maxCoeff());
  return r;
}

DemandEstimate estimate(const PanelDataset& ds, const DemandSpec& spec) {
  RegressionFrame fr = build_regression_frame(ds, spec);
  const int n = static_cast<int>(fr.y.size());
  const int kx = static_cast<int>(fr.X.cols());
  const int kz = static_cast<int>(fr.Z.cols());

  // absorb fixed effects from y, X, Z in one pass
  Eigen::MatrixXd all(n, 1 + kx + kz);
  all.col(0) = fr.y;
  all.middleCols(1, kx) = fr.X;
  all.rightCols(kz) = fr.Z;
  absorb_fixed_effects(all, fr.fe, spec.fe_tol, spec.max_fe_sweeps);
  Eigen::VectorXd yt = all.col(0);
  Eigen::MatrixXd Xt = all.middleCols(1, kx);
  Eigen::MatrixXd Zt = all.rightCols(kz);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_z(Zt);
  if (qr_z.rank() < kz)
    throw_numeric(errc::rank_deficient,
                  "instruments collinear after fixed-effect absorption");

  GmmResult gmm = two_step_gmm(Xt, Zt, yt, fr.cluster, spec.weighting);

  DemandEstimate est;
  est.model = spec.model;
  est.regressors = fr.x_names;
  for (const auto& nm : fr.x_names) {
    if (nm == "price") est.names.push_back("alpha");
    else if (nm == "ln_within_share") est.names.push_back("sigma");
    else if (nm == "imgscore") est.names.push_back("beta1");
    else if (nm == "cumadv") est.names.push_back("beta2");
    else est.names.push_back(nm);
  }
  est.coef = gmm.coef;
  est.vcov = gmm.vcov;
  est.se = gmm.se;
  est.residuals = gmm.residuals;
  est.obs = fr.obs;
  est.n_obs = n;
  est.n_clusters = fr.n_clusters;
  est.dropped_zero_share = fr.dropped_zero_share;
  est.dropped_hausman = fr.dropped_hausman;
  est.endogenous.assign(fr.x_names.begin(), fr.x_names.begin() + fr.n_endog);
  est.gmm_foc = gmm.foc;

  Eigen::MatrixXd Xe = Xt.leftCols(fr.n_endog);
  Eigen::MatrixXd Zex = Zt.leftCols(fr.n_excluded);
  Eigen::MatrixXd Wex = Xt.rightCols(kx - fr.n_endog);
  for (int e = 0; e < fr.n_endog; ++e) {
    double f = sw_f_statistic(Xe, e, Zex, Wex, fr.cluster, fr.n_clusters);
    est.sw_f.push_back(f);
    if (f < 10.0)
      est.warnings.push_back("WeakIdentification: SW F for " +
                             fr.x_names[static_cast<size_t>(e)] + " is " +
                             std::to_string(f));
  }
  if (est.has("sigma")) {
    double s = est.sigma();
    if (s < 0.0 || s >= 1.0)
      est.warnings.push_back("sigma estimate " + std::to_string(s) +
                             " lies outside [0,1)");
  }
  return est;
}

FirstStageReport first_stage_report(const PanelDataset& ds,
                                    const DemandSpec& spec) {
  RegressionFrame fr = build_regression_frame(ds, spec);
  const int n = static_cast<int>(fr.y.size());
  const int kx = static_cast<int>(fr.X.cols());
  const int kz = static_cast<int>(fr.Z.cols());

  Eigen::MatrixXd all(n, kx + kz);
  all.leftCols(kx) = fr.X;
  all.rightCols(kz) = fr.Z;
  absorb_fixed_effects(all, fr.fe, spec.fe_tol, spec.max_fe_sweeps);
  Eigen::MatrixXd Xt = all.leftCols(kx);
  Eigen::MatrixXd Zt = all.rightCols(kz);

  FirstStageReport rep;
  rep.n_obs = n;
  rep.n_clusters = fr.n_clusters;
  std::vector<std::string> reg_names(fr.z_names);
  for (int c = fr.n_endog; c < kx; ++c)
    reg_names.push_back(fr.x_names[static_cast<size_t>(c)]);

  for (int e = 0; e < fr.n_endog; ++e) {
    ClusteredOls ols = clustered_ols(Zt, Xt.col(e), fr.cluster, fr.n_clusters);
    FirstStageColumn col;
    col.endogenous = fr.x_names[static_cast<size_t>(e)];
    col.regressor = reg_names;
    col.coef = ols.beta;
    col.se = ols.vcov.diagonal().cwiseMax(0.0).cwiseSqrt();
    rep.columns.push_back(std::move(col));
  }
  return rep;
}

}  // namespace df
