#include "demandforge/shares.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "demandforge/errors.hpp"

namespace df {

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "logit") return ModelKind::logit;
  if (s == "nested_logit") return ModelKind::nested_logit;
  if (s == "cenl") return ModelKind::cenl;
  throw_data(errc::bad_config, "unknown model kind: '" + s + "'");
}

std::string to_string(ModelKind m) {
  switch (m) {
    case ModelKind::logit: return "logit";
    case ModelKind::nested_logit: return "nested_logit";
    case ModelKind::cenl: return "cenl";
  }
  return "?";
}

static constexpr double kSigmaCap = 1.0 - 1e-6;

double UtilityParams::lambda() const {
  double s = sigma;
  if (s > kSigmaCap) s = kSigmaCap;  // evaluation needs sigma < 1
  return 1.0 - s;
}

void UtilityParams::validate() const {
  if (!(sigma >= 0.0))
    throw_numeric(errc::domain_error, "sigma must be non-negative");
  if (sigma > 1.0)
    throw_numeric(errc::domain_error, "sigma must not exceed 1");
  if (!std::isfinite(alpha) || !std::isfinite(beta1) || !std::isfinite(beta2))
    throw_numeric(errc::domain_error, "utility coefficients must be finite");
}

void MarketSnapshot::check() const {
  const int J = size();
  if (static_cast<int>(group.size()) != J ||
      static_cast<int>(price.size()) != J)
    throw_numeric(errc::domain_error, "snapshot vectors have mismatched sizes");
  for (int j = 0; j < J; ++j) {
    if (!std::isfinite(delta[j]))
      throw_numeric(errc::domain_error, "non-finite mean utility");
    if (price[j] <= 0.0)
      throw_numeric(errc::domain_error, "snapshot prices must be positive");
  }
}

ShareResult shares_from_utilities(const MarketSnapshot& snap,
                                  const UtilityParams& params) {
  params.validate();
  snap.check();
  const int J = snap.size();
  const double lam = params.lambda();

  ShareResult r;
  r.within = Eigen::VectorXd::Zero(J);
  r.group_share = Eigen::VectorXd::Zero(J);
  r.share = Eigen::VectorXd::Zero(J);
  if (J == 0) {
    r.outside = 1.0;
    return r;
  }

  int G = 0;
  for (int j = 0; j < J; ++j) G = std::max(G, snap.group[j] + 1);

  // Per-nest max subtraction before exponentiation keeps exp(delta/lam)
  // finite even when lam is tiny.
  std::vector<double> gmax(static_cast<size_t>(G),
                           -std::numeric_limits<double>::infinity());
  for (int j = 0; j < J; ++j)
    gmax[static_cast<size_t>(snap.group[j])] =
        std::max(gmax[static_cast<size_t>(snap.group[j])], snap.delta[j]);

  std::vector<double> gsum(static_cast<size_t>(G), 0.0);
  Eigen::VectorXd e(J);
  for (int j = 0; j < J; ++j) {
    int g = snap.group[j];
    e[j] = std::exp((snap.delta[j] - gmax[static_cast<size_t>(g)]) / lam);
    gsum[static_cast<size_t>(g)] += e[j];
  }

  // w_g = (1-sigma) * ln(inclusive value of nest g); outside weight is 0.
  std::vector<double> w(static_cast<size_t>(G),
                        -std::numeric_limits<double>::infinity());
  double wmax = 0.0;
  for (int g = 0; g < G; ++g) {
    if (gsum[static_cast<size_t>(g)] <= 0.0) continue;  // empty nest
    w[static_cast<size_t>(g)] =
        gmax[static_cast<size_t>(g)] + lam * std::log(gsum[static_cast<size_t>(g)]);
    wmax = std::max(wmax, w[static_cast<size_t>(g)]);
  }
  double denom = std::exp(-wmax);
  std::vector<double> gshare(static_cast<size_t>(G), 0.0);
  for (int g = 0; g < G; ++g) {
    if (!std::isfinite(w[static_cast<size_t>(g)])) continue;
    gshare[static_cast<size_t>(g)] = std::exp(w[static_cast<size_t>(g)] - wmax);
    denom += gshare[static_cast<size_t>(g)];
  }
  if (!std::isfinite(denom) || denom <= 0.0)
    throw_numeric(errc::numeric_overflow, "share denominator overflowed");
  for (int g = 0; g < G; ++g) gshare[static_cast<size_t>(g)] /= denom;
  r.outside = std::exp(-wmax) / denom;

  for (int j = 0; j < J; ++j) {
    int g = snap.group[j];
    r.within[j] = e[j] / gsum[static_cast<size_t>(g)];
    r.group_share[j] = gshare[static_cast<size_t>(g)];
    r.share[j] = r.within[j] * r.group_share[j];
  }
  return r;
}

Eigen::VectorXd invert_shares(const Eigen::VectorXd& share,
                              const Eigen::VectorXd& within, double outside,
                              double sigma) {
  const int J = static_cast<int>(share.size());
  if (within.size() != J)
    throw_numeric(errc::domain_error, "share vectors have mismatched sizes");
  if (!(outside > 0.0 && outside < 1.0))
    throw_numeric(errc::domain_error, "outside share must lie in (0,1)");
  Eigen::VectorXd delta(J);
  for (int j = 0; j < J; ++j) {
    if (!(share[j] > 0.0 && share[j] < 1.0) ||
        !(within[j] > 0.0 && within[j] <= 1.0))
      throw_numeric(errc::domain_error,
                    "shares must lie in (0,1) for inversion");
    delta[j] = std::log(share[j] / outside) - sigma * std::log(within[j]);
  }
  return delta;
}

Eigen::VectorXd demand_vector(const MarketSnapshot& snap,
                              const UtilityParams& params) {
  ShareResult s = shares_from_utilities(snap, params);
  if (snap.model == ModelKind::cenl)
    return s.share.cwiseQuotient(snap.price);
  return s.share;
}

Eigen::MatrixXd share_price_jacobian(const MarketSnapshot& snap,
                                     const UtilityParams& params) {
  const int J = snap.size();
  ShareResult s = shares_from_utilities(snap, params);
  const double lam = params.lambda();
  const double sig = 1.0 - lam;
  const double a = params.alpha;
  Eigen::MatrixXd jac(J, J);

  if (snap.model != ModelKind::cenl) {
    // d s_j / d p_k = alpha * (D1 s_j/lam - (sig/lam) s_j s_{k|g} D2 - s_j s_k)
    for (int j = 0; j < J; ++j) {
      for (int k = 0; k < J; ++k) {
        double v = -s.share[j] * s.share[k];
        if (snap.group[j] == snap.group[k]) {
          v -= (sig / lam) * s.share[j] * s.within[k];
          if (j == k) v += s.share[j] / lam;
        }
        jac(j, k) = a * v;
      }
    }
    return jac;
  }

  // CENL: demand is q_j = E * stilde_j / p_j per unit of expenditure. The
  // derivative picks up the ln(price) chain rule and, on the diagonal, the
  // -stilde_j/p_j^2 term.
  for (int j = 0; j < J; ++j) {
    for (int k = 0; k < J; ++k) {
      double v = -s.share[j] * s.share[k];
      if (snap.group[j] == snap.group[k]) {
        v -= (sig / lam) * s.share[j] * s.within[k];
        if (j == k) v += s.share[j] / lam;
      }
      double ds_dpk = a * v / snap.price[k];  // d stilde_j / d p_k
      jac(j, k) = ds_dpk / snap.price[j];
      if (j == k) jac(j, k) -= s.share[j] / (snap.price[j] * snap.price[j]);
    }
  }
  return jac;
}

Eigen::VectorXd outside_share_price_gradient(const MarketSnapshot& snap,
                                             const UtilityParams& params) {
  ShareResult s = shares_from_utilities(snap, params);
  const int J = snap.size();
  Eigen::VectorXd g(J);
  for (int k = 0; k < J; ++k) {
    double dd = -params.alpha * s.outside * s.share[k];
    if (snap.model == ModelKind::cenl) dd /= snap.price[k];
    g[k] = dd;
  }
  return g;
}

MarketSnapshot snapshot_for_market(const PanelDataset& ds, int market,
                                   double sigma, ModelKind model,
                                   std::vector<int>* obs_index) {
  if (!ds.has_shares)
    throw_numeric(errc::domain_error, "dataset has no computed shares");
  const auto& m = ds.markets[static_cast<size_t>(market)];
  const bool cenl = (model == ModelKind::cenl);

  MarketSnapshot snap;
  snap.model = model;
  snap.market_size = cenl ? m.expenditure_size : m.size();
  std::vector<double> share, within;
  for (int i = m.obs_begin; i < m.obs_end; ++i) {
    const auto& o = ds.observations[static_cast<size_t>(i)];
    if (o.volume <= 0.0) continue;  // zero sales carry no utility signal
    snap.product.push_back(o.product);
    snap.group.push_back(ds.products[static_cast<size_t>(o.product)].group);
    snap.firm.push_back(ds.products[static_cast<size_t>(o.product)].firm);
    share.push_back(cenl ? ds.rev_share[static_cast<size_t>(i)]
                         : ds.share[static_cast<size_t>(i)]);
    within.push_back(cenl ? ds.rev_within_share[static_cast<size_t>(i)]
                          : ds.within_share[static_cast<size_t>(i)]);
    snap.price.conservativeResize(snap.price.size() + 1);
    snap.price[snap.price.size() - 1] = o.price;
    if (obs_index) obs_index->push_back(i);
  }
  const int J = static_cast<int>(share.size());
  Eigen::VectorXd sv = Eigen::Map<Eigen::VectorXd>(share.data(), J);
  Eigen::VectorXd wv = Eigen::Map<Eigen::VectorXd>(within.data(), J);
  double outside = cenl ? ds.rev_outside_share[static_cast<size_t>(market)]
                        : ds.outside_share[static_cast<size_t>(market)];
  snap.delta = J > 0 ? invert_shares(sv, wv, outside, sigma)
                     : Eigen::VectorXd(0);
  return snap;
}

}  // namespace df
