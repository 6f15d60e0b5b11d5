// Independent re-implementations used as test oracles. Everything here is
// deliberately naive and kept free of the library's computation paths.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "demandforge/panel.hpp"
#include "demandforge/shares.hpp"

namespace oracle {

// Plain-formula nested-logit shares: no max subtraction, direct sums.
struct NaiveShares {
  std::vector<double> within, share;
  double outside;
};

inline NaiveShares naive_nested_shares(const std::vector<double>& delta,
                                       const std::vector<int>& group,
                                       double sigma) {
  const double lam = 1.0 - sigma;
  int G = 0;
  for (int g : group) G = std::max(G, g + 1);
  std::vector<double> iv(static_cast<size_t>(G), 0.0);
  for (size_t j = 0; j < delta.size(); ++j)
    iv[static_cast<size_t>(group[j])] += std::exp(delta[j] / lam);
  double denom = 1.0;
  for (int g = 0; g < G; ++g)
    if (iv[static_cast<size_t>(g)] > 0.0)
      denom += std::pow(iv[static_cast<size_t>(g)], lam);
  NaiveShares out;
  out.outside = 1.0 / denom;
  for (size_t j = 0; j < delta.size(); ++j) {
    double ivg = iv[static_cast<size_t>(group[j])];
    double w = std::exp(delta[j] / lam) / ivg;
    out.within.push_back(w);
    out.share.push_back(w * std::pow(ivg, lam) / denom);
  }
  return out;
}

// Spreadsheet-style decay accumulation: explicit per-cell weight table.
inline std::vector<double> spreadsheet_decay(const std::vector<double>& raw,
                                             double delta, int k,
                                             bool geometric) {
  std::vector<double> out(raw.size(), 0.0);
  for (size_t t = 0; t < raw.size(); ++t) {
    for (int n = 0; n <= k; ++n) {
      if (static_cast<int>(t) - n < 0) break;
      double w = geometric ? std::pow(1.0 - delta, n) : (1.0 - n * delta);
      out[t] += w * raw[t - static_cast<size_t>(n)];
    }
  }
  return out;
}

// Central finite differences of a share-type map p -> f(p).
template <typename F>
Eigen::MatrixXd central_jacobian(const F& f, const Eigen::VectorXd& p,
                                 double h) {
  Eigen::VectorXd f0 = f(p);
  Eigen::MatrixXd J(f0.size(), p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    Eigen::VectorXd up = p, dn = p;
    up[k] += h;
    dn[k] -= h;
    J.col(k) = (f(up) - f(dn)) / (2.0 * h);
  }
  return J;
}

// Dense-dummy 2SLS: projects y on X through Z where both X and Z are extended
// with explicit fixed-effect dummy columns. Returns the structural block.
// Complete orthogonal decompositions keep the projections exact even when the
// dummy block carries redundant columns.
inline Eigen::VectorXd dense_dummy_2sls(const Eigen::MatrixXd& X,
                                        const Eigen::MatrixXd& Z,
                                        const Eigen::VectorXd& y,
                                        const Eigen::MatrixXd& dummies) {
  const Eigen::Index kx = X.cols();
  Eigen::MatrixXd Xd(X.rows(), kx + dummies.cols());
  Xd << X, dummies;
  Eigen::MatrixXd Zd(Z.rows(), Z.cols() + dummies.cols());
  Zd << Z, dummies;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> qz(Zd);
  Eigen::MatrixXd Xhat = Zd * qz.solve(Xd);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> qx(Xhat);
  Eigen::VectorXd beta = qx.solve(y);
  return beta.head(kx);
}

inline Eigen::VectorXd dense_dummy_ols(const Eigen::MatrixXd& X,
                                       const Eigen::VectorXd& y,
                                       const Eigen::MatrixXd& dummies) {
  return dense_dummy_2sls(X, X, y, dummies);
}

// Tiny panel fixture: two regions, two periods, three products in two groups.
inline df::PanelDataset small_panel() {
  std::string panel =
      "product_id,firm_id,brand_id,group_id,is_cold,region_id,period,price,"
      "volume,adv_raw,news_raw\n"
      "P1,F1,B1,red,0,A,1,1.5,20,100,3\n"
      "P2,F1,B2,red,0,A,1,1.2,10,50,3\n"
      "P3,F2,B3,cold,1,A,1,2.0,5,80,1\n"
      "P1,F1,B1,red,0,B,1,1.6,15,100,3\n"
      "P2,F1,B2,red,0,B,1,1.1,12,50,3\n"
      "P3,F2,B3,cold,1,B,1,2.1,6,80,1\n"
      "P1,F1,B1,red,0,A,2,1.4,22,90,4\n"
      "P2,F1,B2,red,0,A,2,1.3,9,40,4\n"
      "P3,F2,B3,cold,1,A,2,2.2,7,70,2\n"
      "P1,F1,B1,red,0,B,2,1.5,18,90,4\n"
      "P2,F1,B2,red,0,B,2,1.2,11,40,4\n"
      "P3,F2,B3,cold,1,B,2,2.3,5,70,2\n";
  std::string markets =
      "region_id,period,population,size_unit,expenditure_size\n"
      "A,1,10,10,200\n"
      "A,2,10,10,200\n"
      "B,1,12,10,220\n"
      "B,2,12,10,220\n";
  return df::parse_panel(panel, markets, "fixture");
}

}  // namespace oracle
