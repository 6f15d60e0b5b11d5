#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "demandforge/errors.hpp"
#include "demandforge/shares.hpp"
#include "oracles.hpp"

using df::MarketSnapshot;
using df::ModelKind;
using df::UtilityParams;

namespace {

MarketSnapshot make_snapshot(const std::vector<double>& delta,
                             const std::vector<int>& group,
                             const std::vector<double>& price,
                             ModelKind model = ModelKind::nested_logit) {
  MarketSnapshot snap;
  const int J = static_cast<int>(delta.size());
  snap.delta = Eigen::Map<const Eigen::VectorXd>(delta.data(), J);
  snap.price = Eigen::Map<const Eigen::VectorXd>(price.data(), J);
  snap.group = group;
  snap.firm.assign(static_cast<size_t>(J), 0);
  for (int j = 0; j < J; ++j) {
    snap.firm[static_cast<size_t>(j)] = j;
    snap.product.push_back(j);
  }
  snap.model = model;
  return snap;
}

UtilityParams params_with(double alpha, double sigma,
                          ModelKind model = ModelKind::nested_logit) {
  UtilityParams p;
  p.alpha = alpha;
  p.sigma = sigma;
  p.model = model;
  return p;
}

MarketSnapshot random_market(std::mt19937_64& rng, int J, int G,
                             ModelKind model = ModelKind::nested_logit) {
  std::uniform_real_distribution<double> ud(-1.5, 1.5);
  std::uniform_real_distribution<double> up(0.5, 3.0);
  std::uniform_int_distribution<int> ug(0, G - 1);
  std::vector<double> delta(static_cast<size_t>(J)), price(static_cast<size_t>(J));
  std::vector<int> group(static_cast<size_t>(J));
  for (int j = 0; j < J; ++j) {
    delta[static_cast<size_t>(j)] = ud(rng);
    price[static_cast<size_t>(j)] = up(rng);
    group[static_cast<size_t>(j)] = ug(rng);
  }
  group[0] = 0;  // keep the first group non-empty
  return make_snapshot(delta, group, price, model);
}

}  // namespace

TEST_CASE("single product at delta zero splits the market with the outside") {
  auto snap = make_snapshot({0.0}, {0}, {1.0});
  auto s = df::shares_from_utilities(snap, params_with(-1.0, 0.0));
  CHECK(s.share[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.outside == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.within[0] == doctest::Approx(1.0));
}

TEST_CASE("two zero-utility products collapse to thirds under sigma zero") {
  auto snap = make_snapshot({0.0, 0.0}, {0, 0}, {1.0, 1.0});
  auto s = df::shares_from_utilities(snap, params_with(-1.0, 0.0));
  CHECK(s.share[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(s.share[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("sigma=0.5 same-group pair: frozen inclusive-value arithmetic") {
  auto snap = make_snapshot({0.0, 0.0}, {0, 0}, {1.0, 1.0});
  auto s = df::shares_from_utilities(snap, params_with(-1.0, 0.5));
  CHECK(s.within[0] == doctest::Approx(0.5).epsilon(1e-14));
  // group inclusive value 2, group share 2^0.5 / (1 + 2^0.5)
  CHECK(s.group_share[0] == doctest::Approx(0.5857864376269049).epsilon(1e-12));
  CHECK(s.share[0] == doctest::Approx(0.29289321881345254).epsilon(1e-12));
}

TEST_CASE("sigma zero matches the multinomial logit formula") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    auto snap = random_market(rng, 6, 3);
    auto s = df::shares_from_utilities(snap, params_with(-1.0, 0.0));
    double denom = 1.0;
    for (int j = 0; j < snap.size(); ++j) denom += std::exp(snap.delta[j]);
    for (int j = 0; j < snap.size(); ++j)
      CHECK(std::abs(s.share[j] - std::exp(snap.delta[j]) / denom) < 1e-12);
    CHECK(std::abs(s.outside - 1.0 / denom) < 1e-12);
  }
}

TEST_CASE("stabilized evaluation equals the naive formula where it is safe") {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 50; ++rep) {
    auto snap = random_market(rng, 5, 2);
    for (double sigma : {0.0, 0.35, 0.8}) {
      auto got = df::shares_from_utilities(snap, params_with(-1.0, sigma));
      std::vector<double> delta(snap.delta.data(), snap.delta.data() + snap.size());
      auto want = oracle::naive_nested_shares(delta, snap.group, sigma);
      for (int j = 0; j < snap.size(); ++j) {
        CHECK(std::abs(got.share[j] - want.share[static_cast<size_t>(j)]) < 1e-14);
        CHECK(std::abs(got.within[j] - want.within[static_cast<size_t>(j)]) < 1e-14);
      }
      CHECK(std::abs(got.outside - want.outside) < 1e-14);
    }
  }
}

TEST_CASE("extreme utilities at sigma near one do not overflow") {
  auto snap = make_snapshot({40.0, 38.0, -35.0}, {0, 0, 1}, {1.0, 1.0, 1.0});
  auto s = df::shares_from_utilities(snap, params_with(-1.0, 0.94));
  double total = s.outside;
  for (int j = 0; j < 3; ++j) {
    CHECK(std::isfinite(s.share[j]));
    total += s.share[j];
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("inversion closed form at sigma zero") {
  Eigen::VectorXd share(1), within(1);
  share << 0.25;
  within << 1.0;
  Eigen::VectorXd delta = df::invert_shares(share, within, 0.5, 0.0);
  CHECK(delta[0] == doctest::Approx(std::log(0.5)).epsilon(1e-15));
}

TEST_CASE("inversion rejects zero shares") {
  Eigen::VectorXd share(1), within(1);
  share << 0.0;
  within << 1.0;
  CHECK_THROWS_AS(df::invert_shares(share, within, 0.5, 0.0), df::Error);
}

TEST_CASE("share inversion round trip across sigma values") {
  std::mt19937_64 rng(17);
  for (double sigma : {0.0, 0.5, 0.819, 0.94}) {
    for (int rep = 0; rep < 40; ++rep) {
      auto snap = random_market(rng, 5, 2);
      auto s = df::shares_from_utilities(snap, params_with(-1.0, sigma));
      Eigen::VectorXd delta = df::invert_shares(s.share, s.within, s.outside, sigma);
      for (int j = 0; j < snap.size(); ++j)
        CHECK(std::abs(delta[j] - snap.delta[j]) /
                  std::max(1.0, std::abs(snap.delta[j])) <
              1e-10);
    }
  }
}

TEST_CASE("single-product logit jacobian closed form") {
  auto snap = make_snapshot({0.4}, {0}, {1.3});
  auto p = params_with(-1.7, 0.0);
  auto s = df::shares_from_utilities(snap, p);
  Eigen::MatrixXd J = df::share_price_jacobian(snap, p);
  CHECK(J(0, 0) ==
        doctest::Approx(p.alpha * s.share[0] * (1.0 - s.share[0])).epsilon(1e-12));
}

TEST_CASE("jacobian matches central differences") {
  std::mt19937_64 rng(19);
  for (int rep = 0; rep < 25; ++rep) {
    auto snap = random_market(rng, 4, 2);
    for (double sigma : {0.0, 0.6}) {
      auto p = params_with(-0.9, sigma);
      Eigen::MatrixXd J = df::share_price_jacobian(snap, p);
      auto f = [&](const Eigen::VectorXd& price) {
        MarketSnapshot s2 = snap;
        s2.delta = snap.delta.array() + p.alpha * (price.array() - snap.price.array());
        s2.price = price;
        return df::demand_vector(s2, p);
      };
      Eigen::MatrixXd Jfd = oracle::central_jacobian(f, snap.price, 1e-6);
      CHECK((J - Jfd).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("cenl jacobian matches central differences") {
  std::mt19937_64 rng(23);
  for (int rep = 0; rep < 25; ++rep) {
    auto snap = random_market(rng, 4, 2, ModelKind::cenl);
    auto p = params_with(-0.5, 0.55, ModelKind::cenl);
    Eigen::MatrixXd J = df::share_price_jacobian(snap, p);
    auto f = [&](const Eigen::VectorXd& price) {
      MarketSnapshot s2 = snap;
      s2.delta = snap.delta.array() +
                 p.alpha * (price.array().log() - snap.price.array().log());
      s2.price = price;
      return df::demand_vector(s2, p);
    };
    Eigen::MatrixXd Jfd = oracle::central_jacobian(f, snap.price, 1e-6);
    CHECK((J - Jfd).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("cross-group jacobian entries follow the no-nest pattern") {
  auto snap = make_snapshot({0.3, -0.2}, {0, 1}, {1.0, 2.0});
  auto p = params_with(-1.1, 0.8);
  auto s = df::shares_from_utilities(snap, p);
  Eigen::MatrixXd J = df::share_price_jacobian(snap, p);
  CHECK(J(0, 1) == doctest::Approx(-p.alpha * s.share[0] * s.share[1]).epsilon(1e-12));
  CHECK(J(1, 0) == doctest::Approx(-p.alpha * s.share[0] * s.share[1]).epsilon(1e-12));
}

TEST_CASE("jacobian columns and the outside gradient sum to zero") {
  std::mt19937_64 rng(29);
  for (int rep = 0; rep < 20; ++rep) {
    auto snap = random_market(rng, 5, 2);
    auto p = params_with(-0.8, 0.7);
    Eigen::MatrixXd J = df::share_price_jacobian(snap, p);
    Eigen::VectorXd g = df::outside_share_price_gradient(snap, p);
    for (int k = 0; k < snap.size(); ++k) {
      double total = g[k] + J.col(k).sum();
      CHECK(std::abs(total) < 1e-8);
    }
  }
}

TEST_CASE("snapshot_for_market inverts observed shares") {
  df::PanelDataset ds = df::compute_shares(oracle::small_panel());
  for (int mi = 0; mi < static_cast<int>(ds.markets.size()); ++mi) {
    std::vector<int> obs;
    auto snap = df::snapshot_for_market(ds, mi, 0.5, ModelKind::nested_logit, &obs);
    auto p = params_with(-1.0, 0.5);
    auto s = df::shares_from_utilities(snap, p);
    for (size_t j = 0; j < obs.size(); ++j)
      CHECK(s.share[static_cast<Eigen::Index>(j)] ==
            doctest::Approx(ds.share[static_cast<size_t>(obs[j])]).epsilon(1e-10));
    CHECK(s.outside ==
          doctest::Approx(ds.outside_share[static_cast<size_t>(mi)]).epsilon(1e-10));
  }
}

TEST_CASE("sigma outside [0,1] rejected for evaluation") {
  auto snap = make_snapshot({0.0}, {0}, {1.0});
  CHECK_THROWS_AS(df::shares_from_utilities(snap, params_with(-1.0, -0.1)),
                  df::Error);
  CHECK_THROWS_AS(df::shares_from_utilities(snap, params_with(-1.0, 1.5)),
                  df::Error);
  // exactly 1 is clamped, not rejected
  auto s = df::shares_from_utilities(snap, params_with(-1.0, 1.0));
  CHECK(std::isfinite(s.share[0]));
}
