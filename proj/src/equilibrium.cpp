#include "demandforge/equilibrium.hpp"

#include <cmath>
#include <limits>

#include "demandforge/csv.hpp"
#include "demandforge/errors.hpp"

namespace df {

Eigen::MatrixXd ownership_matrix(const std::vector<int>& firm) {
  const int J = static_cast<int>(firm.size());
  Eigen::MatrixXd omega(J, J);
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < J; ++k)
      omega(j, k) = firm[static_cast<size_t>(j)] == firm[static_cast<size_t>(k)] ? 1.0 : 0.0;
  return omega;
}

namespace {

// Utilities re-based to prices p: the price term moves with alpha * (p - p_ref)
// (alpha * (ln p - ln p_ref) under CENL); everything else is frozen.
MarketSnapshot at_prices(const MarketSnapshot& ref, const UtilityParams& params,
                         const Eigen::VectorXd& delta_cf,
                         const Eigen::VectorXd& p) {
  MarketSnapshot snap = ref;
  snap.price = p;
  if (ref.model == ModelKind::cenl)
    snap.delta = delta_cf.array() +
                 params.alpha * (p.array().log() - ref.price.array().log());
  else
    snap.delta = delta_cf.array() + params.alpha * (p.array() - ref.price.array());
  return snap;
}

// A = Omega o (grad_p d)^T, the firm-FOC system matrix: A(j,k) =
// Omega(j,k) * d d_k / d p_j.
Eigen::MatrixXd foc_matrix(const MarketSnapshot& snap,
                           const UtilityParams& params,
                           const Eigen::MatrixXd& omega) {
  Eigen::MatrixXd jac = share_price_jacobian(snap, params);
  return omega.cwiseProduct(jac.transpose());
}

}  // namespace

CostVector recover_costs(const MarketSnapshot& snap, const UtilityParams& params,
                         const Eigen::MatrixXd& omega) {
  snap.check();
  const int J = snap.size();
  if (omega.rows() != J || omega.cols() != J)
    throw_numeric(errc::domain_error, "ownership matrix size mismatch");

  Eigen::VectorXd d = demand_vector(snap, params);
  Eigen::MatrixXd A = foc_matrix(snap, params, omega);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible())
    throw_numeric(errc::singular_block,
                  "ownership-masked share Jacobian is singular");
  CostVector out;
  out.product = snap.product;
  out.mc = snap.price + lu.solve(d);
  for (int j = 0; j < J; ++j)
    if (out.mc[j] < 0.0)
      out.warnings.push_back("negative marginal cost " + format_double(out.mc[j]) +
                             " for product index " + std::to_string(j));
  return out;
}

double foc_residual(const MarketSnapshot& ref, const UtilityParams& params,
                    const Eigen::VectorXd& mc, const Eigen::VectorXd& delta_cf,
                    const Eigen::MatrixXd& omega, const Eigen::VectorXd& price) {
  MarketSnapshot snap = at_prices(ref, params, delta_cf, price);
  Eigen::VectorXd d = demand_vector(snap, params);
  Eigen::MatrixXd A = foc_matrix(snap, params, omega);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible())
    throw_numeric(errc::singular_block, "FOC system singular at evaluation point");
  Eigen::VectorXd resid = price - mc + lu.solve(d);
  return resid.cwiseAbs().maxCoeff();
}

BertrandSolution solve_bertrand(const MarketSnapshot& ref,
                                const UtilityParams& params,
                                const Eigen::VectorXd& mc,
                                const Eigen::VectorXd& delta_cf,
                                const Eigen::MatrixXd& omega,
                                const BertrandOptions& opts) {
  ref.check();
  const int J = ref.size();
  if (mc.size() != J || delta_cf.size() != J)
    throw_numeric(errc::domain_error, "cost/utility vector size mismatch");
  for (int j = 0; j < J; ++j)
    if (!std::isfinite(mc[j]))
      throw_numeric(errc::domain_error, "non-finite marginal cost");

  Eigen::VectorXd p = ref.price;
  double damping = opts.damping;
  double prev_step = std::numeric_limits<double>::infinity();
  double step = prev_step;

  for (int it = 1; it <= opts.max_iter; ++it) {
    MarketSnapshot snap = at_prices(ref, params, delta_cf, p);
    Eigen::VectorXd d = demand_vector(snap, params);
    Eigen::MatrixXd A = foc_matrix(snap, params, omega);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (!lu.isInvertible())
      throw_numeric(errc::singular_block, "FOC system singular during solve");
    Eigen::VectorXd target = mc - lu.solve(d);
    // keep iterates in the positive price domain (CENL takes logs)
    for (int j = 0; j < J; ++j)
      target[j] = std::max(target[j], 1e-12);
    Eigen::VectorXd p_next = p + damping * (target - p);

    step = (p_next - p).cwiseAbs().maxCoeff();
    if (step > prev_step && damping > 1.0 / 64.0) damping *= 0.5;
    prev_step = step;
    p = p_next;

    if (step < opts.tol) {
      double resid = foc_residual(ref, params, mc, delta_cf, omega, p);
      if (resid < opts.tol || it == opts.max_iter) {
        BertrandSolution sol;
        sol.price = p;
        sol.shares = shares_from_utilities(at_prices(ref, params, delta_cf, p), params);
        sol.iterations = it;
        sol.step_norm = step;
        sol.foc_residual = resid;
        if (resid >= opts.tol)
          throw_numeric(errc::no_convergence,
                        "Bertrand FOC residual " + format_double(resid) +
                            " above tolerance after " + std::to_string(it) +
                            " iterations");
        return sol;
      }
    }
  }
  double resid = foc_residual(ref, params, mc, delta_cf, omega, p);
  throw_numeric(errc::no_convergence,
                "Bertrand solver hit max iterations (" +
                    std::to_string(opts.max_iter) + "); last step " +
                    format_double(step) + ", FOC residual " +
                    format_double(resid));
}

Eigen::VectorXd regulated_prices(const Eigen::VectorXd& observed_prices) {
  return observed_prices;
}

}  // namespace df
