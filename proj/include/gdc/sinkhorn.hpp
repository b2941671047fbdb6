#pragma once

// Entropic optimal transport between two uniform point clouds with Euclidean
// ground cost, used as a differentiable stand-in for Wasserstein-1.

#include "gdc/autodiff.hpp"

#include <cmath>
#include <limits>

namespace gdc {

struct SinkhornConfig {
  double epsilon = 0.1;
  int max_iters = 200;
  double convergence_tol = 1e-6;
  int max_points_per_group = 512;

  void validate() const {
    if (!(epsilon > 0.0) || max_iters <= 0 || !(convergence_tol > 0.0) || max_points_per_group <= 0) {
      throw ArgumentError("sinkhorn settings must all be positive");
    }
  }
};

struct SinkhornResult {
  double cost = 0.0;
  Matrix plan;       // m x n, rows sum to ~1/m, columns to ~1/n
  Matrix distances;  // m x n ground cost
  int iterations = 0;
  double marginal_error = 0.0;
};

inline Matrix pairwise_distances(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ValidationError("point sets have different dimensions");
  const Vector na = a.rowwise().squaredNorm();
  const Vector nb = b.rowwise().squaredNorm();
  Matrix sq = -2.0 * a * b.transpose();
  sq.colwise() += na;
  sq.rowwise() += nb.transpose();
  return sq.cwiseMax(0.0).cwiseSqrt();
}

namespace sinkhorn_detail {

// Soft-min of (potential - cost) along rows: -eps * log sum_j exp((g_j - C_ij)/eps) + eps*log(w).
inline Vector soft_update(const Matrix& cost, const Vector& other, double eps, double log_weight, bool along_rows) {
  const long count = along_rows ? cost.rows() : cost.cols();
  Vector out(count);
  for (long i = 0; i < count; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    const long len = along_rows ? cost.cols() : cost.rows();
    for (long j = 0; j < len; ++j) {
      const double c = along_rows ? cost(i, j) : cost(j, i);
      mx = std::max(mx, (other[j] - c) / eps);
    }
    double s = 0.0;
    for (long j = 0; j < len; ++j) {
      const double c = along_rows ? cost(i, j) : cost(j, i);
      s += std::exp((other[j] - c) / eps - mx);
    }
    out[i] = eps * log_weight - eps * (mx + std::log(s));
  }
  return out;
}

inline Matrix stabilized_kernel(const Matrix& cost, const Vector& f, const Vector& g, double eps) {
  Matrix k = -cost;
  k.colwise() += f;
  k.rowwise() += g.transpose();
  return (k.array() / eps).exp().matrix();
}

}  // namespace sinkhorn_detail

// Symmetric (averaged) Sinkhorn iterations in the scaling domain with
// log-domain potentials absorbed whenever the scalings drift. The update rule
// treats both point sets identically, so swapping them transposes the plan.
inline SinkhornResult sinkhorn(const Matrix& a, const Matrix& b, const SinkhornConfig& cfg) {
  cfg.validate();
  if (a.rows() == 0 || b.rows() == 0) throw ArgumentError("sinkhorn needs two non-empty point sets");
  if (!a.allFinite() || !b.allFinite()) throw NumericError("sinkhorn received non-finite points");
  using namespace sinkhorn_detail;

  const long m = a.rows(), n = b.rows();
  const double eps = cfg.epsilon;
  const double wa = 1.0 / static_cast<double>(m), wb = 1.0 / static_cast<double>(n);

  SinkhornResult res;
  res.distances = pairwise_distances(a, b);
  const Matrix& cost = res.distances;

  // One log-domain half step from zero potentials gives a kernel with no empty rows or columns.
  const Vector f0 = soft_update(cost, Vector::Zero(n), eps, std::log(wa), true);
  const Vector g0 = soft_update(cost, Vector::Zero(m), eps, std::log(wb), false);
  Vector f = f0, g = g0;
  Matrix kernel = stabilized_kernel(cost, f, g, eps);
  Vector u = Vector::Ones(m), v = Vector::Ones(n);
  constexpr double kAbsorbAbove = 30.0;

  auto absorb = [&]() {
    f += eps * u.array().log().matrix();
    g += eps * v.array().log().matrix();
    u.setOnes();
    v.setOnes();
    kernel = stabilized_kernel(cost, f, g, eps);
  };

  int it = 0;
  double err = std::numeric_limits<double>::infinity();
  for (; it < cfg.max_iters; ++it) {
    const Vector kv = kernel * v;
    const Vector ktu = kernel.transpose() * u;
    err = (u.cwiseProduct(kv).array() - wa).abs().sum() + (v.cwiseProduct(ktu).array() - wb).abs().sum();
    if (err < cfg.convergence_tol) break;

    const bool degenerate = (kv.array() <= 0.0).any() || (ktu.array() <= 0.0).any() || !kv.allFinite() ||
                            !ktu.allFinite();
    if (degenerate) {
      absorb();
      const Vector fn = soft_update(cost, g, eps, std::log(wa), true);
      const Vector gn = soft_update(cost, f, eps, std::log(wb), false);
      f = 0.5 * (f + fn);
      g = 0.5 * (g + gn);
      kernel = stabilized_kernel(cost, f, g, eps);
      continue;
    }
    const Vector un = (u.array() * (wa / kv.array())).sqrt().matrix();
    const Vector vn = (v.array() * (wb / ktu.array())).sqrt().matrix();
    u = un;
    v = vn;
    const double drift = std::max(u.array().log().abs().maxCoeff(), v.array().log().abs().maxCoeff());
    if (drift > kAbsorbAbove) absorb();
  }

  res.plan = u.asDiagonal() * kernel * v.asDiagonal();
  res.cost = res.plan.cwiseProduct(cost).sum();
  res.iterations = it;
  res.marginal_error = err;
  if (!std::isfinite(res.cost)) throw NumericError("sinkhorn produced a non-finite transport cost");
  return res;
}

inline double sinkhorn_wasserstein(const Matrix& a, const Matrix& b, const SinkhornConfig& cfg) {
  return sinkhorn(a, b, cfg).cost;
}

namespace ad {

// <plan, C(a, b)> with the plan held fixed for differentiation. Passing
// `frozen_plan` skips the iterations and reuses a previously computed plan;
// `plan_out` receives the plan that was used.
inline Var sinkhorn_distance(Var a, Var b, const SinkhornConfig& cfg, const Matrix* frozen_plan = nullptr,
                             Matrix* plan_out = nullptr) {
  Matrix plan;
  Matrix dist;
  if (frozen_plan) {
    dist = pairwise_distances(a.value(), b.value());
    if (frozen_plan->rows() != dist.rows() || frozen_plan->cols() != dist.cols())
      throw ValidationError("frozen transport plan has the wrong shape");
    plan = *frozen_plan;
  } else {
    SinkhornResult r = sinkhorn(a.value(), b.value(), cfg);
    plan = std::move(r.plan);
    dist = std::move(r.distances);
  }
  if (plan_out) *plan_out = plan;
  Matrix out(1, 1);
  out(0, 0) = plan.cwiseProduct(dist).sum();

  // d<P, C>/dC_ij = P_ij, dC_ij/da_i = (a_i - b_j) / C_ij.
  Matrix w = plan.binaryExpr(dist, [](double p, double c) { return c > 1e-12 ? p / c : 0.0; });
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib, w = std::move(w)](Tape& t, const Matrix& g) {
    const double s = g(0, 0);
    const Matrix& av = t.value(ia);
    const Matrix& bv = t.value(ib);
    if (t.requires_grad(ia)) {
      const Vector rs = w.rowwise().sum();
      t.accumulate(ia, s * (rs.asDiagonal() * av - w * bv));
    }
    if (t.requires_grad(ib)) {
      const Vector cs = w.colwise().sum().transpose();
      t.accumulate(ib, s * (cs.asDiagonal() * bv - w.transpose() * av));
    }
  });
}

}  // namespace ad
}  // namespace gdc
