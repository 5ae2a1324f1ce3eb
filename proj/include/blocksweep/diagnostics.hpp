#pragma once

// Empirical checks on traces and operators: Fejer slacks, the exact expectation identities over the mask
// law, inclusion residuals, deterministic reference solutions, and replica summaries across seeds.

#include <Eigen/QR>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "blocksweep/problems.hpp"

namespace blocksweep {

// ---------------------------------------------------------------------------------------------------------
// Fejer monitoring

enum class Phi { t, t_squared };

inline double apply_phi(Phi phi, double t) { return phi == Phi::t ? t : t * t; }

struct FejerEnvelopes {
  std::function<double(std::size_t)> chi;  ///< chi_n >= 0, zero when unset
  std::function<double(std::size_t)> eta;  ///< eta_n >= 0, zero when unset
};

struct FejerReport {
  std::vector<double> slacks;  ///< phi(||x_{k+1} - z||) - (1 + chi_n) phi(||x_k - z||) - eta_n
  std::vector<std::size_t> indices;  ///< iteration index n of the earlier snapshot of each pair
  std::size_t violations = 0;
  double max_positive_slack = 0.0;
};

/// Slacks between consecutive snapshots. A realized path with errors may show positive slack; those are
/// counted, not treated as failures.
inline FejerReport fejer_monitor(const IterateTrace& trace, const BlockVector& z, Phi phi = Phi::t_squared,
                                 const FejerEnvelopes& env = {}, double tolerance = 1e-12) {
  if (trace.snapshots.empty()) throw ParameterError("fejer_monitor: trace has no iterate snapshots");
  FejerReport r;
  for (std::size_t k = 0; k + 1 < trace.snapshots.size(); ++k) {
    const auto& a = trace.snapshots[k];
    const auto& b = trace.snapshots[k + 1];
    const double chi = env.chi ? env.chi(a.n) : 0.0;
    const double eta = env.eta ? env.eta(a.n) : 0.0;
    const double s = apply_phi(phi, distance(b.x, z)) - (1.0 + chi) * apply_phi(phi, distance(a.x, z)) - eta;
    r.slacks.push_back(s);
    r.indices.push_back(a.n);
    if (s > tolerance) ++r.violations;
    r.max_positive_slack = std::max(r.max_positive_slack, s);
  }
  return r;
}

// ---------------------------------------------------------------------------------------------------------
// Exact expectations over D

struct IdentityTerm {
  double lhs = 0.0;
  double rhs = 0.0;
  double abs_err = 0.0;
};

struct ExpectationIdentityReport {
  IdentityTerm fejer;     ///< sum_eps P[eps] |||t(eps) - z|||^2  vs  |||x - z|||^2 + ||Tx - z||^2 - ||x - z||^2
  IdentityTerm residual;  ///< sum_eps P[eps] |||t(eps) - x|||^2  vs  ||Tx - x||^2
};

/// t(eps) is the update of x with mask eps, unit relaxation and no errors; ||| . ||| uses p_i from the law.
inline ExpectationIdentityReport expectation_identity_check(const BlockVector& x, const BlockVector& Tx,
                                                            const BlockVector& z, const SweepingRule& rule) {
  require_same_dims(x, Tx, "expectation_identity_check");
  require_same_dims(x, z, "expectation_identity_check");
  if (rule.block_count() != x.block_count()) throw ShapeError("expectation_identity_check: rule block count");
  const MaskLaw law = mask_law(rule);
  const WeightedNormSpec w(law.marginals);
  ExpectationIdentityReport r;
  for (const auto& [mask, prob] : law.support) {
    const BlockVector t = masked_update(x, mask, 1.0, Tx);
    r.fejer.lhs += prob * weighted_norm_sq(combine(1.0, t, -1.0, z), w);
    r.residual.lhs += prob * weighted_norm_sq(combine(1.0, t, -1.0, x), w);
  }
  r.fejer.rhs = weighted_norm_sq(combine(1.0, x, -1.0, z), w) + norm_sq(combine(1.0, Tx, -1.0, z)) -
                norm_sq(combine(1.0, x, -1.0, z));
  r.residual.rhs = norm_sq(combine(1.0, Tx, -1.0, x));
  r.fejer.abs_err = std::abs(r.fejer.lhs - r.fejer.rhs);
  r.residual.abs_err = std::abs(r.residual.lhs - r.residual.rhs);
  return r;
}

inline ExpectationIdentityReport expectation_identity_check(const BlockOperatorFamily& T, std::size_t n,
                                                            const BlockVector& x, const BlockVector& z,
                                                            const SweepingRule& rule) {
  return expectation_identity_check(x, T(n, x), z, rule);
}

inline constexpr std::size_t kMaxExpectedFejerBlocks = 10;

/// sum_eps P[eps] |||x_{n+1}(eps) - z|||^2 - |||x_n - z|||^2 for the error-free update with relaxation lambda.
inline double expected_fejer_slack(const BlockVector& x, const BlockVector& Tx, const BlockVector& z,
                                   const SweepingRule& rule, double lambda) {
  if (rule.block_count() > kMaxExpectedFejerBlocks)
    throw CapacityError("expected_fejer_slack: more than " + std::to_string(kMaxExpectedFejerBlocks) + " blocks");
  const MaskLaw law = mask_law(rule);
  const WeightedNormSpec w(law.marginals);
  double expected = 0.0;
  for (const auto& [mask, prob] : law.support)
    expected += prob * weighted_norm_sq(combine(1.0, masked_update(x, mask, lambda, Tx), -1.0, z), w);
  return expected - weighted_norm_sq(combine(1.0, x, -1.0, z), w);
}

struct ExpectedFejerReport {
  std::vector<double> slacks;  ///< one per (snapshot, reference point) pair
  double max_slack = -std::numeric_limits<double>::infinity();
};

/// Expected weighted slack at every stored snapshot of an error-free single-layer run, for each z.
inline ExpectedFejerReport expected_fejer_profile(const BlockOperatorFamily& T, const IterateTrace& trace,
                                                  const std::vector<BlockVector>& zs, const SweepingRule& rule,
                                                  const Schedule& lambda) {
  if (trace.snapshots.empty()) throw ParameterError("expected_fejer_profile: trace has no iterate snapshots");
  ExpectedFejerReport r;
  for (const auto& snap : trace.snapshots) {
    const BlockVector Tx = T(snap.n, snap.x);
    for (const auto& z : zs) {
      const double s = expected_fejer_slack(snap.x, Tx, z, rule, lambda(snap.n));
      r.slacks.push_back(s);
      r.max_slack = std::max(r.max_slack, s);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------------------------------------
// Inclusion residuals

struct InclusionResidual {
  double primal_res = 0.0;
  std::optional<double> dual_res;
};

namespace detail {

inline BlockVector resolvent_all(const std::vector<MonotoneOperator>& ops, const BlockVector& x) {
  return product_resolvent(ops, 1.0, x);
}

/// || x - J_A(x - v) ||, zero iff -v in A x.
inline double backward_gap(const std::vector<MonotoneOperator>& A, const BlockVector& x, const BlockVector& v) {
  return distance(x, resolvent_all(A, combine(1.0, x, -1.0, v)));
}

inline BlockVector forward_all(const std::vector<MonotoneOperator>& ops, const BlockVector& x) {
  BlockVector out(x.dims());
  for (std::size_t i = 0; i < ops.size(); ++i) {
    auto v = ops[i].forward(x.block(i));
    if (!v) throw CapabilityError("inclusion_residual: operator has no forward evaluation");
    out.block(i) = *v;
  }
  return out;
}

inline bool all_single_valued(const std::vector<MonotoneOperator>& ops) {
  return std::all_of(ops.begin(), ops.end(), [](const MonotoneOperator& op) { return op.single_valued(); });
}

}  // namespace detail

/// Resolvent fixed-point surrogates with unit stepsize:
///   forward-backward:     ||x - J_A(x - Bx)||
///   Douglas-Rachford:     ||z - J_A(z - Bz)|| when B is single-valued, otherwise the KKT residual with u;
///                         dual: ||z - J_A(z - u)|| + ||z - J_B(z + u)||  (u in Bz, -u in Az)
///   primal-dual:          ||x - J_A(x - L'B(Lx))|| when B is single-valued, otherwise the KKT residual with v;
///                         dual: ||x - J_A(x - L'v)|| + ||Lx - J_B(Lx + v)||  (v in B(Lx), -L'v in Ax)
///   fixed point:          ||Tx - x||
inline InclusionResidual inclusion_residual(const Problem& problem, const PrimalDualSolution& candidate) {
  const BlockVector& x = candidate.primal;
  InclusionResidual r;
  if (const auto* p = std::get_if<FbProblem>(&problem)) {
    r.primal_res = detail::backward_gap(p->A, x, p->B(x));
  } else if (const auto* p = std::get_if<FbMinProblem>(&problem)) {
    std::vector<MonotoneOperator> A;
    for (auto& f : p->f) A.push_back(MonotoneOperator::subdifferential(f));
    r.primal_res = detail::backward_gap(A, x, CouplingGradient(p->L, p->g)(x));
  } else if (const auto* p = std::get_if<DrProblem>(&problem)) {
    std::optional<double> kkt;
    if (candidate.dual) {
      const BlockVector& u = *candidate.dual;
      kkt = detail::backward_gap(p->A, x, u) + distance(x, p->B.resolvent(1.0, combine(1.0, x, 1.0, u)));
      r.dual_res = kkt;
    }
    if (p->B.has_forward())
      r.primal_res = detail::backward_gap(p->A, x, p->B.forward(x));
    else if (kkt)
      r.primal_res = *kkt;
    else
      throw CapabilityError("inclusion_residual: set-valued B needs a dual witness u");
  } else if (const auto* p = std::get_if<PdProblem>(&problem)) {
    const LinearBlockOperator& L = p->L();
    const BlockVector Lx = L.apply(x);
    std::optional<double> kkt;
    if (candidate.dual) {
      const BlockVector& v = *candidate.dual;
      kkt = detail::backward_gap(p->A, x, L.adjoint(v)) +
            distance(Lx, detail::resolvent_all(p->B, combine(1.0, Lx, 1.0, v)));
      r.dual_res = kkt;
    }
    if (detail::all_single_valued(p->B))
      r.primal_res = detail::backward_gap(p->A, x, L.adjoint(detail::forward_all(p->B, Lx)));
    else if (kkt)
      r.primal_res = *kkt;
    else
      throw CapabilityError("inclusion_residual: set-valued B_k needs a dual witness v");
  } else if (const auto* p = std::get_if<KmProblem>(&problem)) {
    r.primal_res = distance(p->T(0, x), x);
  }
  return r;
}

// ---------------------------------------------------------------------------------------------------------
// Reference solutions

struct OracleOptions {
  std::size_t max_iterations = 1000000;
  double tolerance = 1e-12;
};

namespace detail {

inline bool is_zero_operator(const MonotoneOperator& A) {
  return A.kind() == MonotoneOperator::Kind::subdifferential && A.function() &&
         A.function()->kind() == ProxFunction::Kind::zero;
}

/// Solves M x = rhs when M is nonsingular to working precision.
inline std::optional<Vector> direct_solve(const Matrix& M, const Vector& rhs) {
  Eigen::ColPivHouseholderQR<Matrix> qr(M);
  if (qr.rank() < M.cols()) return std::nullopt;
  return Vector(qr.solve(rhs));
}

inline BlockVector fb_oracle(const std::vector<MonotoneOperator>& A, const std::function<BlockVector(const BlockVector&)>& B,
                             double theta, BlockVector x, const OracleOptions& opt) {
  const double gamma = std::isfinite(theta) ? theta : 1.0;
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    const BlockVector Bx = B(x);
    BlockVector next(x.dims());
    for (std::size_t i = 0; i < A.size(); ++i)
      next.block(i) = A[i].resolvent(gamma, Vector(x.block(i) - gamma * Bx.block(i)));
    const double step = distance(next, x);
    x = std::move(next);
    if (step < opt.tolerance) return x;
  }
  throw OracleFailure("oracle_reference: forward-backward budget exhausted");
}

inline BlockVector dr_oracle(const std::vector<MonotoneOperator>& A, const std::function<BlockVector(const BlockVector&)>& JB,
                             BlockVector x, const OracleOptions& opt) {
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    const BlockVector z = JB(x);
    BlockVector J(x.dims());
    for (std::size_t i = 0; i < A.size(); ++i) J.block(i) = A[i].resolvent(1.0, Vector(2.0 * z.block(i) - x.block(i)));
    const double step = distance(J, z);
    x.flat() += J.flat() - z.flat();
    if (step < opt.tolerance) return JB(x);
  }
  throw OracleFailure("oracle_reference: Douglas-Rachford budget exhausted");
}

}  // namespace detail

/// Deterministic full-sweep solution: a direct solve for quadratic-only problems, else full-coordinate FB with
/// gamma = theta and unit relaxation, or full-mask DR with gamma = mu = 1.
inline BlockVector oracle_reference(const Problem& problem, const OracleOptions& opt = {}) {
  const BlockDims H = primal_dims(problem);
  if (H.total() > 200) throw CapacityError("oracle_reference: total dimension above 200");
  if (const auto* p = std::get_if<FbProblem>(&problem)) {
    if (p->B.affine_form() && std::all_of(p->A.begin(), p->A.end(), detail::is_zero_operator)) {
      const auto& [M, q] = *p->B.affine_form();
      if (auto sol = detail::direct_solve(M, -q)) return BlockVector(H, *sol);
    }
    return detail::fb_oracle(p->A, [&](const BlockVector& x) { return p->B(x); }, p->B.theta(), BlockVector(H), opt);
  }
  if (const auto* p = std::get_if<FbMinProblem>(&problem)) {
    const bool smooth_quadratic = std::all_of(p->g.begin(), p->g.end(), [](const SmoothFunction& g) { return g.is_quadratic(); });
    const bool no_prox = std::all_of(p->f.begin(), p->f.end(), [](const ProxFunction& f) { return f.kind() == ProxFunction::Kind::zero; });
    if (smooth_quadratic && no_prox) {
      const Matrix& L = p->L.dense();
      const auto rows = static_cast<Eigen::Index>(p->L.target().total());
      Matrix Q = Matrix::Zero(rows, rows);
      Vector b(rows);
      for (std::size_t k = 0; k < p->g.size(); ++k) {
        const auto o = static_cast<Eigen::Index>(p->L.target().offset(k));
        const auto d = static_cast<Eigen::Index>(p->L.target()[k]);
        Q.block(o, o, d, d) = p->g[k].Q();
        b.segment(o, d) = p->g[k].b();
      }
      if (auto sol = detail::direct_solve(L.transpose() * Q * L, -L.transpose() * b)) return BlockVector(H, *sol);
    }
    const CouplingGradient grad(p->L, p->g);
    std::vector<MonotoneOperator> A;
    for (auto& f : p->f) A.push_back(MonotoneOperator::subdifferential(f));
    return detail::fb_oracle(A, grad, cocoercivity_bound(p->L, grad.taus()), BlockVector(H), opt);
  }
  if (const auto* p = std::get_if<DrProblem>(&problem)) {
    return detail::dr_oracle(p->A, [&](const BlockVector& x) { return p->B.resolvent(1.0, x); }, BlockVector(H), opt);
  }
  if (const auto* p = std::get_if<PdProblem>(&problem)) {
    std::vector<MonotoneOperator> C = p->A;
    C.insert(C.end(), p->B.begin(), p->B.end());
    const BlockVector k = detail::dr_oracle(C, [&](const BlockVector& v) { return p->V->project(v); },
                                            BlockVector(p->product_dims()), opt);
    return k.slice(0, p->m());
  }
  const auto& km = std::get<KmProblem>(problem);
  BlockVector x = km.x0;
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    BlockVector next = km.T(it, x);
    const double step = distance(next, x);
    x = std::move(next);
    if (step < opt.tolerance) return x;
  }
  throw OracleFailure("oracle_reference: fixed-point budget exhausted");
}

// ---------------------------------------------------------------------------------------------------------
// Replica summaries

struct ReplicaOutcome {
  double final_residual = 0.0;
  std::optional<double> final_distance;
  std::size_t iterations = 0;
  bool converged = false;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::optional<ReplicaOutcome> outcome;
  std::string error;  ///< nonempty when the replica threw
  bool success = false;
};

struct Quantiles {
  double min = 0.0, q25 = 0.0, median = 0.0, q75 = 0.0, max = 0.0;
};

struct ConvergenceReport {
  std::vector<SeedResult> per_seed;  ///< sorted by seed
  std::optional<Quantiles> residual;
  std::optional<Quantiles> distance;
  double success_fraction = 0.0;
  double threshold = 0.0;
};

/// Calls fn(k) for k < count on up to `workers` threads (hardware concurrency when 0); fn must not throw.
inline void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  if (workers == 0) workers = std::max(1U, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < count; k = next++) fn(k);
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
}

inline Quantiles quantiles(std::vector<double> v) {
  if (v.empty()) throw ParameterError("quantiles: no values");
  std::sort(v.begin(), v.end());
  auto at = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  return {v.front(), at(0.25), at(0.5), at(0.75), v.back()};
}

/// Runs `driver(seed)` for every seed on a worker pool and merges after all finish. A replica succeeds when
/// its distance to the reference (or, without one, its final residual) is at most `threshold`.
inline ConvergenceReport monte_carlo_summary(const std::function<ReplicaOutcome(std::uint64_t)>& driver,
                                             const std::vector<std::uint64_t>& seeds, double threshold,
                                             std::size_t workers = 0) {
  if (seeds.size() < 2) throw ParameterError("monte_carlo_summary: at least 2 seeds required");
  std::vector<SeedResult> results(seeds.size());
  parallel_for(seeds.size(), workers, [&](std::size_t k) {
    SeedResult& r = results[k];
    r.seed = seeds[k];
    try {
      r.outcome = driver(seeds[k]);
      const double score = r.outcome->final_distance ? *r.outcome->final_distance : r.outcome->final_residual;
      r.success = score <= threshold;
    } catch (const std::exception& e) {
      r.error = e.what();
      if (r.error.empty()) r.error = "error";
    }
  });

  std::sort(results.begin(), results.end(), [](const SeedResult& a, const SeedResult& b) { return a.seed < b.seed; });
  ConvergenceReport rep;
  rep.threshold = threshold;
  std::vector<double> res, dist;
  std::size_t ok = 0;
  for (auto& r : results) {
    ok += r.success ? 1 : 0;
    if (!r.outcome) continue;
    res.push_back(r.outcome->final_residual);
    if (r.outcome->final_distance) dist.push_back(*r.outcome->final_distance);
  }
  if (!res.empty()) rep.residual = quantiles(res);
  if (!dist.empty()) rep.distance = quantiles(dist);
  rep.success_fraction = static_cast<double>(ok) / static_cast<double>(results.size());
  rep.per_seed = std::move(results);
  return rep;
}

inline ReplicaOutcome outcome_of(const IterateTrace& t) {
  return {t.final_residual(), t.final_distance(), t.iterations(), t.converged()};
}

}  // namespace blocksweep
