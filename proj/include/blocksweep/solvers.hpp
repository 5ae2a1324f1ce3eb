#pragma once

// Iteration engines: single-layer and double-layer block iterations, block Douglas-Rachford, primal-dual
// Douglas-Rachford, and block forward-backward. All drivers share one evaluation contract: the operator
// is applied to the full pre-update iterate, then the mask selects which blocks move.

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "blocksweep/monotone.hpp"
#include "blocksweep/regularity.hpp"
#include "blocksweep/smooth.hpp"
#include "blocksweep/trace.hpp"

namespace blocksweep {

/// Single-valued B on H with <x - y, Bx - By> >= theta ||Bx - By||^2.
class CocoerciveOperator {
 public:
  using Fn = std::function<BlockVector(const BlockVector&)>;

  CocoerciveOperator(BlockDims dims, Fn eval, double theta)
      : dims_(std::move(dims)), eval_(std::move(eval)), theta_(theta) {
    if (!(theta > 0.0)) throw ParameterError("CocoerciveOperator: theta must be > 0");
  }

  /// B = 0, cocoercive for every theta.
  static CocoerciveOperator zero(BlockDims dims) {
    return CocoerciveOperator(
        dims, [](const BlockVector& x) { return BlockVector(x.dims()); }, std::numeric_limits<double>::infinity());
  }

  /// Gradient of h(x) = sum_k g_k((Lx)_k); theta from the cocoercivity bound.
  static CocoerciveOperator coupling(const CouplingGradient& grad) {
    const double theta = cocoercivity_bound(grad.op(), grad.taus());
    auto shared = std::make_shared<const CouplingGradient>(grad);
    CocoerciveOperator B(grad.op().source(), [shared](const BlockVector& x) { return (*shared)(x); }, theta);
    B.value_ = [shared](const BlockVector& x) { return shared->value(x); };
    return B;
  }

  /// B x = M x + q with M symmetric positive semidefinite, theta = 1/||M||.
  static CocoerciveOperator affine(BlockDims dims, Matrix M, Vector q) {
    const auto n = static_cast<Eigen::Index>(dims.total());
    if (M.rows() != n || M.cols() != n || q.size() != n) throw ShapeError("CocoerciveOperator::affine: shape mismatch");
    if (!detail::is_symmetric(M, 1e-12 * std::max(1.0, M.cwiseAbs().maxCoeff())))
      throw ParameterError("CocoerciveOperator::affine: M must be symmetric");
    if (detail::min_sym_eigenvalue(M) < -1e-10 * std::max(1.0, M.cwiseAbs().maxCoeff()))
      throw ParameterError("CocoerciveOperator::affine: M must be positive semidefinite");
    const double norm = spectral_norm_psd(M);
    auto Mp = std::make_shared<const Matrix>(M);
    auto qp = std::make_shared<const Vector>(q);
    CocoerciveOperator B(
        std::move(dims), [Mp, qp](const BlockVector& x) { return BlockVector(x.dims(), Vector(*Mp * x.flat() + *qp)); },
        norm > 0.0 ? 1.0 / norm : std::numeric_limits<double>::infinity());
    B.affine_ = std::make_pair(std::move(M), std::move(q));
    return B;
  }

  const BlockDims& dims() const { return dims_; }
  double theta() const { return theta_; }
  BlockVector operator()(const BlockVector& x) const {
    if (x.dims() != dims_) throw ShapeError("CocoerciveOperator: input dims mismatch");
    return eval_(x);
  }
  /// Potential h with grad h = B, when known.
  const std::function<double(const BlockVector&)>& potential() const { return value_; }
  const std::optional<std::pair<Matrix, Vector>>& affine_form() const { return affine_; }

 private:
  BlockDims dims_;
  Fn eval_;
  double theta_;
  std::function<double(const BlockVector&)> value_;
  std::optional<std::pair<Matrix, Vector>> affine_;
};

/// Packaged primal-dual problem over K = H (+) G with C = A x B and the graph subspace V of L.
struct PdProblem {
  std::vector<MonotoneOperator> A;  ///< m operators on H_i
  std::vector<MonotoneOperator> B;  ///< p operators on G_k
  std::shared_ptr<const GraphSubspace> V;
  std::vector<ProxFunction> f;  ///< set by the proximal variant
  std::vector<ProxFunction> g;

  std::size_t m() const { return A.size(); }
  std::size_t p() const { return B.size(); }
  const LinearBlockOperator& L() const { return V->op(); }
  BlockDims product_dims() const { return V->product_dims(); }
};

inline PdProblem assemble_pd_problem(std::vector<MonotoneOperator> A, std::vector<MonotoneOperator> B,
                                     LinearBlockOperator L) {
  if (A.size() != L.cols())
    throw ShapeError("assemble_pd_problem: " + std::to_string(A.size()) + " operators A_i for " +
                     std::to_string(L.cols()) + " columns of L");
  if (B.size() != L.rows())
    throw ShapeError("assemble_pd_problem: " + std::to_string(B.size()) + " operators B_k for " +
                     std::to_string(L.rows()) + " rows of L");
  for (std::size_t i = 0; i < A.size(); ++i)
    if (A[i].dim() != L.source()[i]) throw ShapeError("assemble_pd_problem: A_" + std::to_string(i) + " dimension");
  for (std::size_t k = 0; k < B.size(); ++k) {
    if (B[k].dim() != L.target()[k]) throw ShapeError("assemble_pd_problem: B_" + std::to_string(k) + " dimension");
    if (!(L.row_energy(k) > 0.0))
      throw HypothesisError("assemble_pd_problem: row " + std::to_string(k) +
                            " of L vanishes; min_k sum_i ||L_ki||^2 > 0 is required");
  }
  PdProblem P;
  P.A = std::move(A);
  P.B = std::move(B);
  P.V = std::make_shared<const GraphSubspace>(std::move(L));
  return P;
}

/// Proximal variant: A_i = df_i, B_k = dg_k.
inline PdProblem assemble_pd_problem(const std::vector<ProxFunction>& f, const std::vector<ProxFunction>& g,
                                     LinearBlockOperator L) {
  std::vector<MonotoneOperator> A, B;
  for (auto& fi : f) A.push_back(MonotoneOperator::subdifferential(fi));
  for (auto& gk : g) B.push_back(MonotoneOperator::subdifferential(gk));
  PdProblem P = assemble_pd_problem(std::move(A), std::move(B), std::move(L));
  P.f = f;
  P.g = g;
  return P;
}

namespace detail {

inline void require_dims(const BlockVector& x, const BlockDims& dims, const char* what) {
  if (x.dims() != dims) throw ShapeError(std::string(what) + ": expected dims " + to_string(dims) + ", got " + to_string(x.dims()));
}

/// Adds e_n of `model` to `target`; returns ||e_n||.
inline double inject(BlockVector& target, const ErrorModel& model, std::size_t n, std::uint64_t seed, Stream stream) {
  if (!model.active()) return 0.0;
  const BlockVector e = sample_error(model, target.dims(), n, seed, stream);
  target.flat() += e.flat();
  return norm(e);
}

/// Bookkeeping shared by the drivers: snapshots, terminal record, reference distance.
class TraceBuilder {
 public:
  TraceBuilder(const SolverConfig& cfg) : cfg_(cfg) {}

  std::optional<double> distance_to_ref(const BlockVector& shadow) const {
    if (!cfg_.reference) return std::nullopt;
    require_same_dims(shadow, *cfg_.reference, "reference");
    return distance(shadow, *cfg_.reference);
  }

  /// Opens record n. Returns true when the run stops here.
  bool begin(std::size_t n, double residual, std::optional<double> dist, const BlockVector& x) {
    if (!std::isfinite(residual)) throw NumericError("iteration " + std::to_string(n) + ": residual is not finite");
    IterationRecord r;
    r.n = n;
    r.residual = residual;
    r.dist_to_ref = dist;
    trace_.records.push_back(std::move(r));
    if (n % cfg_.snapshot_stride == 0) trace_.snapshots.push_back({n, x});
    const bool done = residual < cfg_.tolerance || n >= cfg_.max_iterations;
    if (done) {
      trace_.termination = residual < cfg_.tolerance ? Termination::converged : Termination::max_iterations;
      trace_.final_iterate = x;
      if (trace_.snapshots.empty() || trace_.snapshots.back().n != n) trace_.snapshots.push_back({n, x});
    }
    return done;
  }

  IterationRecord& current() { return trace_.records.back(); }
  IterateTrace take() { return std::move(trace_); }

 private:
  const SolverConfig& cfg_;
  IterateTrace trace_;
};

inline void check_cocoercive(const CocoerciveOperator& B, std::uint64_t seed) {
  if (!std::isfinite(B.theta())) return;
  std::mt19937_64 gen(seed ^ 0x5bd1e995ULL);
  std::normal_distribution<double> gauss;
  const auto d = static_cast<Eigen::Index>(B.dims().total());
  for (int s = 0; s < 8; ++s) {
    Vector u(d), v(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      u[j] = gauss(gen);
      v[j] = gauss(gen);
    }
    const BlockVector x(B.dims(), u), y(B.dims(), v);
    const Vector dB = B(x).flat() - B(y).flat();
    const double lhs = (u - v).dot(dB);
    const double rhs = B.theta() * dB.squaredNorm();
    if (lhs < rhs - 1e-9 * (1.0 + std::abs(rhs)))
      throw HypothesisError("forward-backward: B fails the cocoercivity inequality with the declared theta");
  }
}

inline void check_firm(const CoupledOperator& B, double gamma, std::uint64_t seed) {
  std::mt19937_64 gen(seed ^ 0x27d4eb2fULL);
  std::normal_distribution<double> gauss;
  const auto d = static_cast<Eigen::Index>(B.dims().total());
  for (int s = 0; s < 4; ++s) {
    Vector u(d), v(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      u[j] = 3.0 * gauss(gen);
      v[j] = 3.0 * gauss(gen);
    }
    const BlockVector x(B.dims(), u), y(B.dims(), v);
    const Vector dJ = B.resolvent(gamma, x).flat() - B.resolvent(gamma, y).flat();
    const double lhs = dJ.squaredNorm();
    const double rhs = (u - v).dot(dJ);
    if (lhs > rhs + 1e-9 * (1.0 + std::abs(rhs)))
      throw HypothesisError("Douglas-Rachford: J_γB is not firmly nonexpansive on sampled points");
  }
}

using ErrorDraw = std::function<std::optional<BlockVector>(std::size_t n)>;

inline ErrorDraw slot_draw(const ErrorModel& model, BlockDims dims, std::uint64_t seed, Stream stream) {
  if (!model.active()) return [](std::size_t) { return std::optional<BlockVector>(); };
  return [model, dims = std::move(dims), seed, stream](std::size_t n) {
    return std::optional<BlockVector>(sample_error(model, dims, n, seed, stream));
  };
}

/// Douglas-Rachford core on a product space with per-block resolvents and a full-space resolvent JB.
///   z_{i,n+1} = z_{i,n} + eps_i (Q_i x_n + b_i - z_{i,n})
///   x_{i,n+1} = x_{i,n} + eps_i mu_n (J_{gamma A_i}(2 z_{i,n+1} - x_{i,n}) + a_i - z_{i,n+1})
struct DrOutput {
  IterateTrace trace;
  BlockVector x, z;
};

inline DrOutput dr_core(const std::vector<MonotoneOperator>& A,
                        const std::function<BlockVector(const BlockVector&)>& JB, const SolverConfig& cfg,
                        const SweepingRule& rule, BlockVector x, BlockVector z, const ErrorDraw& draw_a,
                        const ErrorDraw& draw_b, const std::function<std::optional<double>(const BlockVector&)>& dist,
                        const std::function<std::optional<double>(const BlockVector&)>& objective) {
  const double gamma = cfg.gamma;
  TraceBuilder tb(cfg);
  for (std::size_t n = 0;; ++n) {
    const BlockVector Qx = JB(x);
    BlockVector reflected = combine(2.0, Qx, -1.0, x);
    const BlockVector JA = product_resolvent(A, gamma, reflected);
    const double residual = distance(JA, Qx);
    if (tb.begin(n, residual, dist(Qx), x)) {
      tb.current().objective = objective(Qx);
      break;
    }
    const ActivationMask mask = sample_mask(rule, n, cfg.seed);
    const double mu = cfg.mu(n);
    double err = 0.0;

    BlockVector znew = Qx;
    const auto b = draw_b(n);
    if (b) {
      znew.flat() += b->flat();
      err += norm(*b);
    }
    const auto a = draw_a(n);
    if (a) err += norm(*a);
    z = masked_update(z, mask, 1.0, znew);
    for (std::size_t i = 0; i < x.block_count(); ++i) {
      if (!mask.active(i)) continue;
      Vector J = b ? A[i].resolvent(gamma, Vector(2.0 * z.block(i) - x.block(i))) : Vector(JA.block(i));
      if (a) J += a->block(i);
      x.block(i) += mu * (J - z.block(i));
    }
    auto& rec = tb.current();
    rec.mask = mask;
    rec.relax = mu;
    rec.gamma = gamma;
    rec.error_norm = err;
    rec.objective = objective(Qx);
  }
  DrOutput out;
  out.trace = tb.take();
  out.x = std::move(x);
  out.z = std::move(z);
  return out;
}

}  // namespace detail

/// x_{i,n+1} = x_{i,n} + eps_{i,n} lambda_n (T_{i,n} x_n + a_{i,n} - x_{i,n}).
/// With an averaged tag the family is rewritten as R_n = (1 - 1/alpha_n) Id + T_n / alpha_n and relaxed by
/// mu_n = alpha_n lambda_n, which admits lambda_n up to (1 - chi)/alpha_n.
inline IterateTrace run_single_layer(const BlockOperatorFamily& T, const SolverConfig& cfg, const BlockVector& x0) {
  detail::require_dims(x0, T.dims(), "run_single_layer: x0");
  const bool averaged = T.regularity().kind == Regularity::Kind::averaged;
  if (averaged)
    validate_averaged(cfg, T.regularity().alpha);
  else
    validate_single_layer(cfg);
  const SweepingRule rule = cfg.rule_for(T.dims().count());
  detail::TraceBuilder tb(cfg);
  BlockVector x = x0;
  for (std::size_t n = 0;; ++n) {
    const BlockVector Tx = T(n, x);
    if (tb.begin(n, distance(Tx, x), tb.distance_to_ref(x), x)) break;
    const ActivationMask mask = sample_mask(rule, n, cfg.seed);
    const double lambda = cfg.lambda(n);
    double err = 0.0;
    if (averaged) {
      const double alpha = T.regularity().alpha_at(n);
      BlockVector R = combine(1.0 - 1.0 / alpha, x, 1.0 / alpha, Tx);
      if (cfg.errors.a.active()) {
        const BlockVector e = sample_error(cfg.errors.a, x.dims(), n, cfg.seed, Stream::error_a);
        R.flat() += e.flat() / alpha;
        err = norm(e);
      }
      x = masked_update(x, mask, alpha * lambda, R);
    } else {
      BlockVector target = Tx;
      err = detail::inject(target, cfg.errors.a, n, cfg.seed, Stream::error_a);
      x = masked_update(x, mask, lambda, target);
    }
    auto& rec = tb.current();
    rec.mask = mask;
    rec.relax = lambda;
    rec.error_norm = err;
  }
  return tb.take();
}

/// y_n = R_n x_n + b_n;  x_{i,n+1} = x_{i,n} + eps_{i,n} lambda_n (T_{i,n} y_n + a_{i,n} - x_{i,n}).
inline IterateTrace run_double_layer(const BlockOperatorFamily& T, const BlockOperatorFamily& R,
                                     const SolverConfig& cfg, const BlockVector& x0) {
  detail::require_dims(x0, T.dims(), "run_double_layer: x0");
  if (R.dims() != T.dims()) throw ShapeError("run_double_layer: T and R act on different spaces");
  validate_double_layer(cfg);
  if (T.regularity().kind != Regularity::Kind::averaged || R.regularity().kind != Regularity::Kind::averaged)
    throw ParameterError("run_double_layer: T_n and R_n must be tagged averaged (sup αₙ < 1 and sup βₙ < 1)");
  const std::size_t horizon = std::min<std::size_t>(cfg.max_iterations, 10000);
  for (std::size_t n = 0; n <= horizon; ++n) {
    if (!(T.regularity().alpha_at(n) < 1.0)) throw ParameterError("run_double_layer: sup αₙ < 1 required");
    if (!(R.regularity().alpha_at(n) < 1.0)) throw ParameterError("run_double_layer: sup βₙ < 1 required");
  }
  const SweepingRule rule = cfg.rule_for(T.dims().count());
  detail::TraceBuilder tb(cfg);
  BlockVector x = x0;
  for (std::size_t n = 0;; ++n) {
    const BlockVector y = R(n, x);
    const BlockVector Ty = T(n, y);
    if (tb.begin(n, distance(Ty, x), tb.distance_to_ref(x), x)) break;
    const ActivationMask mask = sample_mask(rule, n, cfg.seed);
    const double lambda = cfg.lambda(n);
    double err = 0.0;
    BlockVector target = Ty;
    if (cfg.errors.b.active()) {
      BlockVector yb = y;
      err += detail::inject(yb, cfg.errors.b, n, cfg.seed, Stream::error_b);
      target = T(n, yb);
    }
    err += detail::inject(target, cfg.errors.a, n, cfg.seed, Stream::error_a);
    x = masked_update(x, mask, lambda, target);
    auto& rec = tb.current();
    rec.mask = mask;
    rec.relax = lambda;
    rec.error_norm = err;
  }
  return tb.take();
}

namespace detail {

inline IterateTrace fb_core(const std::vector<MonotoneOperator>& A, const CocoerciveOperator& B,
                            const SolverConfig& cfg, const BlockVector& x0,
                            const std::function<std::optional<double>(const BlockVector&)>& objective) {
  require_dims(x0, B.dims(), "run_fb: x0");
  if (A.size() != x0.block_count()) throw ShapeError("run_fb: one operator A_i per block required");
  for (std::size_t i = 0; i < A.size(); ++i)
    if (A[i].dim() != x0.dims()[i]) throw ShapeError("run_fb: A_" + std::to_string(i) + " dimension differs from block");
  validate_fb(cfg, B.theta());
  check_cocoercive(B, cfg.seed);
  const SweepingRule rule = cfg.rule_for(x0.block_count());
  TraceBuilder tb(cfg);
  BlockVector x = x0;
  for (std::size_t n = 0;; ++n) {
    const double gamma = cfg.gamma_n(n);
    const BlockVector Bx = B(x);
    const BlockVector y = combine(1.0, x, -gamma, Bx);
    const BlockVector J = product_resolvent(A, gamma, y);
    if (tb.begin(n, distance(J, x), tb.distance_to_ref(x), x)) {
      tb.current().gamma = gamma;
      tb.current().objective = objective(x);
      break;
    }
    const ActivationMask mask = sample_mask(rule, n, cfg.seed);
    const double lambda = cfg.lambda(n);
    double err = 0.0;
    BlockVector target = J;
    if (cfg.errors.c.active()) {
      const BlockVector c = sample_error(cfg.errors.c, x.dims(), n, cfg.seed, Stream::error_c);
      err += norm(c);
      BlockVector yc = y;
      yc.flat() -= gamma * c.flat();
      target = product_resolvent(A, gamma, yc);
    }
    err += inject(target, cfg.errors.a, n, cfg.seed, Stream::error_a);
    x = masked_update(x, mask, lambda, target);
    auto& rec = tb.current();
    rec.mask = mask;
    rec.relax = lambda;
    rec.gamma = gamma;
    rec.error_norm = err;
    rec.objective = objective(x);
  }
  return tb.take();
}

}  // namespace detail

/// x_{i,n+1} = x_{i,n} + eps_{i,n} lambda_n (J_{gamma_n A_i}(x_{i,n} - gamma_n (B_i x_n + c_{i,n})) + a_{i,n} - x_{i,n}).
inline IterateTrace run_fb(const std::vector<MonotoneOperator>& A, const CocoerciveOperator& B, const SolverConfig& cfg,
                           const BlockVector& x0) {
  return detail::fb_core(A, B, cfg, x0, [](const BlockVector&) { return std::optional<double>(); });
}

/// Block proximal gradient for sum_i f_i(x_i) + sum_k g_k(sum_i L_ki x_i); the objective is traced.
inline IterateTrace run_fb_min(const std::vector<ProxFunction>& f, const std::vector<SmoothFunction>& g,
                               const LinearBlockOperator& L, const SolverConfig& cfg, const BlockVector& x0) {
  if (f.size() != L.cols()) throw ShapeError("run_fb_min: one function f_i per column of L required");
  const CouplingGradient grad(L, g);
  const CocoerciveOperator B = CocoerciveOperator::coupling(grad);
  std::vector<MonotoneOperator> A;
  for (auto& fi : f) A.push_back(MonotoneOperator::subdifferential(fi));
  auto objective = [&](const BlockVector& x) {
    double s = grad.value(x);
    for (std::size_t i = 0; i < f.size(); ++i) s += f[i].value(x.block(i));
    return std::optional<double>(s);
  };
  return detail::fb_core(A, B, cfg, x0, objective);
}

/// Block Douglas-Rachford for 0 in A x + B x with A = A_1 x ... x A_m. Returns z = J_{gamma B} x and
/// u = (x - z)/gamma at the final governing iterate x.
inline SolveResult run_dr(const std::vector<MonotoneOperator>& A, const CoupledOperator& B, const SolverConfig& cfg,
                          const BlockVector& x0, const BlockVector& z0) {
  detail::require_dims(x0, B.dims(), "run_dr: x0");
  detail::require_dims(z0, B.dims(), "run_dr: z0");
  if (A.size() != x0.block_count()) throw ShapeError("run_dr: one operator A_i per block required");
  for (std::size_t i = 0; i < A.size(); ++i)
    if (A[i].dim() != x0.dims()[i]) throw ShapeError("run_dr: A_" + std::to_string(i) + " dimension differs from block");
  validate_dr(cfg);
  detail::check_firm(B, cfg.gamma, cfg.seed);
  const SweepingRule rule = cfg.rule_for(x0.block_count());
  const double gamma = cfg.gamma;
  detail::TraceBuilder tb(cfg);
  auto out = detail::dr_core(
      A, [&](const BlockVector& v) { return B.resolvent(gamma, v); }, cfg, rule, x0, z0,
      detail::slot_draw(cfg.errors.a, x0.dims(), cfg.seed, Stream::error_a),
      detail::slot_draw(cfg.errors.b, x0.dims(), cfg.seed, Stream::error_b),
      [&](const BlockVector& shadow) { return tb.distance_to_ref(shadow); },
      [](const BlockVector&) { return std::optional<double>(); });
  SolveResult result;
  const BlockVector primal = B.resolvent(gamma, out.x);
  result.solution.dual = combine(1.0 / gamma, out.x, -1.0 / gamma, primal);
  result.solution.primal = primal;
  result.solution.governing = out.x;
  result.trace = std::move(out.trace);
  return result;
}

inline SolveResult run_dr(const std::vector<MonotoneOperator>& A, const CoupledOperator& B, double gamma,
                          SolverConfig cfg, const BlockVector& x0, const BlockVector& z0) {
  cfg.gamma = gamma;
  return run_dr(A, B, cfg, x0, z0);
}

/// Primal-dual Douglas-Rachford: block DR on K = H (+) G for C = A x B and the normal cone of V, whose
/// resolvent is P_V. Masks cover the m + p blocks of K. Error slots: a on x, b on y, c on z, d on w.
/// Returns the primal t and dual (Lt - y)/gamma, where (t, Lt) = P_V(x, y) at the final iterate.
inline SolveResult run_pd_dr(const PdProblem& P, const SolverConfig& cfg, const BlockVector& x0, const BlockVector& z0,
                             const BlockVector& y0, const BlockVector& w0) {
  const BlockDims& H = P.L().source();
  const BlockDims& G = P.L().target();
  detail::require_dims(x0, H, "run_pd_dr: x0");
  detail::require_dims(z0, H, "run_pd_dr: z0");
  detail::require_dims(y0, G, "run_pd_dr: y0");
  detail::require_dims(w0, G, "run_pd_dr: w0");
  validate_dr(cfg);
  const std::size_t m = P.m();
  const std::size_t p = P.p();
  const SweepingRule rule = cfg.rule_for(m + p);
  std::vector<MonotoneOperator> C = P.A;
  C.insert(C.end(), P.B.begin(), P.B.end());

  auto pair_draw = [&](const ErrorModel& h, Stream hs, const ErrorModel& g, Stream gs) -> detail::ErrorDraw {
    if (!h.active() && !g.active()) return [](std::size_t) { return std::optional<BlockVector>(); };
    return [&cfg, &H, &G, h, hs, g, gs](std::size_t n) {
      const BlockVector eh = sample_error(h, H, n, cfg.seed, hs);
      const BlockVector eg = sample_error(g, G, n, cfg.seed, gs);
      return std::optional<BlockVector>(eh.concat(eg));
    };
  };

  detail::TraceBuilder tb(cfg);
  auto objective = [&](const BlockVector& shadow) -> std::optional<double> {
    if (P.f.empty()) return std::nullopt;
    const BlockVector t = shadow.slice(0, m);
    const BlockVector Lt = shadow.slice(m, p);
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += P.f[i].value(t.block(i));
    for (std::size_t k = 0; k < p; ++k) s += P.g[k].value(Lt.block(k));
    return s;
  };
  auto out = detail::dr_core(
      C, [&](const BlockVector& v) { return P.V->project(v); }, cfg, rule, x0.concat(y0), z0.concat(w0),
      pair_draw(cfg.errors.a, Stream::error_a, cfg.errors.b, Stream::error_b),
      pair_draw(cfg.errors.c, Stream::error_c, cfg.errors.d, Stream::error_d),
      [&](const BlockVector& shadow) { return tb.distance_to_ref(shadow.slice(0, m)); }, objective);

  SolveResult result;
  const BlockVector shadow = P.V->project(out.x);
  const BlockVector y = out.x.slice(m, p);
  result.solution.primal = shadow.slice(0, m);
  result.solution.dual = combine(1.0 / cfg.gamma, shadow.slice(m, p), -1.0 / cfg.gamma, y);
  result.solution.governing = out.x;
  result.trace = std::move(out.trace);
  return result;
}

inline SolveResult run_pd_dr(const PdProblem& P, double gamma, SolverConfig cfg, const BlockVector& x0,
                             const BlockVector& z0, const BlockVector& y0, const BlockVector& w0) {
  cfg.gamma = gamma;
  return run_pd_dr(P, cfg, x0, z0, y0, w0);
}

}  // namespace blocksweep
