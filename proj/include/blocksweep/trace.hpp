#pragma once

// Parameter schedules, solver configuration and the per-iteration trace shared by every driver.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "blocksweep/sweeping.hpp"

namespace blocksweep {

/// n -> value, either constant or a linear ramp from `start` (n = 0) to `end` (n >= ramp).
class Schedule {
 public:
  Schedule() = default;
  static Schedule constant(double v) { return Schedule(v, v, 0); }
  static Schedule ramp(double start, double end, std::size_t length) { return Schedule(start, end, length); }

  double operator()(std::size_t n) const {
    if (ramp_ == 0 || n >= ramp_) return end_;
    return start_ + (end_ - start_) * (static_cast<double>(n) / static_cast<double>(ramp_));
  }

  double start() const { return start_; }
  double end() const { return end_; }
  std::size_t ramp_length() const { return ramp_; }
  bool is_constant() const { return ramp_ == 0 || start_ == end_; }
  double inf() const { return std::min(start_, end_); }
  double sup() const { return std::max(start_, end_); }

  friend bool operator==(const Schedule&, const Schedule&) = default;

 private:
  Schedule(double s, double e, std::size_t r) : start_(s), end_(e), ramp_(r) {
    if (!std::isfinite(s) || !std::isfinite(e)) throw ParameterError("Schedule: values must be finite");
  }

  double start_ = 0.5;
  double end_ = 0.5;
  std::size_t ramp_ = 0;
};

/// Error sequences by slot. Single-layer uses a; double-layer a, b; DR a, b; primal-dual DR a, b, c, d;
/// forward-backward a, c.
struct ErrorSlots {
  ErrorModel a, b, c, d;
  friend bool operator==(const ErrorSlots&, const ErrorSlots&) = default;
};

struct SolverConfig {
  Schedule lambda = Schedule::constant(0.5);  ///< lambda_n
  Schedule mu = Schedule::constant(1.0);      ///< DR relaxations mu_n
  Schedule gamma_n = Schedule::constant(1.0); ///< forward-backward stepsizes
  double gamma = 1.0;                         ///< DR resolvent parameter
  std::size_t max_iterations = 100000;
  double tolerance = 1e-8;
  std::uint64_t seed = 0;
  std::optional<SweepingRule> rule;  ///< uniform single_block when absent
  ErrorSlots errors;
  std::size_t snapshot_stride = 10;
  std::optional<BlockVector> reference;

  SweepingRule rule_for(std::size_t m) const {
    if (!rule) return SweepingRule::uniform_single_block(m);
    if (rule->block_count() != m)
      throw ShapeError("SolverConfig: sweeping rule has " + std::to_string(rule->block_count()) + " blocks, problem has " +
                       std::to_string(m));
    return *rule;
  }
};

namespace detail {
inline void require_common(const SolverConfig& cfg) {
  if (!(cfg.tolerance >= 0.0)) throw ParameterError("tolerance must be >= 0");
  if (cfg.snapshot_stride == 0) throw ParameterError("snapshot_stride must be >= 1");
}
}  // namespace detail

/// inf lambda_n > 0 and sup lambda_n < 1.
inline void validate_single_layer(const SolverConfig& cfg) {
  detail::require_common(cfg);
  if (!(cfg.lambda.inf() > 0.0)) throw ParameterError("lambda: inf λₙ > 0 required by single-layer driver");
  if (!(cfg.lambda.sup() < 1.0)) throw ParameterError("lambda: sup λₙ < 1 required by single-layer driver");
}

/// lambda_n alpha_n in [chi, 1 - chi] for some chi > 0, checked over the first iterations.
inline void validate_averaged(const SolverConfig& cfg, const std::function<double(std::size_t)>& alpha) {
  detail::require_common(cfg);
  if (!(cfg.lambda.inf() > 0.0)) throw ParameterError("lambda: inf λₙ > 0 required by averaged driver");
  const std::size_t horizon = std::min<std::size_t>(cfg.max_iterations, 10000) + cfg.lambda.ramp_length() + 1;
  for (std::size_t n = 0; n <= horizon; ++n) {
    const double a = alpha(n);
    if (!(a > 0.0 && a < 1.0)) throw ParameterError("alpha: αₙ ∈ ]0,1[ required by averaged driver");
    const double p = cfg.lambda(n) * a;
    if (!(p > 0.0 && p < 1.0))
      throw ParameterError("lambda: λₙ ∈ [χ/αₙ, (1−χ)/αₙ] with χ > 0 required by averaged driver (λₙαₙ = " +
                           std::to_string(p) + " at n = " + std::to_string(n) + ")");
  }
}

/// lambda_n in ]0,1] with inf lambda_n > 0.
inline void validate_double_layer(const SolverConfig& cfg) {
  detail::require_common(cfg);
  if (!(cfg.lambda.inf() > 0.0)) throw ParameterError("lambda: inf λₙ > 0 required by double-layer driver");
  if (!(cfg.lambda.sup() <= 1.0)) throw ParameterError("lambda: sequence in ]0,1] required by double-layer driver");
}

/// inf mu_n > 0, sup mu_n < 2, gamma > 0.
inline void validate_dr(const SolverConfig& cfg) {
  detail::require_common(cfg);
  if (!(cfg.gamma > 0.0)) throw ParameterError("gamma: γ ∈ ]0,+∞[ required by Douglas-Rachford driver");
  if (!(cfg.mu.inf() > 0.0)) throw ParameterError("mu: inf μₙ > 0 required by Douglas-Rachford driver");
  if (!(cfg.mu.sup() < 2.0)) throw ParameterError("mu: sup μₙ < 2 required by Douglas-Rachford driver");
}

/// gamma_n in ]0, 2 theta[ with inf > 0 and sup < 2 theta; lambda_n in ]0,1] with inf > 0.
inline void validate_fb(const SolverConfig& cfg, double theta) {
  validate_double_layer(cfg);
  if (!(cfg.gamma_n.inf() > 0.0)) throw ParameterError("gamma: inf γₙ > 0 required, sequence in ]0,2ϑ[");
  if (!(cfg.gamma_n.sup() < 2.0 * theta))
    throw ParameterError("gamma: sequence in ]0,2ϑ[ required by forward-backward driver (sup γₙ = " +
                         std::to_string(cfg.gamma_n.sup()) + ", 2ϑ = " + std::to_string(2.0 * theta) + ")");
}

struct IterationRecord {
  std::size_t n = 0;
  double residual = 0.0;  ///< ||candidate - x_n|| with full activation, unit relaxation and no errors
  std::optional<double> dist_to_ref;
  ActivationMask mask;  ///< empty on the terminal record, where no update is made
  std::optional<double> relax;
  std::optional<double> gamma;
  std::optional<double> objective;
  double error_norm = 0.0;  ///< sum of the norms of the injected errors
};

struct Snapshot {
  std::size_t n = 0;
  BlockVector x;
};

enum class Termination { converged, max_iterations };

inline const char* to_string(Termination t) { return t == Termination::converged ? "converged" : "max_iterations"; }

struct IterateTrace {
  std::vector<IterationRecord> records;
  std::vector<Snapshot> snapshots;
  BlockVector final_iterate;
  Termination termination = Termination::max_iterations;

  bool converged() const { return termination == Termination::converged; }
  std::size_t iterations() const { return records.empty() ? 0 : records.size() - 1; }
  double final_residual() const {
    return records.empty() ? std::numeric_limits<double>::infinity() : records.back().residual;
  }
  std::optional<double> final_distance() const {
    return records.empty() ? std::nullopt : records.back().dist_to_ref;
  }
};

/// Same iterate path: masks, residuals, relaxations, snapshots and final iterate agree bit for bit.
inline bool same_path(const IterateTrace& a, const IterateTrace& b) {
  if (a.records.size() != b.records.size() || a.snapshots.size() != b.snapshots.size()) return false;
  if (a.termination != b.termination || !(a.final_iterate == b.final_iterate)) return false;
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    const auto& r = a.records[k];
    const auto& s = b.records[k];
    if (r.n != s.n || r.residual != s.residual || !(r.mask == s.mask) || r.relax != s.relax ||
        r.dist_to_ref != s.dist_to_ref)
      return false;
  }
  for (std::size_t k = 0; k < a.snapshots.size(); ++k)
    if (a.snapshots[k].n != b.snapshots[k].n || !(a.snapshots[k].x == b.snapshots[k].x)) return false;
  return true;
}

struct PrimalDualSolution {
  BlockVector primal;                ///< x, or z = J_{gamma B} x for DR
  std::optional<BlockVector> dual;   ///< u = (x - z)/gamma, or (w - y)/gamma for primal-dual DR
  std::optional<BlockVector> governing;  ///< final governing iterate
};

struct SolveResult {
  IterateTrace trace;
  PrimalDualSolution solution;
};

}  // namespace blocksweep
