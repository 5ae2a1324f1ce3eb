#pragma once

// Operator families T_n: H -> H with a declared regularity class, and sampling-based regularity checks.

#include <functional>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "blocksweep/blockspace.hpp"

namespace blocksweep {

/// Regularity class of an operator family; averaged carries the schedule n -> alpha_n in (0,1).
struct Regularity {
  enum class Kind { quasinonexpansive, nonexpansive, averaged };
  Kind kind = Kind::nonexpansive;
  std::function<double(std::size_t)> alpha;

  static Regularity quasinonexpansive() { return {Kind::quasinonexpansive, nullptr}; }
  static Regularity nonexpansive() { return {Kind::nonexpansive, nullptr}; }
  static Regularity averaged(double a) {
    if (!(a > 0.0 && a < 1.0)) throw ParameterError("averaged: alpha must lie in (0,1)");
    return {Kind::averaged, [a](std::size_t) { return a; }};
  }
  static Regularity averaged(std::function<double(std::size_t)> schedule) {
    return {Kind::averaged, std::move(schedule)};
  }

  double alpha_at(std::size_t n) const {
    if (kind != Kind::averaged || !alpha) throw ParameterError("Regularity: alpha requested for a non-averaged tag");
    return alpha(n);
  }
};

inline const char* to_string(Regularity::Kind k) {
  switch (k) {
    case Regularity::Kind::quasinonexpansive:
      return "quasinonexpansive";
    case Regularity::Kind::nonexpansive:
      return "nonexpansive";
    case Regularity::Kind::averaged:
      return "averaged";
  }
  return "?";
}

/// Family (T_n) with T_n x = (T_{i,n} x)_i, evaluated on the full iterate.
class BlockOperatorFamily {
 public:
  using Evaluator = std::function<BlockVector(std::size_t n, const BlockVector&)>;

  BlockOperatorFamily(BlockDims dims, Evaluator eval, Regularity tag, std::vector<BlockVector> fixed_points = {})
      : dims_(std::move(dims)), eval_(std::move(eval)), tag_(std::move(tag)), fixed_points_(std::move(fixed_points)) {
    for (auto& z : fixed_points_) require_same_dims(z, BlockVector(dims_), "BlockOperatorFamily fixed point");
  }

  /// n-independent operator.
  static BlockOperatorFamily stationary(BlockDims dims, std::function<BlockVector(const BlockVector&)> T,
                                        Regularity tag, std::vector<BlockVector> fixed_points = {}) {
    return BlockOperatorFamily(
        std::move(dims), [T = std::move(T)](std::size_t, const BlockVector& x) { return T(x); }, std::move(tag),
        std::move(fixed_points));
  }

  static BlockOperatorFamily identity(BlockDims dims) {
    return stationary(std::move(dims), [](const BlockVector& x) { return x; }, Regularity::averaged(0.5));
  }

  BlockVector operator()(std::size_t n, const BlockVector& x) const {
    if (x.dims() != dims_) throw ShapeError("BlockOperatorFamily: input dims mismatch");
    return eval_(n, x);
  }

  const BlockDims& dims() const { return dims_; }
  const Regularity& regularity() const { return tag_; }
  const std::vector<BlockVector>& fixed_points() const { return fixed_points_; }

  BlockOperatorFamily with_regularity(Regularity tag) const {
    return BlockOperatorFamily(dims_, eval_, std::move(tag), fixed_points_);
  }

 private:
  BlockDims dims_;
  Evaluator eval_;
  Regularity tag_;
  std::vector<BlockVector> fixed_points_;
};

struct RegularityReport {
  std::size_t violations = 0;
  std::size_t checks = 0;
  /// Smallest value of (right side - left side) of the defining inequality; negative means violated.
  double worst_slack = std::numeric_limits<double>::infinity();
};

struct RegularityTestOptions {
  double tolerance = 1e-9;
  std::size_t iteration = 0;  ///< which member T_n of the family is tested
  /// Sample points are gaussian with a scale drawn from these values.
  std::vector<double> scales = {0.1, 1.0, 10.0};
};

/// Evaluates the inequality that defines `claim` on random samples.
///   nonexpansive:        ||Tx - Ty||^2 <= ||x - y||^2
///   averaged(alpha):     ||Tx - Ty||^2 <= ||x - y||^2 - (1-alpha)/alpha ||(x - Tx) - (y - Ty)||^2
///   quasinonexpansive:   ||Tx - z|| <= ||x - z|| for each supplied fixed point z
inline RegularityReport regularity_test(const BlockOperatorFamily& T, const Regularity& claim,
                                        std::size_t sample_count, std::uint64_t seed,
                                        const RegularityTestOptions& opt = {}) {
  if (claim.kind == Regularity::Kind::quasinonexpansive && T.fixed_points().empty())
    throw ParameterError("regularity_test: a quasinonexpansive claim needs at least one known fixed point");
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> gauss;
  std::uniform_int_distribution<std::size_t> pick(0, opt.scales.size() - 1);
  const auto n_total = static_cast<Eigen::Index>(T.dims().total());
  auto sample = [&] {
    const double s = opt.scales[pick(gen)];
    Vector v(n_total);
    for (Eigen::Index j = 0; j < n_total; ++j) v[j] = s * gauss(gen);
    return BlockVector(T.dims(), std::move(v));
  };

  RegularityReport report;
  auto record = [&](double slack) {
    ++report.checks;
    report.worst_slack = std::min(report.worst_slack, slack);
    if (slack < -opt.tolerance) ++report.violations;
  };

  const std::size_t n = opt.iteration;
  for (std::size_t s = 0; s < sample_count; ++s) {
    if (claim.kind == Regularity::Kind::quasinonexpansive) {
      const BlockVector x = sample();
      const BlockVector Tx = T(n, x);
      for (const auto& z : T.fixed_points()) record(distance(x, z) - distance(Tx, z));
      continue;
    }
    const BlockVector x = sample();
    const BlockVector y = sample();
    const Vector Tx = T(n, x).flat();
    const Vector Ty = T(n, y).flat();
    const double lhs = (Tx - Ty).squaredNorm();
    double rhs = (x.flat() - y.flat()).squaredNorm();
    if (claim.kind == Regularity::Kind::averaged) {
      const double a = claim.alpha_at(n);
      rhs -= (1.0 - a) / a * ((x.flat() - Tx) - (y.flat() - Ty)).squaredNorm();
    }
    record(rhs - lhs);
  }
  return report;
}

}  // namespace blocksweep
