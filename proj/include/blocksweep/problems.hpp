#pragma once

// Problem bundles consumed by the diagnostics layer and the command-line tool.

#include <variant>

#include "blocksweep/solvers.hpp"

namespace blocksweep {

/// 0 in A_i x_i + B_i x, B cocoercive.
struct FbProblem {
  std::vector<MonotoneOperator> A;
  CocoerciveOperator B;
};

/// minimize sum_i f_i(x_i) + sum_k g_k(sum_i L_ki x_i).
struct FbMinProblem {
  std::vector<ProxFunction> f;
  std::vector<SmoothFunction> g;
  LinearBlockOperator L;
};

/// 0 in A x + B x with A separable and B coupled.
struct DrProblem {
  std::vector<MonotoneOperator> A;
  CoupledOperator B;
};

/// Fixed point of T reached from x0.
struct KmProblem {
  BlockOperatorFamily T;
  BlockVector x0;
};

using Problem = std::variant<FbProblem, FbMinProblem, DrProblem, PdProblem, KmProblem>;

/// Dimensions of the primal space H.
inline BlockDims primal_dims(const Problem& P) {
  struct {
    BlockDims operator()(const FbProblem& p) const { return p.B.dims(); }
    BlockDims operator()(const FbMinProblem& p) const { return p.L.source(); }
    BlockDims operator()(const DrProblem& p) const { return p.B.dims(); }
    BlockDims operator()(const PdProblem& p) const { return p.L().source(); }
    BlockDims operator()(const KmProblem& p) const { return p.T.dims(); }
  } visitor;
  return std::visit(visitor, P);
}

/// Projector onto the halfspace {y : <a, y> <= beta}.
inline std::function<Vector(const Vector&)> halfspace_projector(Vector a, double beta) {
  const double nsq = a.squaredNorm();
  if (!(nsq > 0.0)) throw ParameterError("halfspace: normal vector must be nonzero");
  return [a = std::move(a), beta, nsq](const Vector& y) -> Vector {
    const double excess = a.dot(y) - beta;
    if (excess <= 0.0) return y;
    return y - (excess / nsq) * a;
  };
}

struct Halfspace {
  Vector normal;
  double offset = 0.0;
};

/// T = P_1 o ... o P_r (nonexpansive, Fix T = intersection when nonempty) on blocks `dims`.
inline BlockOperatorFamily halfspace_composition(const BlockDims& dims, const std::vector<Halfspace>& hs) {
  if (hs.empty()) throw ParameterError("halfspace_composition: no halfspaces");
  std::vector<std::function<Vector(const Vector&)>> P;
  for (auto& h : hs) {
    if (static_cast<std::size_t>(h.normal.size()) != dims.total()) throw ShapeError("halfspace: normal has wrong length");
    P.push_back(halfspace_projector(h.normal, h.offset));
  }
  return BlockOperatorFamily::stationary(
      dims,
      [P](const BlockVector& x) {
        Vector v = x.flat();
        for (auto it = P.rbegin(); it != P.rend(); ++it) v = (*it)(v);
        return BlockVector(x.dims(), std::move(v));
      },
      Regularity::nonexpansive());
}

/// T = (P_1 + ... + P_r)/r, firmly nonexpansive (1/2-averaged).
inline BlockOperatorFamily halfspace_average(const BlockDims& dims, const std::vector<Halfspace>& hs) {
  if (hs.empty()) throw ParameterError("halfspace_average: no halfspaces");
  std::vector<std::function<Vector(const Vector&)>> P;
  for (auto& h : hs) {
    if (static_cast<std::size_t>(h.normal.size()) != dims.total()) throw ShapeError("halfspace: normal has wrong length");
    P.push_back(halfspace_projector(h.normal, h.offset));
  }
  return BlockOperatorFamily::stationary(
      dims,
      [P](const BlockVector& x) {
        Vector v = Vector::Zero(x.flat().size());
        for (auto& proj : P) v += proj(x.flat());
        v /= static_cast<double>(P.size());
        return BlockVector(x.dims(), std::move(v));
      },
      Regularity::averaged(0.5));
}

}  // namespace blocksweep
