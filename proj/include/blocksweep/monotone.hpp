#pragma once

// Maximally monotone operators with computable resolvents J_{gamma A} = (Id + gamma A)^{-1}.

#include <functional>
#include <memory>
#include <optional>
#include <variant>

#include "blocksweep/prox.hpp"

namespace blocksweep {

/// Operator on a single block R^dim.
class MonotoneOperator {
 public:
  enum class Kind { subdifferential, linear_monotone, normal_cone };

  /// A = df, resolvent prox_{gamma f}.
  static MonotoneOperator subdifferential(ProxFunction f) {
    MonotoneOperator A(Kind::subdifferential, f.dim());
    A.f_ = std::make_shared<const ProxFunction>(std::move(f));
    return A;
  }

  /// A x = M x + q with v'Mv >= 0 for all v.
  static MonotoneOperator linear_monotone(Matrix M, std::optional<Vector> q = std::nullopt) {
    if (M.rows() != M.cols() || M.rows() == 0) throw ShapeError("linear_monotone: M must be square and nonempty");
    if (q && q->size() != M.rows()) throw ShapeError("linear_monotone: offset length differs from M");
    const double tol = 1e-10 * std::max(1.0, M.cwiseAbs().maxCoeff());
    if (detail::min_sym_eigenvalue(M) < -tol)
      throw ParameterError("linear_monotone: symmetric part of M has a negative eigenvalue");
    MonotoneOperator A(Kind::linear_monotone, static_cast<std::size_t>(M.rows()));
    A.q_ = q ? *q : Vector::Zero(M.rows());
    A.M_ = std::move(M);
    return A;
  }

  /// Normal cone of the box [lo, hi]; resolvent is the projection.
  static MonotoneOperator normal_cone(Vector lo, Vector hi) {
    ProxFunction box = ProxFunction::indicator_box(std::move(lo), std::move(hi));
    MonotoneOperator A(Kind::normal_cone, box.dim());
    A.f_ = std::make_shared<const ProxFunction>(std::move(box));
    return A;
  }

  static MonotoneOperator zero(std::size_t dim) { return subdifferential(ProxFunction::zero(dim)); }

  Kind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  /// Underlying function for subdifferentials (and the box indicator for normal cones).
  const ProxFunction* function() const { return f_.get(); }
  const Matrix& matrix() const { return M_; }
  const Vector& offset() const { return q_; }

  /// J_{gamma A} x, or 2 J_{gamma A} x - x when `reflected`.
  Vector resolvent(double gamma, const Vector& x, bool reflected = false) const {
    detail::require_positive_gamma(gamma, "resolvent");
    if (static_cast<std::size_t>(x.size()) != dim_) throw ShapeError("resolvent: input length mismatch");
    Vector y;
    switch (kind_) {
      case Kind::subdifferential:
      case Kind::normal_cone:
        y = f_->prox(gamma, x);
        break;
      case Kind::linear_monotone:
        y = detail::solve_shifted(M_, gamma, x - gamma * q_);
        break;
    }
    if (reflected) return 2.0 * y - x;
    return y;
  }

  /// A x for single-valued kinds (affine maps and gradients of smooth catalog functions).
  std::optional<Vector> forward(const Vector& x) const {
    switch (kind_) {
      case Kind::linear_monotone:
        return Vector(M_ * x + q_);
      case Kind::subdifferential:
        return f_->gradient(x);
      case Kind::normal_cone:
        return std::nullopt;
    }
    return std::nullopt;
  }

  bool single_valued() const {
    return kind_ == Kind::linear_monotone || (kind_ == Kind::subdifferential && f_->differentiable());
  }

 private:
  MonotoneOperator(Kind k, std::size_t dim) : kind_(k), dim_(dim) {}

  Kind kind_;
  std::size_t dim_;
  std::shared_ptr<const ProxFunction> f_;
  Matrix M_;
  Vector q_;
};

inline Vector resolvent(const MonotoneOperator& A, double gamma, const Vector& x, bool reflected = false) {
  return A.resolvent(gamma, x, reflected);
}

/// Blockwise resolvent of A = A_1 x ... x A_m.
inline BlockVector product_resolvent(const std::vector<MonotoneOperator>& ops, double gamma, const BlockVector& x) {
  if (ops.size() != x.block_count()) throw ShapeError("product_resolvent: operator count differs from block count");
  BlockVector out(x.dims());
  for (std::size_t i = 0; i < ops.size(); ++i) out.block(i) = ops[i].resolvent(gamma, x.block(i));
  return out;
}

/// Possibly coupled operator B on the whole product space (the second operator of a DR splitting).
class CoupledOperator {
 public:
  using ResolventFn = std::function<BlockVector(double gamma, const BlockVector&)>;
  using ForwardFn = std::function<BlockVector(const BlockVector&)>;

  /// B = B_1 x ... x B_m acting block by block.
  static CoupledOperator separable(std::vector<MonotoneOperator> ops) {
    if (ops.empty()) throw ShapeError("CoupledOperator::separable: no operators");
    std::vector<std::size_t> d;
    for (auto& op : ops) d.push_back(op.dim());
    CoupledOperator B{BlockDims(d)};
    auto shared = std::make_shared<const std::vector<MonotoneOperator>>(std::move(ops));
    B.resolvent_ = [shared](double g, const BlockVector& x) { return product_resolvent(*shared, g, x); };
    bool single = true;
    for (auto& op : *shared) single = single && op.single_valued();
    if (single) {
      B.forward_ = [shared](const BlockVector& x) {
        BlockVector out(x.dims());
        for (std::size_t i = 0; i < shared->size(); ++i) out.block(i) = *(*shared)[i].forward(x.block(i));
        return out;
      };
    }
    return B;
  }

  /// B x = M x + q over the concatenated coordinates, M monotone.
  static CoupledOperator affine(BlockDims dims, Matrix M, Vector q) {
    const auto n = static_cast<Eigen::Index>(dims.total());
    if (M.rows() != n || M.cols() != n || q.size() != n) throw ShapeError("CoupledOperator::affine: shape mismatch");
    const double tol = 1e-10 * std::max(1.0, M.cwiseAbs().maxCoeff());
    if (detail::min_sym_eigenvalue(M) < -tol) throw ParameterError("CoupledOperator::affine: M is not monotone");
    CoupledOperator B{dims};
    auto Mp = std::make_shared<const Matrix>(std::move(M));
    auto qp = std::make_shared<const Vector>(std::move(q));
    B.resolvent_ = [Mp, qp](double g, const BlockVector& x) {
      detail::require_positive_gamma(g, "resolvent");
      return BlockVector(x.dims(), detail::solve_shifted(*Mp, g, x.flat() - g * *qp));
    };
    B.forward_ = [Mp, qp](const BlockVector& x) { return BlockVector(x.dims(), Vector(*Mp * x.flat() + *qp)); };
    B.affine_ = std::make_pair(*Mp, *qp);
    return B;
  }

  /// User-supplied resolvent; maximal monotonicity is taken on trust.
  static CoupledOperator custom(BlockDims dims, ResolventFn resolvent, ForwardFn forward = nullptr) {
    CoupledOperator B{std::move(dims)};
    B.resolvent_ = std::move(resolvent);
    B.forward_ = std::move(forward);
    return B;
  }

  const BlockDims& dims() const { return dims_; }

  BlockVector resolvent(double gamma, const BlockVector& x) const {
    if (x.dims() != dims_) throw ShapeError("CoupledOperator::resolvent: dimension mismatch");
    return resolvent_(gamma, x);
  }

  bool has_forward() const { return static_cast<bool>(forward_); }
  BlockVector forward(const BlockVector& x) const {
    if (!forward_) throw CapabilityError("CoupledOperator: no forward evaluation for a set-valued operator");
    return forward_(x);
  }

  const std::optional<std::pair<Matrix, Vector>>& affine_form() const { return affine_; }

 private:
  explicit CoupledOperator(BlockDims dims) : dims_(std::move(dims)) {}

  BlockDims dims_;
  ResolventFn resolvent_;
  ForwardFn forward_;
  std::optional<std::pair<Matrix, Vector>> affine_;
};

}  // namespace blocksweep
