#pragma once

// Closed-form proximity operators for a small catalog of functions in Gamma_0(R^d).

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "blocksweep/blockspace.hpp"

namespace blocksweep {

namespace detail {

inline void require_positive_gamma(double gamma, const char* where) {
  if (!(gamma > 0.0) || !std::isfinite(gamma))
    throw ParameterError(std::string(where) + ": gamma must be a finite positive number");
}

inline bool is_symmetric(const Matrix& Q, double tol = 1e-12) {
  if (Q.rows() != Q.cols()) return false;
  const double scale = std::max(1.0, Q.cwiseAbs().maxCoeff());
  return (Q - Q.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

/// Smallest eigenvalue of the symmetric part of M.
inline double min_sym_eigenvalue(const Matrix& M) {
  const Matrix S = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Solve (I + gamma*M) y = rhs for monotone M; LU because M need not be symmetric.
inline Vector solve_shifted(const Matrix& M, double gamma, const Vector& rhs) {
  const Matrix A = Matrix::Identity(M.rows(), M.cols()) + gamma * M;
  Eigen::PartialPivLU<Matrix> lu(A);
  const double det = std::abs(lu.determinant());
  if (!(det > 0.0) || !std::isfinite(det)) throw NumericError("resolvent: singular system (Id + gamma M)");
  Vector y = lu.solve(rhs);
  if (!y.allFinite()) throw NumericError("resolvent: non-finite solution");
  return y;
}

}  // namespace detail

/// One function f of the catalog, defined on R^dim.
///
///  - zero:            f = 0
///  - l1:              f(y) = scale * ||y||_1
///  - sq_l2:           f(y) = (scale/2) ||y - center||^2
///  - indicator_box:   f = indicator of {lo <= y <= hi} (infinite bounds allowed)
///  - indicator_ball:  f = indicator of {||y - center|| <= radius}
///  - quadratic:       f(y) = y'Qy/2 + b'y with Q symmetric positive semidefinite
class ProxFunction {
 public:
  enum class Kind { zero, l1, sq_l2, indicator_box, indicator_ball, quadratic };

  static ProxFunction zero(std::size_t dim) {
    ProxFunction f(Kind::zero, dim);
    return f;
  }

  static ProxFunction l1(std::size_t dim, double scale = 1.0) {
    if (!(scale >= 0.0) || !std::isfinite(scale)) throw ParameterError("l1: scale must be finite and >= 0");
    ProxFunction f(Kind::l1, dim);
    f.scale_ = scale;
    return f;
  }

  static ProxFunction sq_l2(Vector center, double scale = 1.0) {
    if (!(scale >= 0.0) || !std::isfinite(scale)) throw ParameterError("sq_l2: scale must be finite and >= 0");
    ProxFunction f(Kind::sq_l2, static_cast<std::size_t>(center.size()));
    f.center_ = std::move(center);
    f.scale_ = scale;
    return f;
  }

  static ProxFunction indicator_box(Vector lo, Vector hi) {
    if (lo.size() != hi.size()) throw ShapeError("indicator_box: lo and hi lengths differ");
    for (Eigen::Index j = 0; j < lo.size(); ++j)
      if (!(lo[j] <= hi[j])) throw ParameterError("indicator_box: lo <= hi required componentwise");
    ProxFunction f(Kind::indicator_box, static_cast<std::size_t>(lo.size()));
    f.lo_ = std::move(lo);
    f.hi_ = std::move(hi);
    return f;
  }

  static ProxFunction indicator_box(std::size_t dim, double lo, double hi) {
    return indicator_box(Vector::Constant(dim, lo), Vector::Constant(dim, hi));
  }

  static ProxFunction indicator_ball(Vector center, double radius) {
    if (!(radius > 0.0) || !std::isfinite(radius)) throw ParameterError("indicator_ball: radius must be > 0");
    ProxFunction f(Kind::indicator_ball, static_cast<std::size_t>(center.size()));
    f.center_ = std::move(center);
    f.radius_ = radius;
    return f;
  }

  static ProxFunction quadratic(Matrix Q, Vector b) {
    if (Q.rows() != Q.cols() || Q.rows() != b.size()) throw ShapeError("quadratic: Q must be d x d and b of length d");
    if (!detail::is_symmetric(Q)) throw ParameterError("quadratic: Q must be symmetric");
    if (Q.size() > 0 && detail::min_sym_eigenvalue(Q) < -1e-10 * std::max(1.0, Q.cwiseAbs().maxCoeff()))
      throw ParameterError("quadratic: Q must be positive semidefinite");
    ProxFunction f(Kind::quadratic, static_cast<std::size_t>(b.size()));
    f.Q_ = std::move(Q);
    f.b_ = std::move(b);
    return f;
  }

  Kind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  double scale() const { return scale_; }
  double radius() const { return radius_; }
  const Vector& center() const { return center_; }
  const Vector& lo() const { return lo_; }
  const Vector& hi() const { return hi_; }
  const Matrix& Q() const { return Q_; }
  const Vector& b() const { return b_; }

  /// argmin_y f(y) + ||x - y||^2 / (2 gamma).
  Vector prox(double gamma, const Vector& x) const {
    detail::require_positive_gamma(gamma, "prox_eval");
    check_dim(x, "prox_eval");
    switch (kind_) {
      case Kind::zero:
        return x;
      case Kind::l1: {
        const double t = gamma * scale_;
        return x.unaryExpr([t](double v) { return v > t ? v - t : (v < -t ? v + t : 0.0); });
      }
      case Kind::sq_l2:
        return (x + gamma * scale_ * center_) / (1.0 + gamma * scale_);
      case Kind::indicator_box:
        return x.cwiseMax(lo_).cwiseMin(hi_);
      case Kind::indicator_ball: {
        const Vector d = x - center_;
        const double n = d.norm();
        if (n <= radius_) return x;
        return center_ + (radius_ / n) * d;
      }
      case Kind::quadratic: {
        const Matrix A = Matrix::Identity(dim_, dim_) + gamma * Q_;
        Eigen::LLT<Matrix> llt(A);
        if (llt.info() != Eigen::Success) throw NumericError("prox_eval: (Id + gamma Q) not positive definite");
        return llt.solve(x - gamma * b_);
      }
    }
    return x;
  }

  /// f(y); +inf outside the domain of an indicator.
  double value(const Vector& y) const {
    check_dim(y, "value");
    constexpr double inf = std::numeric_limits<double>::infinity();
    switch (kind_) {
      case Kind::zero:
        return 0.0;
      case Kind::l1:
        return scale_ * y.lpNorm<1>();
      case Kind::sq_l2:
        return 0.5 * scale_ * (y - center_).squaredNorm();
      case Kind::indicator_box:
        for (Eigen::Index j = 0; j < y.size(); ++j)
          if (y[j] < lo_[j] || y[j] > hi_[j]) return inf;
        return 0.0;
      case Kind::indicator_ball:
        return (y - center_).norm() <= radius_ * (1.0 + 1e-12) ? 0.0 : inf;
      case Kind::quadratic:
        return 0.5 * y.dot(Q_ * y) + b_.dot(y);
    }
    return 0.0;
  }

  bool differentiable() const {
    return kind_ == Kind::zero || kind_ == Kind::sq_l2 || kind_ == Kind::quadratic;
  }

  /// Gradient for the differentiable kinds.
  std::optional<Vector> gradient(const Vector& y) const {
    check_dim(y, "gradient");
    switch (kind_) {
      case Kind::zero:
        return Vector::Zero(dim_);
      case Kind::sq_l2:
        return Vector(scale_ * (y - center_));
      case Kind::quadratic:
        return Vector(Q_ * y + b_);
      default:
        return std::nullopt;
    }
  }

  /// Fenchel conjugate when it is again a catalog member (up to an additive constant).
  ///  l1(k) <-> box[-k, k];  indicator of {c} <-> linear <c, .>;  sq_l2 and definite quadratics map to quadratics.
  std::optional<ProxFunction> conjugate() const {
    switch (kind_) {
      case Kind::zero:
        return indicator_box(Vector::Zero(dim_), Vector::Zero(dim_));
      case Kind::l1:
        return indicator_box(dim_, -scale_, scale_);
      case Kind::indicator_box: {
        if ((lo_.array() == hi_.array()).all()) return quadratic(Matrix::Zero(dim_, dim_), lo_);
        const double k = hi_[0];
        if (std::isfinite(k) && (hi_.array() == k).all() && (lo_.array() == -k).all()) return l1(dim_, k);
        return std::nullopt;
      }
      case Kind::sq_l2:
        if (scale_ <= 0.0) return std::nullopt;
        return quadratic(Matrix::Identity(dim_, dim_) / scale_, center_);
      case Kind::quadratic: {
        Eigen::LLT<Matrix> llt(Q_);
        if (llt.info() != Eigen::Success || detail::min_sym_eigenvalue(Q_) <= 0.0) return std::nullopt;
        Matrix Qinv = llt.solve(Matrix::Identity(dim_, dim_));
        Qinv = 0.5 * (Qinv + Qinv.transpose());
        return quadratic(Qinv, -Qinv * b_);
      }
      case Kind::indicator_ball:
        return std::nullopt;
    }
    return std::nullopt;
  }

 private:
  ProxFunction(Kind k, std::size_t dim) : kind_(k), dim_(dim) {
    if (dim == 0) throw ShapeError("ProxFunction: dimension must be >= 1");
  }

  void check_dim(const Vector& x, const char* where) const {
    if (static_cast<std::size_t>(x.size()) != dim_)
      throw ShapeError(std::string(where) + ": input of length " + std::to_string(x.size()) +
                       " for a function on R^" + std::to_string(dim_));
  }

  Kind kind_ = Kind::zero;
  std::size_t dim_ = 1;
  double scale_ = 1.0;
  double radius_ = 1.0;
  Vector center_, lo_, hi_;
  Matrix Q_;
  Vector b_;
};

inline Vector prox_eval(const ProxFunction& f, double gamma, const Vector& x) { return f.prox(gamma, x); }

}  // namespace blocksweep
