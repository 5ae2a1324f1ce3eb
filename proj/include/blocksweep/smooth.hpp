#pragma once

// Smooth coupling terms h(x) = sum_k g_k(sum_i L_ki x_i) and the cocoercivity constant of grad h.

#include <cmath>
#include <functional>
#include <optional>

#include "blocksweep/linear.hpp"

namespace blocksweep {

/// Differentiable convex g: R^dim -> R whose gradient is tau-Lipschitz.
class SmoothFunction {
 public:
  enum class Kind { sq_distance, quadratic, log_cosh, custom };

  /// (weight/2) ||y - center||^2, tau = weight.
  static SmoothFunction sq_distance(Vector center, double weight = 1.0) {
    if (!(weight > 0.0)) throw ParameterError("sq_distance: weight must be > 0");
    SmoothFunction g(Kind::sq_distance, static_cast<std::size_t>(center.size()), weight);
    g.Q_ = weight * Matrix::Identity(center.size(), center.size());
    g.b_ = -weight * center;
    g.center_ = std::move(center);
    g.weight_ = weight;
    return g;
  }

  /// y'Qy/2 + b'y, Q symmetric positive semidefinite and nonzero, tau = ||Q||.
  static SmoothFunction quadratic(Matrix Q, Vector b) {
    if (Q.rows() != Q.cols() || Q.rows() != b.size()) throw ShapeError("quadratic: shape mismatch");
    if (!detail::is_symmetric(Q)) throw ParameterError("quadratic: Q must be symmetric");
    if (detail::min_sym_eigenvalue(Q) < -1e-10 * std::max(1.0, Q.cwiseAbs().maxCoeff()))
      throw ParameterError("quadratic: Q must be positive semidefinite");
    const double tau = spectral_norm_psd(Q);
    if (!(tau > 0.0)) throw ParameterError("quadratic: Q must be nonzero");
    SmoothFunction g(Kind::quadratic, static_cast<std::size_t>(b.size()), tau);
    g.Q_ = std::move(Q);
    g.b_ = std::move(b);
    return g;
  }

  /// weight * sum_j log cosh(y_j - c_j), tau = weight.
  static SmoothFunction log_cosh(Vector center, double weight = 1.0) {
    if (!(weight > 0.0)) throw ParameterError("log_cosh: weight must be > 0");
    SmoothFunction g(Kind::log_cosh, static_cast<std::size_t>(center.size()), weight);
    g.center_ = std::move(center);
    g.weight_ = weight;
    return g;
  }

  static SmoothFunction custom(std::size_t dim, double tau, std::function<double(const Vector&)> value,
                               std::function<Vector(const Vector&)> gradient) {
    if (!(tau > 0.0)) throw ParameterError("custom smooth function: tau must be > 0");
    SmoothFunction g(Kind::custom, dim, tau);
    g.value_ = std::move(value);
    g.gradient_ = std::move(gradient);
    return g;
  }

  Kind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  double tau() const { return tau_; }
  double weight() const { return weight_; }
  const Vector& center() const { return center_; }
  /// Hessian and linear term for the quadratic kinds.
  bool is_quadratic() const { return kind_ == Kind::sq_distance || kind_ == Kind::quadratic; }
  const Matrix& Q() const { return Q_; }
  const Vector& b() const { return b_; }

  double value(const Vector& y) const {
    check(y);
    switch (kind_) {
      case Kind::sq_distance:
        return 0.5 * weight_ * (y - center_).squaredNorm();
      case Kind::quadratic:
        return 0.5 * y.dot(Q_ * y) + b_.dot(y);
      case Kind::log_cosh: {
        double s = 0.0;
        for (Eigen::Index j = 0; j < y.size(); ++j) {
          const double t = std::abs(y[j] - center_[j]);
          // log cosh t = t + log1p(exp(-2t)) - log 2, stable for large t
          s += t + std::log1p(std::exp(-2.0 * t)) - std::log(2.0);
        }
        return weight_ * s;
      }
      case Kind::custom:
        return value_(y);
    }
    return 0.0;
  }

  Vector gradient(const Vector& y) const {
    check(y);
    switch (kind_) {
      case Kind::sq_distance:
        return weight_ * (y - center_);
      case Kind::quadratic:
        return Q_ * y + b_;
      case Kind::log_cosh:
        return weight_ * (y - center_).array().tanh().matrix();
      case Kind::custom:
        return gradient_(y);
    }
    return y;
  }

 private:
  SmoothFunction(Kind k, std::size_t dim, double tau) : kind_(k), dim_(dim), tau_(tau) {
    if (dim == 0) throw ShapeError("SmoothFunction: dimension must be >= 1");
  }

  void check(const Vector& y) const {
    if (static_cast<std::size_t>(y.size()) != dim_) throw ShapeError("SmoothFunction: input length mismatch");
  }

  Kind kind_;
  std::size_t dim_;
  double tau_;
  double weight_ = 1.0;
  Vector center_;
  Matrix Q_;
  Vector b_;
  std::function<double(const Vector&)> value_;
  std::function<Vector(const Vector&)> gradient_;
};

namespace detail {
inline void check_smooth_terms(const LinearBlockOperator& L, const std::vector<SmoothFunction>& g) {
  if (g.size() != L.rows())
    throw ShapeError("coupling: " + std::to_string(g.size()) + " smooth terms for " + std::to_string(L.rows()) +
                     " rows of L");
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g[k].dim() != L.target()[k]) throw ShapeError("coupling: smooth term " + std::to_string(k) + " has wrong dimension");
}
}  // namespace detail

/// x -> (sum_k L_ki' grad g_k(sum_j L_kj x_j))_i, the gradient of h(x) = sum_k g_k((Lx)_k).
class CouplingGradient {
 public:
  CouplingGradient(LinearBlockOperator L, std::vector<SmoothFunction> g) : L_(std::move(L)), g_(std::move(g)) {
    detail::check_smooth_terms(L_, g_);
  }

  const LinearBlockOperator& op() const { return L_; }
  const std::vector<SmoothFunction>& terms() const { return g_; }

  BlockVector operator()(const BlockVector& x) const {
    const BlockVector y = L_.apply(x);
    BlockVector grads(L_.target());
    for (std::size_t k = 0; k < g_.size(); ++k) grads.block(k) = g_[k].gradient(y.block(k));
    return L_.adjoint(grads);
  }

  /// h(x)
  double value(const BlockVector& x) const {
    const BlockVector y = L_.apply(x);
    double s = 0.0;
    for (std::size_t k = 0; k < g_.size(); ++k) s += g_[k].value(y.block(k));
    return s;
  }

  std::vector<double> taus() const {
    std::vector<double> t;
    for (auto& g : g_) t.push_back(g.tau());
    return t;
  }

 private:
  LinearBlockOperator L_;
  std::vector<SmoothFunction> g_;
};

inline BlockVector forward_coupling_eval(const LinearBlockOperator& L, const std::vector<SmoothFunction>& g,
                                         const BlockVector& x) {
  return CouplingGradient(L, g)(x);
}

/// (sum_k tau_k || sum_i L_ki L_ki' ||)^{-1}; requires every row of the grid to be nonzero.
inline double cocoercivity_bound(const LinearBlockOperator& L, const std::vector<double>& taus) {
  if (taus.size() != L.rows()) throw ShapeError("cocoercivity_bound: one tau per row of L required");
  double denom = 0.0;
  for (std::size_t k = 0; k < L.rows(); ++k) {
    if (!(taus[k] > 0.0)) throw ParameterError("cocoercivity_bound: tau_k must be > 0");
    if (!(L.row_energy(k) > 0.0))
      throw HypothesisError("cocoercivity_bound: row " + std::to_string(k) +
                            " of L vanishes; min_k sum_i ||L_ki||^2 > 0 is required");
    denom += taus[k] * spectral_norm_psd(L.row_gram(k));
  }
  return 1.0 / denom;
}

}  // namespace blocksweep
