#pragma once

// Linear block operators L: H -> G, their adjoints, and the projector onto the graph V = {(x, y) : y = Lx}.

#include <Eigen/Cholesky>

#include <cassert>
#include <random>
#include <utility>
#include <vector>

#include "blocksweep/blockspace.hpp"

namespace blocksweep {

struct PowerIterationOptions {
  int max_iterations = 200;
  double relative_tolerance = 1e-12;
};

/// Spectral norm of a symmetric positive semidefinite matrix by power iteration on the Rayleigh quotient.
inline double spectral_norm_psd(const Matrix& S, PowerIterationOptions opt = {}) {
  if (S.rows() != S.cols()) throw ShapeError("spectral_norm_psd: matrix must be square");
  const Eigen::Index n = S.rows();
  if (n == 0) return 0.0;
  const Matrix sym = 0.5 * (S + S.transpose());
  std::mt19937_64 gen(0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> gauss;
  Vector v(n);
  for (Eigen::Index j = 0; j < n; ++j) v[j] = 1.0 + 0.25 * gauss(gen);
  v.normalize();
  double estimate = 0.0;
  for (int it = 0; it < opt.max_iterations; ++it) {
    Vector w = sym * v;
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    const double next = v.dot(w);
    v = w / wn;
    if (it > 0 && std::abs(next - estimate) <= opt.relative_tolerance * std::abs(next)) {
      estimate = next;
      break;
    }
    estimate = next;
  }
  // One more Rayleigh quotient with the final direction.
  return std::max(estimate, v.dot(sym * v));
}

/// Spectral norm of an arbitrary matrix, via ||A||^2 = ||A' A||.
inline double spectral_norm(const Matrix& A, PowerIterationOptions opt = {}) {
  if (A.size() == 0) return 0.0;
  const Matrix S = A.rows() <= A.cols() ? Matrix(A * A.transpose()) : Matrix(A.transpose() * A);
  return std::sqrt(spectral_norm_psd(S, opt));
}

/// p x m grid of dense blocks L_ki : H_i -> G_k.
class LinearBlockOperator {
 public:
  LinearBlockOperator() = default;

  /// `grid[k][i]` is L_ki; all blocks in row k share a row count, all blocks in column i a column count.
  explicit LinearBlockOperator(std::vector<std::vector<Matrix>> grid) : grid_(std::move(grid)) {
    if (grid_.empty() || grid_.front().empty()) throw ShapeError("LinearBlockOperator: empty grid");
    const std::size_t p = grid_.size();
    const std::size_t m = grid_.front().size();
    std::vector<std::size_t> hd(m), gd(p);
    for (std::size_t k = 0; k < p; ++k) {
      if (grid_[k].size() != m) throw ShapeError("LinearBlockOperator: ragged grid");
      for (std::size_t i = 0; i < m; ++i) {
        const Matrix& B = grid_[k][i];
        if (k == 0) hd[i] = static_cast<std::size_t>(B.cols());
        if (i == 0) gd[k] = static_cast<std::size_t>(B.rows());
        if (static_cast<std::size_t>(B.cols()) != hd[i] || static_cast<std::size_t>(B.rows()) != gd[k])
          throw ShapeError("LinearBlockOperator: block (" + std::to_string(k) + "," + std::to_string(i) +
                           ") has inconsistent shape");
        if (!B.allFinite()) throw ParameterError("LinearBlockOperator: entries must be finite");
      }
    }
    source_ = BlockDims(hd);
    target_ = BlockDims(gd);
    dense_ = Matrix::Zero(static_cast<Eigen::Index>(target_.total()), static_cast<Eigen::Index>(source_.total()));
    for (std::size_t k = 0; k < p; ++k)
      for (std::size_t i = 0; i < m; ++i)
        dense_.block(target_.offset(k), source_.offset(i), gd[k], hd[i]) = grid_[k][i];
  }

  std::size_t rows() const { return grid_.size(); }        ///< p
  std::size_t cols() const { return grid_.front().size(); }  ///< m
  const Matrix& entry(std::size_t k, std::size_t i) const { return grid_.at(k).at(i); }
  const BlockDims& source() const { return source_; }
  const BlockDims& target() const { return target_; }
  const Matrix& dense() const { return dense_; }

  /// (sum_i L_ki x_i)_k
  BlockVector apply(const BlockVector& x) const {
    if (x.dims() != source_) throw ShapeError("LinearBlockOperator::apply: input dims mismatch");
    return BlockVector(target_, Vector(dense_ * x.flat()));
  }

  /// (sum_k L_ki' y_k)_i
  BlockVector adjoint(const BlockVector& y) const {
    if (y.dims() != target_) throw ShapeError("LinearBlockOperator::adjoint: input dims mismatch");
    return BlockVector(source_, Vector(dense_.transpose() * y.flat()));
  }

  /// sum_i ||L_ki||_F^2, zero iff row k of the grid vanishes.
  double row_energy(std::size_t k) const {
    double s = 0.0;
    for (const Matrix& B : grid_.at(k)) s += B.squaredNorm();
    return s;
  }

  /// sum_i L_ki L_ki'
  Matrix row_gram(std::size_t k) const {
    const auto d = static_cast<Eigen::Index>(target_[k]);
    Matrix S = Matrix::Zero(d, d);
    for (const Matrix& B : grid_.at(k)) S += B * B.transpose();
    return S;
  }

  static LinearBlockOperator identity(const BlockDims& dims) {
    const std::size_t m = dims.count();
    std::vector<std::vector<Matrix>> grid(m, std::vector<Matrix>(m));
    for (std::size_t k = 0; k < m; ++k)
      for (std::size_t i = 0; i < m; ++i)
        grid[k][i] = k == i ? Matrix(Matrix::Identity(dims[k], dims[i])) : Matrix(Matrix::Zero(dims[k], dims[i]));
    return LinearBlockOperator(std::move(grid));
  }

 private:
  std::vector<std::vector<Matrix>> grid_;
  BlockDims source_, target_;
  Matrix dense_;
};

/// Graph V of L with cached Cholesky factors of Id + L'L and Id + LL'.
class GraphSubspace {
 public:
  explicit GraphSubspace(LinearBlockOperator L) : L_(std::move(L)) {
    const Matrix& A = L_.dense();
    const Matrix primal = Matrix::Identity(A.cols(), A.cols()) + A.transpose() * A;
    const Matrix dual = Matrix::Identity(A.rows(), A.rows()) + A * A.transpose();
    primal_.compute(primal);
    dual_.compute(dual);
    if (primal_.info() != Eigen::Success || dual_.info() != Eigen::Success)
      throw NumericError("GraphSubspace: Cholesky factorization failed");
  }

  const LinearBlockOperator& op() const { return L_; }
  const BlockDims& source() const { return L_.source(); }
  const BlockDims& target() const { return L_.target(); }
  /// Dimensions of K = H (+) G.
  BlockDims product_dims() const { return L_.source().concat(L_.target()); }

  /// t = (Id + L'L)^{-1}(x + L'y), returns (t, Lt).
  std::pair<BlockVector, BlockVector> project_primal_route(const BlockVector& x, const BlockVector& y) const {
    check(x, y);
    const Matrix& A = L_.dense();
    Vector t = primal_.solve(x.flat() + A.transpose() * y.flat());
    Vector Lt = A * t;
    return {BlockVector(source(), std::move(t)), BlockVector(target(), std::move(Lt))};
  }

  /// s = (Id + LL')^{-1}(Lx - y), returns (x - L's, y + s).
  std::pair<BlockVector, BlockVector> project_dual_route(const BlockVector& x, const BlockVector& y) const {
    check(x, y);
    const Matrix& A = L_.dense();
    const Vector s = dual_.solve(A * x.flat() - y.flat());
    return {BlockVector(source(), Vector(x.flat() - A.transpose() * s)),
            BlockVector(target(), Vector(y.flat() + s))};
  }

  /// P_V(x, y); in debug builds both routes are compared.
  std::pair<BlockVector, BlockVector> project(const BlockVector& x, const BlockVector& y) const {
    auto out = project_primal_route(x, y);
#ifndef NDEBUG
    const auto alt = project_dual_route(x, y);
    const double scale = 1.0 + x.flat().norm() + y.flat().norm();
    assert(distance(out.first, alt.first) <= 1e-8 * scale);
    assert(distance(out.second, alt.second) <= 1e-8 * scale);
#endif
    return out;
  }

  /// P_V on a concatenated vector of K = H (+) G.
  BlockVector project(const BlockVector& k) const {
    const std::size_t m = source().count();
    const std::size_t p = target().count();
    if (k.dims() != product_dims()) throw ShapeError("GraphSubspace::project: dims mismatch");
    auto [t, Lt] = project(k.slice(0, m), k.slice(m, p));
    return t.concat(Lt);
  }

 private:
  void check(const BlockVector& x, const BlockVector& y) const {
    if (x.dims() != source() || y.dims() != target()) throw ShapeError("graph_projection: shapes do not match L");
  }

  LinearBlockOperator L_;
  Eigen::LLT<Matrix> primal_;
  Eigen::LLT<Matrix> dual_;
};

inline std::pair<BlockVector, BlockVector> graph_projection(const GraphSubspace& V, const BlockVector& x,
                                                            const BlockVector& y) {
  return V.project(x, y);
}

}  // namespace blocksweep
