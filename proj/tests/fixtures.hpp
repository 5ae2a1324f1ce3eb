#pragma once

// Random instances shared by the unit tests and the acceptance binary.

#include <random>

#include "blocksweep/blocksweep.hpp"
#include "oracles.hpp"

namespace fixture {

using namespace blocksweep;

inline BlockVector scalar_blocks(std::initializer_list<double> values) {
  std::vector<Vector> blocks;
  for (double v : values) blocks.push_back(Vector::Constant(1, v));
  return BlockVector(BlockDims::uniform(values.size(), 1), blocks);
}

inline BlockVector random_vector(std::mt19937_64& gen, const BlockDims& dims, double scale = 1.0) {
  return BlockVector(dims, oracle::gaussian(gen, static_cast<Eigen::Index>(dims.total()), scale));
}

inline Matrix random_psd(std::mt19937_64& gen, Eigen::Index d, double ridge = 0.0) {
  const Matrix G = oracle::gaussian_matrix(gen, d, d);
  return G * G.transpose() / static_cast<double>(d) + ridge * Matrix::Identity(d, d);
}

/// Catalog member of the given kind on R^d with random parameters.
inline ProxFunction random_prox(std::mt19937_64& gen, ProxFunction::Kind kind, std::size_t d) {
  std::uniform_real_distribution<double> u(0.2, 2.0);
  const auto n = static_cast<Eigen::Index>(d);
  using K = ProxFunction::Kind;
  switch (kind) {
    case K::zero:
      return ProxFunction::zero(d);
    case K::l1:
      return ProxFunction::l1(d, u(gen));
    case K::sq_l2:
      return ProxFunction::sq_l2(oracle::gaussian(gen, n), u(gen));
    case K::indicator_box: {
      const Vector a = oracle::gaussian(gen, n);
      return ProxFunction::indicator_box(a, a + Vector::Constant(n, u(gen)));
    }
    case K::indicator_ball:
      return ProxFunction::indicator_ball(oracle::gaussian(gen, n), u(gen));
    case K::quadratic:
      return ProxFunction::quadratic(random_psd(gen, n), oracle::gaussian(gen, n));
  }
  return ProxFunction::zero(d);
}

inline constexpr ProxFunction::Kind kAllKinds[] = {ProxFunction::Kind::zero,          ProxFunction::Kind::l1,
                                                   ProxFunction::Kind::sq_l2,         ProxFunction::Kind::indicator_box,
                                                   ProxFunction::Kind::indicator_ball, ProxFunction::Kind::quadratic};

/// Blockwise prox operator T = prox_{f_1} x ... x prox_{f_m} with kinds drawn at random.
inline std::vector<ProxFunction> random_prox_family(std::mt19937_64& gen, const BlockDims& dims) {
  std::uniform_int_distribution<int> pick(0, 5);
  std::vector<ProxFunction> f;
  for (std::size_t i = 0; i < dims.count(); ++i) f.push_back(random_prox(gen, kAllKinds[pick(gen)], dims[i]));
  return f;
}

inline BlockOperatorFamily prox_operator(const std::vector<ProxFunction>& f, const BlockDims& dims, double gamma = 1.0) {
  return BlockOperatorFamily::stationary(
      dims,
      [f, gamma](const BlockVector& x) {
        BlockVector out(x.dims());
        for (std::size_t i = 0; i < f.size(); ++i) out.block(i) = f[i].prox(gamma, x.block(i));
        return out;
      },
      Regularity::averaged(0.5));
}

/// A minimizer of f, hence a fixed point of prox_{gamma f} for every gamma.
inline Vector minimizer_of(const ProxFunction& f) {
  using K = ProxFunction::Kind;
  const auto n = static_cast<Eigen::Index>(f.dim());
  switch (f.kind()) {
    case K::zero:
    case K::l1:
      return Vector::Zero(n);
    case K::sq_l2:
    case K::indicator_ball:
      return f.center();
    case K::indicator_box:
      return 0.5 * (f.lo() + f.hi());
    case K::quadratic:
      return f.Q().ldlt().solve(-f.b());
  }
  return Vector::Zero(n);
}

inline BlockVector minimizer_of(const std::vector<ProxFunction>& f, const BlockDims& dims) {
  BlockVector z(dims);
  for (std::size_t i = 0; i < f.size(); ++i) z.block(i) = minimizer_of(f[i]);
  return z;
}

/// Random 1..8 x 1..8 block grid with block sizes 1..2.
inline LinearBlockOperator random_grid(std::mt19937_64& gen, std::size_t max_blocks = 8) {
  std::uniform_int_distribution<std::size_t> count(1, max_blocks), size(1, 2);
  const std::size_t m = count(gen), p = count(gen);
  std::vector<Eigen::Index> hd(m), gd(p);
  for (auto& d : hd) d = static_cast<Eigen::Index>(size(gen));
  for (auto& d : gd) d = static_cast<Eigen::Index>(size(gen));
  std::vector<std::vector<Matrix>> grid(p);
  for (std::size_t k = 0; k < p; ++k)
    for (std::size_t i = 0; i < m; ++i) grid[k].push_back(oracle::gaussian_matrix(gen, gd[k], hd[i]));
  return LinearBlockOperator(std::move(grid));
}

}  // namespace fixture
