#pragma once

// Product-space linear algebra: H = H_1 (+) ... (+) H_m with dense real blocks.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "blocksweep/errors.hpp"

namespace blocksweep {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Dimensions of the blocks of a direct sum.
class BlockDims {
 public:
  BlockDims() = default;

  explicit BlockDims(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) throw ShapeError("BlockDims: at least one block required");
    offsets_.reserve(dims_.size() + 1);
    offsets_.push_back(0);
    for (std::size_t d : dims_) {
      if (d == 0) throw ShapeError("BlockDims: every block dimension must be >= 1");
      offsets_.push_back(offsets_.back() + d);
    }
  }

  BlockDims(std::initializer_list<std::size_t> dims)
      : BlockDims(std::vector<std::size_t>(dims)) {}

  /// m copies of dimension d.
  static BlockDims uniform(std::size_t m, std::size_t d) {
    return BlockDims(std::vector<std::size_t>(m, d));
  }

  std::size_t count() const { return dims_.size(); }
  std::size_t operator[](std::size_t i) const { return dims_.at(i); }
  std::size_t offset(std::size_t i) const { return offsets_.at(i); }
  std::size_t total() const { return offsets_.empty() ? 0 : offsets_.back(); }
  const std::vector<std::size_t>& sizes() const { return dims_; }

  /// Concatenation H (+) G.
  BlockDims concat(const BlockDims& other) const {
    std::vector<std::size_t> all = dims_;
    all.insert(all.end(), other.dims_.begin(), other.dims_.end());
    return BlockDims(std::move(all));
  }

  friend bool operator==(const BlockDims& a, const BlockDims& b) { return a.dims_ == b.dims_; }
  friend bool operator!=(const BlockDims& a, const BlockDims& b) { return !(a == b); }

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
};

inline std::string to_string(const BlockDims& d) {
  std::string s = "[";
  for (std::size_t i = 0; i < d.count(); ++i) {
    if (i) s += ",";
    s += std::to_string(d[i]);
  }
  return s + "]";
}

/// Element x = (x_1, ..., x_m) of a block product space, stored contiguously.
class BlockVector {
 public:
  BlockVector() = default;

  /// Zero vector.
  explicit BlockVector(BlockDims dims) : dims_(std::move(dims)), data_(Vector::Zero(dims_.total())) {}

  /// From per-block data; every entry must be finite.
  BlockVector(BlockDims dims, const std::vector<Vector>& blocks) : BlockVector(std::move(dims)) {
    if (blocks.size() != dims_.count())
      throw ShapeError("BlockVector: expected " + std::to_string(dims_.count()) + " blocks, got " +
                       std::to_string(blocks.size()));
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      if (static_cast<std::size_t>(blocks[i].size()) != dims_[i])
        throw ShapeError("BlockVector: block " + std::to_string(i) + " has length " +
                         std::to_string(blocks[i].size()) + ", expected " + std::to_string(dims_[i]));
      data_.segment(static_cast<Eigen::Index>(dims_.offset(i)), blocks[i].size()) = blocks[i];
    }
    require_finite();
  }

  /// From a flat vector laid out block after block.
  BlockVector(BlockDims dims, Vector flat) : dims_(std::move(dims)), data_(std::move(flat)) {
    if (static_cast<std::size_t>(data_.size()) != dims_.total())
      throw ShapeError("BlockVector: flat data of length " + std::to_string(data_.size()) +
                       " does not match total dimension " + std::to_string(dims_.total()));
    require_finite();
  }

  static BlockVector zeros(const BlockDims& dims) { return BlockVector(dims); }

  const BlockDims& dims() const { return dims_; }
  std::size_t block_count() const { return dims_.count(); }

  Eigen::VectorBlock<Vector> block(std::size_t i) {
    return data_.segment(static_cast<Eigen::Index>(dims_.offset(i)), static_cast<Eigen::Index>(dims_[i]));
  }
  Eigen::VectorBlock<const Vector> block(std::size_t i) const {
    return data_.segment(static_cast<Eigen::Index>(dims_.offset(i)), static_cast<Eigen::Index>(dims_[i]));
  }

  const Vector& flat() const { return data_; }
  Vector& flat() { return data_; }

  /// Blocks [first, first+count) as a new vector.
  BlockVector slice(std::size_t first, std::size_t count) const {
    std::vector<std::size_t> d(dims_.sizes().begin() + first, dims_.sizes().begin() + first + count);
    BlockDims sub(std::move(d));
    return BlockVector(sub, Vector(data_.segment(dims_.offset(first), sub.total())));
  }

  /// (x, y) in H (+) G.
  BlockVector concat(const BlockVector& other) const {
    Vector v(data_.size() + other.data_.size());
    v << data_, other.data_;
    return BlockVector(dims_.concat(other.dims_), std::move(v));
  }

  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const BlockVector& a, const BlockVector& b) {
    return a.dims_ == b.dims_ && a.data_.size() == b.data_.size() &&
           std::equal(a.data_.data(), a.data_.data() + a.data_.size(), b.data_.data());
  }
  friend bool operator!=(const BlockVector& a, const BlockVector& b) { return !(a == b); }

 private:
  void require_finite() const {
    if (!data_.allFinite()) throw ParameterError("BlockVector: entries must be finite");
  }

  BlockDims dims_;
  Vector data_;
};

inline void require_same_dims(const BlockVector& x, const BlockVector& y, const char* where) {
  if (x.dims() != y.dims())
    throw ShapeError(std::string(where) + ": block dimensions " + to_string(x.dims()) + " and " +
                     to_string(y.dims()) + " differ");
}

/// A nonzero element of {0,1}^m: which blocks are updated in an iteration.
class ActivationMask {
 public:
  ActivationMask() = default;

  explicit ActivationMask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    if (bits_.empty()) throw ShapeError("ActivationMask: empty mask");
    bool any = false;
    for (auto& b : bits_) {
      if (b > 1) throw ParameterError("ActivationMask: bits must be 0 or 1");
      any = any || b == 1;
    }
    if (!any) throw ParameterError("ActivationMask: the zero mask is not admissible");
  }

  ActivationMask(std::initializer_list<int> bits) : ActivationMask(to_bits(bits)) {}

  static ActivationMask all(std::size_t m) { return ActivationMask(std::vector<std::uint8_t>(m, 1)); }

  /// Mask whose bit i is bit i of `code` (bit 0 = block 0).
  static ActivationMask from_code(std::uint64_t code, std::size_t m) {
    std::vector<std::uint8_t> bits(m);
    for (std::size_t i = 0; i < m; ++i) bits[i] = static_cast<std::uint8_t>((code >> i) & 1U);
    return ActivationMask(std::move(bits));
  }

  std::size_t size() const { return bits_.size(); }
  bool active(std::size_t i) const { return bits_.at(i) == 1; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }
  std::size_t popcount() const { return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1)); }

  /// Bitstring such as "101", block 0 first.
  std::string str() const {
    std::string s;
    s.reserve(bits_.size());
    for (auto b : bits_) s.push_back(b ? '1' : '0');
    return s;
  }

  friend bool operator==(const ActivationMask&, const ActivationMask&) = default;

 private:
  static std::vector<std::uint8_t> to_bits(std::initializer_list<int> bits) {
    std::vector<std::uint8_t> out;
    for (int b : bits) {
      if (b != 0 && b != 1) throw ParameterError("ActivationMask: bits must be 0 or 1");
      out.push_back(static_cast<std::uint8_t>(b));
    }
    return out;
  }

  std::vector<std::uint8_t> bits_;
};

/// Weights p_i defining |||x|||^2 = sum_i ||x_i||^2 / p_i.
class WeightedNormSpec {
 public:
  explicit WeightedNormSpec(std::vector<double> weights) : weights_(std::move(weights)) {
    if (weights_.empty()) throw ShapeError("WeightedNormSpec: no weights");
    for (double p : weights_)
      if (!(p > 0.0 && p <= 1.0)) throw ParameterError("WeightedNormSpec: weights must lie in (0,1]");
  }

  std::size_t size() const { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_.at(i); }
  const std::vector<double>& weights() const { return weights_; }
  double min_weight() const { return *std::min_element(weights_.begin(), weights_.end()); }

 private:
  std::vector<double> weights_;
};

/// a*x + b*y, blockwise.
inline BlockVector combine(double a, const BlockVector& x, double b, const BlockVector& y) {
  require_same_dims(x, y, "combine");
  return BlockVector(x.dims(), Vector(a * x.flat() + b * y.flat()));
}

struct Reduction {
  double inner = 0.0;                        ///< sum_i <x_i, y_i>
  double norm_sq_x = 0.0;                    ///< sum_i ||x_i||^2
  std::optional<double> weighted_norm_sq_x;  ///< sum_i ||x_i||^2 / p_i
};

inline Reduction reduce(const BlockVector& x, const BlockVector& y,
                        const std::optional<WeightedNormSpec>& weights = std::nullopt) {
  require_same_dims(x, y, "reduce");
  Reduction r;
  r.inner = x.flat().dot(y.flat());
  r.norm_sq_x = x.flat().squaredNorm();
  if (weights) {
    if (weights->size() != x.block_count())
      throw ShapeError("reduce: weight count " + std::to_string(weights->size()) + " differs from block count " +
                       std::to_string(x.block_count()));
    double s = 0.0;
    for (std::size_t i = 0; i < x.block_count(); ++i) s += x.block(i).squaredNorm() / (*weights)[i];
    r.weighted_norm_sq_x = s;
  }
  return r;
}

inline double norm_sq(const BlockVector& x) { return x.flat().squaredNorm(); }
inline double norm(const BlockVector& x) { return x.flat().norm(); }

inline double weighted_norm_sq(const BlockVector& x, const WeightedNormSpec& w) {
  return *reduce(x, x, w).weighted_norm_sq_x;
}

inline double distance(const BlockVector& x, const BlockVector& y) {
  require_same_dims(x, y, "distance");
  return (x.flat() - y.flat()).norm();
}

/// Block i becomes x_i + mask_i * relax * (target_i - x_i). Inactive blocks are copied
/// bit for bit; relax == 1 copies the target block.
inline BlockVector masked_update(const BlockVector& x, const ActivationMask& mask, double relax,
                                 const BlockVector& target) {
  require_same_dims(x, target, "masked_update");
  if (mask.size() != x.block_count())
    throw ShapeError("masked_update: mask has " + std::to_string(mask.size()) + " bits for " +
                     std::to_string(x.block_count()) + " blocks");
  BlockVector out = x;
  for (std::size_t i = 0; i < x.block_count(); ++i) {
    if (!mask.active(i)) continue;
    if (relax == 1.0)
      out.block(i) = target.block(i);
    else
      out.block(i) = x.block(i) + relax * (target.block(i) - x.block(i));
  }
  return out;
}

}  // namespace blocksweep
