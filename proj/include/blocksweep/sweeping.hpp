#pragma once

// Random sweeping: laws on D = {0,1}^m \ {0}, their exact enumeration, and summable error sequences.
//
// Every random draw comes from an engine keyed by (seed, stream, n) only. Masks and each error slot use
// distinct streams, so the draw at iteration n is independent of the iterates by construction, and
// conditional moments given the past coincide with the unconditional ones.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "blocksweep/blockspace.hpp"

namespace blocksweep {

enum class Stream : std::uint64_t {
  mask = 0,
  error_a = 1,
  error_b = 2,
  error_c = 3,
  error_d = 4,
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Engine for draw number `n` of `stream` under `seed`.
inline std::mt19937_64 stream_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t n) {
  std::uint64_t key = detail::splitmix64(seed);
  key = detail::splitmix64(key ^ (stream * 0xd1b54a32d192ed03ULL));
  key = detail::splitmix64(key ^ n);
  return std::mt19937_64(key);
}

inline std::mt19937_64 stream_engine(std::uint64_t seed, Stream stream, std::uint64_t n) {
  return stream_engine(seed, static_cast<std::uint64_t>(stream), n);
}

/// Identically distributed law of the activation masks.
class SweepingRule {
 public:
  enum class Scheme { single_block, independent_bernoulli, fixed_subset_size };

  /// Exactly one block per iteration, block i with probability w_i / sum w.
  static SweepingRule single_block(std::vector<double> weights) {
    if (weights.empty()) throw ParameterError("single_block: no weights");
    double total = 0.0;
    for (double w : weights) {
      if (!(w > 0.0) || !std::isfinite(w)) throw ParameterError("single_block: every weight must be > 0");
      total += w;
    }
    for (double& w : weights) w /= total;
    SweepingRule r(Scheme::single_block, weights.size());
    r.params_ = std::move(weights);
    return r;
  }

  static SweepingRule uniform_single_block(std::size_t m) { return single_block(std::vector<double>(m, 1.0)); }

  /// Block i active independently with probability q_i, the zero mask rejected.
  static SweepingRule independent_bernoulli(std::vector<double> q) {
    if (q.empty()) throw ParameterError("independent_bernoulli: no probabilities");
    if (std::all_of(q.begin(), q.end(), [](double v) { return v == 0.0; }))
      throw ParameterError("independent_bernoulli: all q_i = 0 gives zero marginals");
    for (double v : q)
      if (!(v > 0.0 && v <= 1.0))
        throw ParameterError("independent_bernoulli: every q_i must lie in (0,1] so that p_i = P[eps_i = 1] > 0");
    SweepingRule r(Scheme::independent_bernoulli, q.size());
    r.params_ = std::move(q);
    return r;
  }

  /// A uniformly random subset of exactly s blocks.
  static SweepingRule fixed_subset_size(std::size_t m, std::size_t s) {
    if (m == 0) throw ParameterError("fixed_subset_size: m must be >= 1");
    if (s < 1 || s > m) throw ParameterError("fixed_subset_size: need 1 <= s <= m");
    SweepingRule r(Scheme::fixed_subset_size, m);
    r.subset_ = s;
    return r;
  }

  /// Deterministic full sweep.
  static SweepingRule full(std::size_t m) { return fixed_subset_size(m, m); }

  Scheme scheme() const { return scheme_; }
  std::size_t block_count() const { return m_; }
  const std::vector<double>& weights() const { return params_; }  ///< normalized weights or q_i
  std::size_t subset_size() const { return subset_; }
  bool deterministic() const { return scheme_ == Scheme::fixed_subset_size && subset_ == m_; }

  /// p_i = P[eps_i = 1] in closed form.
  std::vector<double> marginals() const {
    std::vector<double> p(m_);
    switch (scheme_) {
      case Scheme::single_block:
        p = params_;
        break;
      case Scheme::independent_bernoulli: {
        double none = 1.0;
        for (double v : params_) none *= 1.0 - v;
        for (std::size_t i = 0; i < m_; ++i) p[i] = params_[i] / (1.0 - none);
        break;
      }
      case Scheme::fixed_subset_size:
        std::fill(p.begin(), p.end(), static_cast<double>(subset_) / static_cast<double>(m_));
        break;
    }
    return p;
  }

  friend bool operator==(const SweepingRule&, const SweepingRule&) = default;

 private:
  SweepingRule(Scheme s, std::size_t m) : scheme_(s), m_(m) {}

  Scheme scheme_;
  std::size_t m_;
  std::vector<double> params_;
  std::size_t subset_ = 0;
};

inline const char* to_string(SweepingRule::Scheme s) {
  switch (s) {
    case SweepingRule::Scheme::single_block:
      return "single_block";
    case SweepingRule::Scheme::independent_bernoulli:
      return "bernoulli";
    case SweepingRule::Scheme::fixed_subset_size:
      return "fixed_subset";
  }
  return "?";
}

/// Draw eps_n; deterministic in (rule, n, seed).
inline ActivationMask sample_mask(const SweepingRule& rule, std::uint64_t n, std::uint64_t seed) {
  const std::size_t m = rule.block_count();
  auto gen = stream_engine(seed, Stream::mask, n);
  std::vector<std::uint8_t> bits(m, 0);
  switch (rule.scheme()) {
    case SweepingRule::Scheme::single_block: {
      std::discrete_distribution<std::size_t> pick(rule.weights().begin(), rule.weights().end());
      bits[pick(gen)] = 1;
      break;
    }
    case SweepingRule::Scheme::independent_bernoulli: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      bool any = false;
      while (!any) {
        for (std::size_t i = 0; i < m; ++i) {
          bits[i] = u(gen) < rule.weights()[i] ? 1 : 0;
          any = any || bits[i];
        }
      }
      break;
    }
    case SweepingRule::Scheme::fixed_subset_size: {
      if (rule.subset_size() == m) {
        std::fill(bits.begin(), bits.end(), 1);
        break;
      }
      std::vector<std::size_t> all(m), chosen;
      std::iota(all.begin(), all.end(), 0);
      std::sample(all.begin(), all.end(), std::back_inserter(chosen), rule.subset_size(), gen);
      for (std::size_t i : chosen) bits[i] = 1;
      break;
    }
  }
  return ActivationMask(std::move(bits));
}

struct MaskLaw {
  std::vector<std::pair<ActivationMask, double>> support;  ///< masks with positive probability
  std::vector<double> marginals;                           ///< p_i
};

inline constexpr std::size_t kMaxEnumerableBlocks = 20;

/// Exact law of eps_n over D by enumeration.
inline MaskLaw mask_law(const SweepingRule& rule) {
  const std::size_t m = rule.block_count();
  if (m > kMaxEnumerableBlocks)
    throw CapacityError("mask_law: " + std::to_string(m) + " blocks exceed the enumeration limit of " +
                        std::to_string(kMaxEnumerableBlocks));
  MaskLaw law;
  law.marginals.assign(m, 0.0);
  double zero_mass = 1.0;
  if (rule.scheme() == SweepingRule::Scheme::independent_bernoulli)
    for (double q : rule.weights()) zero_mass *= 1.0 - q;
  double combos = 0.0;
  if (rule.scheme() == SweepingRule::Scheme::fixed_subset_size) {
    // C(m, s)
    combos = 1.0;
    for (std::size_t j = 1; j <= rule.subset_size(); ++j)
      combos = combos * static_cast<double>(m - rule.subset_size() + j) / static_cast<double>(j);
  }
  const std::uint64_t count = std::uint64_t{1} << m;
  for (std::uint64_t code = 1; code < count; ++code) {
    const auto pop = static_cast<std::size_t>(__builtin_popcountll(code));
    double prob = 0.0;
    switch (rule.scheme()) {
      case SweepingRule::Scheme::single_block:
        if (pop == 1) prob = rule.weights()[static_cast<std::size_t>(__builtin_ctzll(code))];
        break;
      case SweepingRule::Scheme::independent_bernoulli: {
        prob = 1.0;
        for (std::size_t i = 0; i < m; ++i) prob *= ((code >> i) & 1U) ? rule.weights()[i] : 1.0 - rule.weights()[i];
        prob /= 1.0 - zero_mass;
        break;
      }
      case SweepingRule::Scheme::fixed_subset_size:
        if (pop == rule.subset_size()) prob = 1.0 / combos;
        break;
    }
    if (prob <= 0.0) continue;
    auto mask = ActivationMask::from_code(code, m);
    for (std::size_t i = 0; i < m; ++i)
      if (mask.active(i)) law.marginals[i] += prob;
    law.support.emplace_back(std::move(mask), prob);
  }
  return law;
}

/// Error sequence e_n with sum_n sqrt(E||e_n||^2) < infinity.
class ErrorModel {
 public:
  enum class Kind { none, deterministic_decay, gaussian_decay };

  ErrorModel() = default;

  static ErrorModel none() { return ErrorModel(); }

  /// ||e_n|| = c q^n along a fixed seed-dependent unit direction.
  static ErrorModel deterministic_decay(double c, double q) { return ErrorModel(Kind::deterministic_decay, c, q); }

  /// i.i.d. normal entries with standard deviation sigma0 q^n.
  static ErrorModel gaussian_decay(double sigma0, double q) { return ErrorModel(Kind::gaussian_decay, sigma0, q); }

  Kind kind() const { return kind_; }
  double scale() const { return scale_; }
  double ratio() const { return ratio_; }
  bool active() const { return kind_ != Kind::none && scale_ > 0.0; }

  /// sqrt(E ||e_n||^2) for a vector of total dimension d.
  double sigma(std::uint64_t n, std::size_t d) const {
    switch (kind_) {
      case Kind::none:
        return 0.0;
      case Kind::deterministic_decay:
        return scale_ * std::pow(ratio_, static_cast<double>(n));
      case Kind::gaussian_decay:
        return scale_ * std::pow(ratio_, static_cast<double>(n)) * std::sqrt(static_cast<double>(d));
    }
    return 0.0;
  }

  /// sum_n sigma(n, d) in closed form.
  double summable_bound(std::size_t d) const { return sigma(0, d) / (1.0 - ratio_); }

  friend bool operator==(const ErrorModel&, const ErrorModel&) = default;

 private:
  ErrorModel(Kind k, double scale, double q) : kind_(k), scale_(scale), ratio_(q) {
    if (!(scale >= 0.0) || !std::isfinite(scale)) throw ParameterError("ErrorModel: scale must be finite and >= 0");
    if (!(q >= 0.0)) throw ParameterError("ErrorModel: decay ratio q must be >= 0");
    if (!(q < 1.0)) throw ParameterError("ErrorModel: decay ratio q must be < 1 for summable errors");
  }

  Kind kind_ = Kind::none;
  double scale_ = 0.0;
  double ratio_ = 0.0;
};

inline const char* to_string(ErrorModel::Kind k) {
  switch (k) {
    case ErrorModel::Kind::none:
      return "none";
    case ErrorModel::Kind::deterministic_decay:
      return "deterministic_decay";
    case ErrorModel::Kind::gaussian_decay:
      return "gaussian_decay";
  }
  return "?";
}

/// e_n for the error slot `stream`; deterministic in (model, dims, n, seed, stream).
inline BlockVector sample_error(const ErrorModel& model, const BlockDims& dims, std::uint64_t n, std::uint64_t seed,
                                Stream stream = Stream::error_a) {
  BlockVector e(dims);
  if (!model.active()) return e;
  const auto d = static_cast<Eigen::Index>(dims.total());
  std::normal_distribution<double> gauss;
  if (model.kind() == ErrorModel::Kind::deterministic_decay) {
    // Direction depends on the seed and slot only.
    auto gen = stream_engine(seed, static_cast<std::uint64_t>(stream) | 0x100ULL, 0);
    Vector u(d);
    for (Eigen::Index j = 0; j < d; ++j) u[j] = gauss(gen);
    if (u.norm() == 0.0) u[0] = 1.0;
    e.flat() = (model.sigma(n, dims.total()) / u.norm()) * u;
    return e;
  }
  auto gen = stream_engine(seed, stream, n);
  const double s = model.scale() * std::pow(model.ratio(), static_cast<double>(n));
  for (Eigen::Index j = 0; j < d; ++j) e.flat()[j] = s * gauss(gen);
  return e;
}

}  // namespace blocksweep
