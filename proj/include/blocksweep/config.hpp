#pragma once

// Run configuration documents (JSON), their validation against each driver's hypotheses, and batch
// execution with per-seed CSV traces and an aggregate JSON report.
//
// Document schema, every key optional unless marked:
//
//   problem   (required)  {"kind": "km" | "averaged" | "double_layer" | "dr" | "pd_dr" | "fb" | "fb_min", ...}
//   solver    {"lambda", "mu", "gamma", "stepsize", "max_iterations", "tolerance", "snapshot_stride"}
//   sweeping  {"scheme": "single_block", "weights": [...]} | {"scheme": "bernoulli", "q": [...]}
//             | {"scheme": "fixed_subset", "size": s} | {"scheme": "full"}
//   errors    {"a" | "b" | "c" | "d": {"kind": "none" | "deterministic_decay" | "gaussian_decay",
//                                      "scale": s, "ratio": q}}
//   seeds     [0, 1, ...]
//   initial   {"x0" | "z0" | "y0" | "w0": [[block 0 entries], [block 1 entries], ...]}
//   reference "oracle" | [[block entries], ...]
//   output    {"directory": "...", "prefix": "..."}
//
// Schedules are a number or {"start", "end", "ramp"}. The forward-backward stepsize may also be given as
// {"theta_multiple": k} (or {"theta_multiple": {"start", "end", "ramp"}}), meaning gamma_n = k theta.
// Problem-specific keys are listed in README.md.

#include <filesystem>
#include <map>
#include <mutex>
#include <set>

#include "json.hpp"

#include "blocksweep/diagnostics.hpp"
#include "blocksweep/trace_io.hpp"

namespace blocksweep {

using json = nlohmann::json;

struct SweepSpec {
  std::string scheme = "single_block";  ///< single_block | bernoulli | fixed_subset | full
  std::vector<double> weights;          ///< weights (single_block) or q (bernoulli); empty means uniform
  std::size_t size = 1;                 ///< fixed_subset

  friend bool operator==(const SweepSpec&, const SweepSpec&) = default;
};

struct StepsizeSpec {
  Schedule schedule = Schedule::constant(1.0);
  bool theta_relative = false;  ///< gamma_n = schedule(n) * theta

  friend bool operator==(const StepsizeSpec&, const StepsizeSpec&) = default;
};

using BlockData = std::vector<std::vector<double>>;

struct RunConfig {
  std::string kind;
  json problem;  ///< problem section as written, keys validated

  Schedule lambda = Schedule::constant(0.5);
  Schedule mu = Schedule::constant(1.0);
  double gamma = 1.0;
  StepsizeSpec stepsize;
  std::size_t max_iterations = 100000;
  double tolerance = 1e-8;
  std::size_t snapshot_stride = 10;

  std::optional<SweepSpec> sweeping;
  ErrorSlots errors;
  std::vector<std::uint64_t> seeds = {0};
  std::map<std::string, BlockData> initial;
  bool reference_oracle = false;
  std::optional<BlockData> reference;
  std::string output_directory = "blocksweep_out";
  std::string output_prefix = "run";

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace cfgdetail {

[[noreturn]] inline void fail(const std::string& path, const std::string& msg) { throw ConfigError(path + ": " + msg); }

inline void allow_keys(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
  if (!j.is_object()) fail(path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) fail(path, "unknown key \"" + it.key() + "\"");
  }
}

inline const json& need(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) fail(path, std::string("missing required key \"") + key + "\"");
  return j.at(key);
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

inline std::size_t count(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 0) fail(path, "expected a nonnegative integer");
  return j.get<std::size_t>();
}

inline std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

/// Number or array of numbers; null entries map to `null_value`.
inline Vector vec(const json& j, const std::string& path, double null_value = std::numeric_limits<double>::quiet_NaN()) {
  if (j.is_number()) return Vector::Constant(1, j.get<double>());
  if (!j.is_array() || j.empty()) fail(path, "expected a nonempty array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (j[k].is_null() && !std::isnan(null_value))
      v[static_cast<Eigen::Index>(k)] = null_value;
    else
      v[static_cast<Eigen::Index>(k)] = number(j[k], path + "[" + std::to_string(k) + "]");
  }
  return v;
}

/// Number (1x1) or array of equal-length rows.
inline Matrix mat(const json& j, const std::string& path) {
  if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) fail(path, "expected a matrix as an array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) fail(path, "matrix rows must be nonempty arrays");
  Matrix M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) fail(path, "row " + std::to_string(r) + " has the wrong length");
    for (std::size_t c = 0; c < cols; ++c)
      M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = number(j[r][c], path);
  }
  return M;
}

inline BlockData block_data(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) fail(path, "expected an array of blocks");
  BlockData out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Vector v = vec(j[i], path + "[" + std::to_string(i) + "]");
    out.emplace_back(v.data(), v.data() + v.size());
  }
  return out;
}

inline BlockVector to_block_vector(const BlockData& d, const BlockDims& dims, const std::string& path) {
  if (d.size() != dims.count())
    fail(path, "has " + std::to_string(d.size()) + " blocks, expected " + std::to_string(dims.count()));
  std::vector<Vector> blocks;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i].size() != dims[i]) fail(path, "block " + std::to_string(i) + " has the wrong length");
    blocks.emplace_back(Eigen::Map<const Vector>(d[i].data(), static_cast<Eigen::Index>(d[i].size())));
  }
  return BlockVector(dims, blocks);
}

inline json block_json(const BlockVector& x) {
  json out = json::array();
  for (std::size_t i = 0; i < x.block_count(); ++i) {
    json b = json::array();
    for (Eigen::Index j = 0; j < x.block(i).size(); ++j) b.push_back(x.block(i)[j]);
    out.push_back(b);
  }
  return out;
}

inline Schedule schedule(const json& j, const std::string& path) {
  if (j.is_number()) return Schedule::constant(j.get<double>());
  allow_keys(j, path, {"start", "end", "ramp"});
  return Schedule::ramp(number(need(j, "start", path), path + ".start"), number(need(j, "end", path), path + ".end"),
                        count(need(j, "ramp", path), path + ".ramp"));
}

inline json schedule_json(const Schedule& s) {
  if (s.ramp_length() == 0) return s.end();
  return json{{"start", s.start()}, {"end", s.end()}, {"ramp", s.ramp_length()}};
}

// ---- catalog entries

inline ProxFunction prox_function(const json& j, const std::string& path) {
  const std::string kind = text(need(j, "kind", path), path + ".kind");
  try {
    if (kind == "zero") {
      allow_keys(j, path, {"kind", "dim"});
      return ProxFunction::zero(count(need(j, "dim", path), path + ".dim"));
    }
    if (kind == "l1") {
      allow_keys(j, path, {"kind", "dim", "scale"});
      return ProxFunction::l1(count(need(j, "dim", path), path + ".dim"), j.contains("scale") ? number(j["scale"], path) : 1.0);
    }
    if (kind == "sq_l2") {
      allow_keys(j, path, {"kind", "center", "scale"});
      return ProxFunction::sq_l2(vec(need(j, "center", path), path + ".center"),
                                 j.contains("scale") ? number(j["scale"], path) : 1.0);
    }
    if (kind == "box") {
      allow_keys(j, path, {"kind", "lo", "hi"});
      const double inf = std::numeric_limits<double>::infinity();
      return ProxFunction::indicator_box(vec(need(j, "lo", path), path + ".lo", -inf),
                                         vec(need(j, "hi", path), path + ".hi", inf));
    }
    if (kind == "ball") {
      allow_keys(j, path, {"kind", "center", "radius"});
      return ProxFunction::indicator_ball(vec(need(j, "center", path), path + ".center"),
                                          number(need(j, "radius", path), path + ".radius"));
    }
    if (kind == "quadratic") {
      allow_keys(j, path, {"kind", "Q", "b"});
      return ProxFunction::quadratic(mat(need(j, "Q", path), path + ".Q"), vec(need(j, "b", path), path + ".b"));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    fail(path, e.what());
  }
  fail(path + ".kind", "unknown function kind \"" + kind + "\"");
}

inline MonotoneOperator monotone(const json& j, const std::string& path) {
  const std::string kind = text(need(j, "kind", path), path + ".kind");
  try {
    if (kind == "linear") {
      allow_keys(j, path, {"kind", "M", "q"});
      std::optional<Vector> q;
      if (j.contains("q")) q = vec(j["q"], path + ".q");
      return MonotoneOperator::linear_monotone(mat(need(j, "M", path), path + ".M"), q);
    }
    if (kind == "normal_cone") {
      allow_keys(j, path, {"kind", "lo", "hi"});
      const double inf = std::numeric_limits<double>::infinity();
      return MonotoneOperator::normal_cone(vec(need(j, "lo", path), path + ".lo", -inf),
                                           vec(need(j, "hi", path), path + ".hi", inf));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    fail(path, e.what());
  }
  return MonotoneOperator::subdifferential(prox_function(j, path));
}

inline SmoothFunction smooth(const json& j, const std::string& path) {
  const std::string kind = text(need(j, "kind", path), path + ".kind");
  try {
    if (kind == "sq_distance") {
      allow_keys(j, path, {"kind", "center", "weight"});
      return SmoothFunction::sq_distance(vec(need(j, "center", path), path + ".center"),
                                         j.contains("weight") ? number(j["weight"], path) : 1.0);
    }
    if (kind == "quadratic") {
      allow_keys(j, path, {"kind", "Q", "b"});
      return SmoothFunction::quadratic(mat(need(j, "Q", path), path + ".Q"), vec(need(j, "b", path), path + ".b"));
    }
    if (kind == "log_cosh") {
      allow_keys(j, path, {"kind", "center", "weight"});
      return SmoothFunction::log_cosh(vec(need(j, "center", path), path + ".center"),
                                      j.contains("weight") ? number(j["weight"], path) : 1.0);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    fail(path, e.what());
  }
  fail(path + ".kind", "unknown smooth function kind \"" + kind + "\"");
}

template <class T, class F>
std::vector<T> list(const json& j, const std::string& path, F&& each) {
  if (!j.is_array() || j.empty()) fail(path, "expected a nonempty array");
  std::vector<T> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(each(j[k], path + "[" + std::to_string(k) + "]"));
  return out;
}

inline LinearBlockOperator grid(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) fail(path, "expected a p x m grid of matrices");
  std::vector<std::vector<Matrix>> g;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string row = path + "[" + std::to_string(k) + "]";
    if (!j[k].is_array() || j[k].empty()) fail(row, "expected a row of matrices");
    std::vector<Matrix> r;
    for (std::size_t i = 0; i < j[k].size(); ++i) r.push_back(mat(j[k][i], row + "[" + std::to_string(i) + "]"));
    g.push_back(std::move(r));
  }
  try {
    return LinearBlockOperator(std::move(g));
  } catch (const Error& e) {
    fail(path, e.what());
  }
}

inline std::vector<Halfspace> halfspaces(const json& j, const std::string& path) {
  return list<Halfspace>(j, path, [](const json& h, const std::string& p) {
    allow_keys(h, p, {"normal", "offset"});
    return Halfspace{vec(need(h, "normal", p), p + ".normal"), number(need(h, "offset", p), p + ".offset")};
  });
}

inline BlockDims dims_of(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) fail(path, "expected a nonempty array of block dimensions");
  std::vector<std::size_t> d;
  for (std::size_t k = 0; k < j.size(); ++k) d.push_back(count(j[k], path));
  try {
    return BlockDims(d);
  } catch (const Error& e) {
    fail(path, e.what());
  }
}

inline std::vector<std::size_t> op_dims(const std::vector<MonotoneOperator>& ops) {
  std::vector<std::size_t> d;
  for (auto& A : ops) d.push_back(A.dim());
  return d;
}

}  // namespace cfgdetail

/// A problem instance built from a RunConfig.
struct BuiltProblem {
  Problem problem;
  std::optional<BlockOperatorFamily> T;  ///< single-layer and double-layer kinds
  std::optional<BlockOperatorFamily> R;  ///< double-layer kind
  std::size_t mask_blocks = 0;           ///< m, or m + p for the primal-dual kind
  double theta = std::numeric_limits<double>::infinity();  ///< cocoercivity constant for the FB kinds
};

inline BlockVector initial_point(const RunConfig& cfg, const char* key, const BlockDims& dims) {
  auto it = cfg.initial.find(key);
  if (it == cfg.initial.end()) return BlockVector(dims);
  return cfgdetail::to_block_vector(it->second, dims, std::string("initial.") + key);
}

inline BuiltProblem build_problem(const RunConfig& cfg) {
  using namespace cfgdetail;
  const json& j = cfg.problem;
  const std::string P = "problem";
  BuiltProblem out{KmProblem{BlockOperatorFamily::identity(BlockDims({1})), BlockVector(BlockDims({1}))}, std::nullopt,
                   std::nullopt};
  try {
    if (cfg.kind == "km" || cfg.kind == "averaged") {
      allow_keys(j, P, {"kind", "dims", "halfspaces"});
      const BlockDims dims = dims_of(need(j, "dims", P), P + ".dims");
      const auto hs = halfspaces(need(j, "halfspaces", P), P + ".halfspaces");
      BlockOperatorFamily T = cfg.kind == "km" ? halfspace_composition(dims, hs) : halfspace_average(dims, hs);
      out.problem = KmProblem{T, initial_point(cfg, "x0", dims)};
      out.T = T;
      out.mask_blocks = dims.count();
    } else if (cfg.kind == "double_layer") {
      allow_keys(j, P, {"kind", "prox", "prox_gamma", "halfspaces"});
      auto f = list<ProxFunction>(need(j, "prox", P), P + ".prox", prox_function);
      const double g = j.contains("prox_gamma") ? number(j["prox_gamma"], P + ".prox_gamma") : 1.0;
      if (!(g > 0.0)) fail(P + ".prox_gamma", "must be > 0");
      std::vector<std::size_t> d;
      for (auto& fi : f) d.push_back(fi.dim());
      const BlockDims dims(d);
      BlockOperatorFamily T = BlockOperatorFamily::stationary(
          dims,
          [f, g](const BlockVector& y) {
            BlockVector out(y.dims());
            for (std::size_t i = 0; i < f.size(); ++i) out.block(i) = f[i].prox(g, y.block(i));
            return out;
          },
          Regularity::averaged(0.5));
      BlockOperatorFamily R = j.contains("halfspaces")
                                  ? halfspace_average(dims, halfspaces(j["halfspaces"], P + ".halfspaces"))
                                  : BlockOperatorFamily::identity(dims);
      auto TR = BlockOperatorFamily::stationary(
          dims, [T, R](const BlockVector& x) { return T(0, R(0, x)); }, Regularity::nonexpansive());
      out.problem = KmProblem{TR, initial_point(cfg, "x0", dims)};
      out.T = T;
      out.R = R;
      out.mask_blocks = dims.count();
    } else if (cfg.kind == "dr") {
      allow_keys(j, P, {"kind", "A", "B"});
      auto A = list<MonotoneOperator>(need(j, "A", P), P + ".A", monotone);
      const BlockDims dims(op_dims(A));
      const json& b = need(j, "B", P);
      const std::string bk = text(need(b, "kind", P + ".B"), P + ".B.kind");
      std::optional<CoupledOperator> B;
      if (bk == "affine") {
        allow_keys(b, P + ".B", {"kind", "M", "q"});
        B = CoupledOperator::affine(dims, mat(need(b, "M", P + ".B"), P + ".B.M"), vec(need(b, "q", P + ".B"), P + ".B.q"));
      } else if (bk == "separable") {
        allow_keys(b, P + ".B", {"kind", "operators"});
        auto ops = list<MonotoneOperator>(need(b, "operators", P + ".B"), P + ".B.operators", monotone);
        if (BlockDims(op_dims(ops)) != dims) fail(P + ".B.operators", "dimensions differ from A");
        B = CoupledOperator::separable(std::move(ops));
      } else {
        fail(P + ".B.kind", "expected \"affine\" or \"separable\"");
      }
      out.problem = DrProblem{std::move(A), *B};
      out.mask_blocks = dims.count();
    } else if (cfg.kind == "pd_dr") {
      allow_keys(j, P, {"kind", "A", "B", "L"});
      auto A = list<MonotoneOperator>(need(j, "A", P), P + ".A", monotone);
      auto B = list<MonotoneOperator>(need(j, "B", P), P + ".B", monotone);
      PdProblem pd = assemble_pd_problem(std::move(A), std::move(B), grid(need(j, "L", P), P + ".L"));
      out.mask_blocks = pd.m() + pd.p();
      out.problem = std::move(pd);
    } else if (cfg.kind == "fb") {
      allow_keys(j, P, {"kind", "A", "B"});
      auto A = list<MonotoneOperator>(need(j, "A", P), P + ".A", monotone);
      const BlockDims dims(op_dims(A));
      const json& b = need(j, "B", P);
      const std::string bk = text(need(b, "kind", P + ".B"), P + ".B.kind");
      std::optional<CocoerciveOperator> B;
      if (bk == "zero") {
        allow_keys(b, P + ".B", {"kind"});
        B = CocoerciveOperator::zero(dims);
      } else if (bk == "affine") {
        allow_keys(b, P + ".B", {"kind", "M", "q"});
        B = CocoerciveOperator::affine(dims, mat(need(b, "M", P + ".B"), P + ".B.M"), vec(need(b, "q", P + ".B"), P + ".B.q"));
      } else if (bk == "coupling") {
        allow_keys(b, P + ".B", {"kind", "L", "g"});
        const LinearBlockOperator L = grid(need(b, "L", P + ".B"), P + ".B.L");
        if (L.source() != dims) fail(P + ".B.L", "column dimensions differ from A");
        B = CocoerciveOperator::coupling(CouplingGradient(L, list<SmoothFunction>(need(b, "g", P + ".B"), P + ".B.g", smooth)));
      } else {
        fail(P + ".B.kind", "expected \"zero\", \"affine\" or \"coupling\"");
      }
      out.theta = B->theta();
      out.problem = FbProblem{std::move(A), *B};
      out.mask_blocks = dims.count();
    } else if (cfg.kind == "fb_min") {
      allow_keys(j, P, {"kind", "f", "g", "L"});
      auto f = list<ProxFunction>(need(j, "f", P), P + ".f", prox_function);
      auto g = list<SmoothFunction>(need(j, "g", P), P + ".g", smooth);
      LinearBlockOperator L = grid(need(j, "L", P), P + ".L");
      if (f.size() != L.cols()) fail(P + ".f", "one function per column of L required");
      for (std::size_t i = 0; i < f.size(); ++i)
        if (f[i].dim() != L.source()[i]) fail(P + ".f[" + std::to_string(i) + "]", "dimension differs from L");
      CouplingGradient grad(L, g);
      out.theta = cocoercivity_bound(L, grad.taus());
      out.mask_blocks = f.size();
      out.problem = FbMinProblem{std::move(f), std::move(g), std::move(L)};
    } else {
      fail(P + ".kind", "unknown problem kind \"" + cfg.kind + "\" (km, averaged, double_layer, dr, pd_dr, fb, fb_min)");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    fail(P, e.what());
  }
  return out;
}

inline SweepingRule build_rule(const RunConfig& cfg, std::size_t m) {
  const std::string path = "sweeping";
  if (!cfg.sweeping) return SweepingRule::uniform_single_block(m);
  const SweepSpec& s = *cfg.sweeping;
  try {
    if (s.scheme == "single_block") {
      if (s.weights.empty()) return SweepingRule::uniform_single_block(m);
      if (s.weights.size() != m) cfgdetail::fail(path + ".weights", "expected " + std::to_string(m) + " weights");
      return SweepingRule::single_block(s.weights);
    }
    if (s.scheme == "bernoulli") {
      if (s.weights.size() != m) cfgdetail::fail(path + ".q", "expected " + std::to_string(m) + " probabilities");
      return SweepingRule::independent_bernoulli(s.weights);
    }
    if (s.scheme == "fixed_subset") return SweepingRule::fixed_subset_size(m, s.size);
    if (s.scheme == "full") return SweepingRule::full(m);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    cfgdetail::fail(path, e.what());
  }
  cfgdetail::fail(path + ".scheme", "unknown scheme \"" + s.scheme + "\" (single_block, bernoulli, fixed_subset, full)");
}

/// SolverConfig for one seed; theta scales a relative stepsize.
inline SolverConfig solver_config(const RunConfig& cfg, const BuiltProblem& built, std::uint64_t seed) {
  SolverConfig s;
  s.lambda = cfg.lambda;
  s.mu = cfg.mu;
  s.gamma = cfg.gamma;
  if (cfg.stepsize.theta_relative) {
    if (!std::isfinite(built.theta)) cfgdetail::fail("solver.stepsize", "theta_multiple needs a finite ϑ (B = 0 has none)");
    const Schedule& k = cfg.stepsize.schedule;
    s.gamma_n = Schedule::ramp(k.start() * built.theta, k.end() * built.theta, k.ramp_length());
  } else {
    s.gamma_n = cfg.stepsize.schedule;
  }
  s.max_iterations = cfg.max_iterations;
  s.tolerance = cfg.tolerance;
  s.snapshot_stride = cfg.snapshot_stride;
  s.seed = seed;
  s.rule = build_rule(cfg, built.mask_blocks);
  s.errors = cfg.errors;
  return s;
}

namespace cfgdetail {

inline void require_slots(const RunConfig& cfg, std::initializer_list<char> used) {
  const std::pair<char, const ErrorModel*> slots[] = {
      {'a', &cfg.errors.a}, {'b', &cfg.errors.b}, {'c', &cfg.errors.c}, {'d', &cfg.errors.d}};
  for (auto& [name, model] : slots) {
    if (model->kind() == ErrorModel::Kind::none) continue;
    bool ok = false;
    for (char u : used) ok = ok || u == name;
    if (!ok) fail(std::string("errors.") + name, "slot is not used by the " + cfg.kind + " driver");
  }
}

inline void rethrow_bound(const std::function<void()>& check) {
  try {
    check();
  } catch (const ParameterError& e) {
    throw ConfigError("solver." + std::string(e.what()));
  }
}

}  // namespace cfgdetail

/// Checks every driver hypothesis that can be decided before a run starts.
inline BuiltProblem validate(const RunConfig& cfg) {
  using namespace cfgdetail;
  if (cfg.seeds.empty()) fail("seeds", "at least one seed required");
  if (cfg.max_iterations < 1) fail("solver.max_iterations", "must be >= 1");
  if (!(cfg.tolerance >= 0.0)) fail("solver.tolerance", "must be >= 0");
  if (cfg.snapshot_stride < 1) fail("solver.snapshot_stride", "must be >= 1");
  BuiltProblem built = build_problem(cfg);
  const SolverConfig s = solver_config(cfg, built, cfg.seeds.front());
  const BlockDims H = primal_dims(built.problem);
  for (const auto& [key, data] : cfg.initial) {
    if (cfg.kind == "pd_dr" && (key == "y0" || key == "w0"))
      to_block_vector(data, std::get<PdProblem>(built.problem).L().target(), "initial." + key);
    else
      to_block_vector(data, H, "initial." + key);
    const bool dr_like = cfg.kind == "dr" || cfg.kind == "pd_dr";
    if (key != "x0" && !(dr_like && key == "z0") && !(cfg.kind == "pd_dr" && (key == "y0" || key == "w0")))
      fail("initial." + key, "not used by the " + cfg.kind + " driver");
  }
  if (cfg.reference) to_block_vector(*cfg.reference, H, "reference");

  rethrow_bound([&] {
    if (cfg.kind == "km") {
      require_slots(cfg, {'a'});
      validate_single_layer(s);
    } else if (cfg.kind == "averaged") {
      require_slots(cfg, {'a'});
      validate_averaged(s, built.T->regularity().alpha);
    } else if (cfg.kind == "double_layer") {
      require_slots(cfg, {'a', 'b'});
      validate_double_layer(s);
    } else if (cfg.kind == "dr") {
      require_slots(cfg, {'a', 'b'});
      validate_dr(s);
    } else if (cfg.kind == "pd_dr") {
      require_slots(cfg, {'a', 'b', 'c', 'd'});
      validate_dr(s);
    } else {
      require_slots(cfg, {'a', 'c'});
      validate_fb(s, built.theta);
    }
  });
  return built;
}

// ---- document <-> RunConfig

inline std::size_t line_of(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t k = 0; k < std::min(byte, text.size()); ++k) line += text[k] == '\n' ? 1 : 0;
  return line;
}

inline RunConfig config_from_json(const json& doc) {
  using namespace cfgdetail;
  allow_keys(doc, "config", {"problem", "solver", "sweeping", "errors", "seeds", "initial", "reference", "output"});
  RunConfig cfg;
  cfg.problem = need(doc, "problem", "config");
  if (!cfg.problem.is_object()) fail("problem", "expected an object");
  cfg.kind = text(need(cfg.problem, "kind", "problem"), "problem.kind");

  if (doc.contains("solver")) {
    const json& s = doc["solver"];
    allow_keys(s, "solver", {"lambda", "mu", "gamma", "stepsize", "max_iterations", "tolerance", "snapshot_stride"});
    if (s.contains("lambda")) cfg.lambda = schedule(s["lambda"], "solver.lambda");
    if (s.contains("mu")) cfg.mu = schedule(s["mu"], "solver.mu");
    if (s.contains("gamma")) cfg.gamma = number(s["gamma"], "solver.gamma");
    if (s.contains("stepsize")) {
      const json& g = s["stepsize"];
      if (g.is_object() && g.contains("theta_multiple")) {
        allow_keys(g, "solver.stepsize", {"theta_multiple"});
        cfg.stepsize = {schedule(g["theta_multiple"], "solver.stepsize.theta_multiple"), true};
      } else {
        cfg.stepsize = {schedule(g, "solver.stepsize"), false};
      }
    }
    if (s.contains("max_iterations")) cfg.max_iterations = count(s["max_iterations"], "solver.max_iterations");
    if (s.contains("tolerance")) cfg.tolerance = number(s["tolerance"], "solver.tolerance");
    if (s.contains("snapshot_stride")) cfg.snapshot_stride = count(s["snapshot_stride"], "solver.snapshot_stride");
  }
  if (doc.contains("sweeping")) {
    const json& w = doc["sweeping"];
    allow_keys(w, "sweeping", {"scheme", "weights", "q", "size"});
    SweepSpec spec;
    spec.scheme = text(need(w, "scheme", "sweeping"), "sweeping.scheme");
    if (w.contains("weights")) {
      const Vector v = vec(w["weights"], "sweeping.weights");
      spec.weights.assign(v.data(), v.data() + v.size());
    }
    if (w.contains("q")) {
      const Vector v = vec(w["q"], "sweeping.q");
      spec.weights.assign(v.data(), v.data() + v.size());
    }
    if (w.contains("size")) spec.size = count(w["size"], "sweeping.size");
    cfg.sweeping = spec;
  }
  if (doc.contains("errors")) {
    const json& e = doc["errors"];
    allow_keys(e, "errors", {"a", "b", "c", "d"});
    for (const char* slot : {"a", "b", "c", "d"}) {
      if (!e.contains(slot)) continue;
      const std::string path = std::string("errors.") + slot;
      const json& m = e[slot];
      allow_keys(m, path, {"kind", "scale", "ratio"});
      const std::string kind = text(need(m, "kind", path), path + ".kind");
      ErrorModel model;
      try {
        if (kind == "deterministic_decay")
          model = ErrorModel::deterministic_decay(number(need(m, "scale", path), path + ".scale"),
                                                  number(need(m, "ratio", path), path + ".ratio"));
        else if (kind == "gaussian_decay")
          model = ErrorModel::gaussian_decay(number(need(m, "scale", path), path + ".scale"),
                                             number(need(m, "ratio", path), path + ".ratio"));
        else if (kind != "none")
          fail(path + ".kind", "unknown error model \"" + kind + "\"");
      } catch (const ConfigError&) {
        throw;
      } catch (const Error& ex) {
        fail(path, ex.what());
      }
      (slot[0] == 'a' ? cfg.errors.a : slot[0] == 'b' ? cfg.errors.b : slot[0] == 'c' ? cfg.errors.c : cfg.errors.d) = model;
    }
  }
  if (doc.contains("seeds")) {
    const json& s = doc["seeds"];
    if (!s.is_array() || s.empty()) fail("seeds", "expected a nonempty array of integers");
    cfg.seeds.clear();
    for (auto& v : s) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        fail("seeds", "seeds must be nonnegative integers");
      cfg.seeds.push_back(v.get<std::uint64_t>());
    }
  }
  if (doc.contains("initial")) {
    const json& i = doc["initial"];
    allow_keys(i, "initial", {"x0", "z0", "y0", "w0"});
    for (auto it = i.begin(); it != i.end(); ++it) cfg.initial[it.key()] = block_data(it.value(), "initial." + it.key());
  }
  if (doc.contains("reference")) {
    const json& r = doc["reference"];
    if (r.is_string()) {
      if (r.get<std::string>() != "oracle") fail("reference", "expected \"oracle\" or an array of blocks");
      cfg.reference_oracle = true;
    } else {
      cfg.reference = block_data(r, "reference");
    }
  }
  if (doc.contains("output")) {
    const json& o = doc["output"];
    allow_keys(o, "output", {"directory", "prefix"});
    if (o.contains("directory")) cfg.output_directory = text(o["directory"], "output.directory");
    if (o.contains("prefix")) cfg.output_prefix = text(o["prefix"], "output.prefix");
    if (cfg.output_prefix.empty() || cfg.output_prefix.find('/') != std::string::npos)
      fail("output.prefix", "must be a nonempty file name prefix");
  }
  return cfg;
}

/// Parses and validates a configuration document; ConfigError carries the line or the offending field.
inline RunConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("parse error at line " + std::to_string(line_of(text, e.byte == 0 ? 0 : e.byte - 1)) + ": " +
                      e.what());
  }
  RunConfig cfg = config_from_json(doc);
  validate(cfg);
  return cfg;
}

inline json serialize_json(const RunConfig& cfg) {
  using cfgdetail::schedule_json;
  json doc;
  doc["problem"] = cfg.problem;
  json s;
  s["lambda"] = schedule_json(cfg.lambda);
  s["mu"] = schedule_json(cfg.mu);
  s["gamma"] = cfg.gamma;
  if (cfg.stepsize.theta_relative)
    s["stepsize"] = json{{"theta_multiple", schedule_json(cfg.stepsize.schedule)}};
  else
    s["stepsize"] = schedule_json(cfg.stepsize.schedule);
  s["max_iterations"] = cfg.max_iterations;
  s["tolerance"] = cfg.tolerance;
  s["snapshot_stride"] = cfg.snapshot_stride;
  doc["solver"] = s;
  if (cfg.sweeping) {
    json w{{"scheme", cfg.sweeping->scheme}};
    if (cfg.sweeping->scheme == "single_block" && !cfg.sweeping->weights.empty()) w["weights"] = cfg.sweeping->weights;
    if (cfg.sweeping->scheme == "bernoulli") w["q"] = cfg.sweeping->weights;
    if (cfg.sweeping->scheme == "fixed_subset") w["size"] = cfg.sweeping->size;
    doc["sweeping"] = w;
  }
  json e = json::object();
  const std::pair<const char*, const ErrorModel*> slots[] = {
      {"a", &cfg.errors.a}, {"b", &cfg.errors.b}, {"c", &cfg.errors.c}, {"d", &cfg.errors.d}};
  for (auto& [name, model] : slots) {
    if (model->kind() == ErrorModel::Kind::none) continue;
    e[name] = json{{"kind", to_string(model->kind())}, {"scale", model->scale()}, {"ratio", model->ratio()}};
  }
  if (!e.empty()) doc["errors"] = e;
  doc["seeds"] = cfg.seeds;
  if (!cfg.initial.empty()) {
    json i;
    for (auto& [k, v] : cfg.initial) i[k] = v;
    doc["initial"] = i;
  }
  if (cfg.reference_oracle) doc["reference"] = "oracle";
  else if (cfg.reference) doc["reference"] = *cfg.reference;
  doc["output"] = json{{"directory", cfg.output_directory}, {"prefix", cfg.output_prefix}};
  return doc;
}

inline std::string serialize_config(const RunConfig& cfg) { return serialize_json(cfg).dump(2) + "\n"; }

// ---- execution

struct SeedRun {
  std::uint64_t seed = 0;
  IterateTrace trace;
  PrimalDualSolution solution;
};

/// One driver invocation for `seed`; `reference` is forwarded to the trace.
inline SeedRun run_seed(const RunConfig& cfg, const BuiltProblem& built, std::uint64_t seed,
                        const std::optional<BlockVector>& reference) {
  SolverConfig s = solver_config(cfg, built, seed);
  s.reference = reference;
  const BlockDims H = primal_dims(built.problem);
  SeedRun out;
  out.seed = seed;
  const BlockVector x0 = initial_point(cfg, "x0", H);
  if (cfg.kind == "km" || cfg.kind == "averaged") {
    out.trace = run_single_layer(*built.T, s, x0);
    out.solution.primal = out.trace.final_iterate;
  } else if (cfg.kind == "double_layer") {
    out.trace = run_double_layer(*built.T, *built.R, s, x0);
    out.solution.primal = out.trace.final_iterate;
  } else if (cfg.kind == "dr") {
    const auto& p = std::get<DrProblem>(built.problem);
    auto r = run_dr(p.A, p.B, s, x0, initial_point(cfg, "z0", H));
    out.trace = std::move(r.trace);
    out.solution = std::move(r.solution);
  } else if (cfg.kind == "pd_dr") {
    const auto& p = std::get<PdProblem>(built.problem);
    const BlockDims& G = p.L().target();
    auto r = run_pd_dr(p, s, x0, initial_point(cfg, "z0", H), initial_point(cfg, "y0", G), initial_point(cfg, "w0", G));
    out.trace = std::move(r.trace);
    out.solution = std::move(r.solution);
  } else if (cfg.kind == "fb") {
    const auto& p = std::get<FbProblem>(built.problem);
    out.trace = run_fb(p.A, p.B, s, x0);
    out.solution.primal = out.trace.final_iterate;
  } else {
    const auto& p = std::get<FbMinProblem>(built.problem);
    out.trace = run_fb_min(p.f, p.g, p.L, s, x0);
    out.solution.primal = out.trace.final_iterate;
  }
  return out;
}

inline std::optional<BlockVector> resolve_reference(const RunConfig& cfg, const BuiltProblem& built) {
  if (cfg.reference_oracle) return oracle_reference(built.problem);
  if (cfg.reference) return cfgdetail::to_block_vector(*cfg.reference, primal_dims(built.problem), "reference");
  return std::nullopt;
}

struct RunStatus {
  int exit_code = 0;  ///< 0 all seeds converged, 2 some did not, 1 error
  std::string message;
  std::vector<std::string> files;
};

inline std::string trace_path(const RunConfig& cfg, std::uint64_t seed) {
  return (std::filesystem::path(cfg.output_directory) / (cfg.output_prefix + "_seed" + std::to_string(seed) + ".csv"))
      .string();
}

inline std::string report_path(const RunConfig& cfg) {
  return (std::filesystem::path(cfg.output_directory) / (cfg.output_prefix + "_report.json")).string();
}

/// Runs every seed on a worker pool, writes one CSV per seed and the aggregate report.
inline RunStatus execute_run(const RunConfig& cfg, std::size_t workers = 0) {
  RunStatus status;
  try {
    const BuiltProblem built = validate(cfg);
    const std::optional<BlockVector> reference = resolve_reference(cfg, built);
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_directory, ec);
    if (ec || !std::filesystem::is_directory(cfg.output_directory))
      throw Error("cannot create output directory " + cfg.output_directory);

    std::vector<std::optional<SeedRun>> runs(cfg.seeds.size());
    std::vector<std::string> errors(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), workers, [&](std::size_t k) {
      try {
        runs[k] = run_seed(cfg, built, cfg.seeds[k], reference);
        write_trace(runs[k]->trace, trace_path(cfg, cfg.seeds[k]));
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
    });
    for (std::size_t k = 0; k < errors.size(); ++k)
      if (!errors[k].empty()) throw Error("seed " + std::to_string(cfg.seeds[k]) + ": " + errors[k]);

    json report;
    report["config"] = serialize_json(cfg);
    report["reference"] = reference ? cfgdetail::block_json(*reference) : json(nullptr);
    json seeds = json::array();
    std::vector<double> residuals, distances;
    std::size_t converged = 0;
    for (std::size_t k = 0; k < runs.size(); ++k) {
      const SeedRun& r = *runs[k];
      json e;
      e["seed"] = r.seed;
      e["termination"] = to_string(r.trace.termination);
      e["iterations"] = r.trace.iterations();
      e["final_residual"] = r.trace.final_residual();
      e["final_distance"] = r.trace.final_distance() ? json(*r.trace.final_distance()) : json(nullptr);
      e["primal"] = cfgdetail::block_json(r.solution.primal);
      if (r.solution.dual) e["dual"] = cfgdetail::block_json(*r.solution.dual);
      e["trace"] = trace_path(cfg, r.seed);
      seeds.push_back(e);
      residuals.push_back(r.trace.final_residual());
      if (r.trace.final_distance()) distances.push_back(*r.trace.final_distance());
      converged += r.trace.converged() ? 1 : 0;
      status.files.push_back(trace_path(cfg, r.seed));
    }
    report["seeds"] = seeds;
    auto qjson = [](const Quantiles& q) {
      return json{{"min", q.min}, {"q25", q.q25}, {"median", q.median}, {"q75", q.q75}, {"max", q.max}};
    };
    json summary;
    summary["seed_count"] = runs.size();
    summary["converged"] = converged;
    summary["success_fraction"] = static_cast<double>(converged) / static_cast<double>(runs.size());
    summary["tolerance"] = cfg.tolerance;
    summary["final_residual"] = qjson(quantiles(residuals));
    if (!distances.empty()) summary["final_distance"] = qjson(quantiles(distances));
    report["summary"] = summary;

    const std::string path = report_path(cfg);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error("cannot write report " + path);
    f << report.dump(2) << '\n';
    f.close();
    if (!f) throw Error("cannot write report " + path);
    status.files.push_back(path);
    status.exit_code = converged == runs.size() ? 0 : 2;
    status.message = std::to_string(converged) + "/" + std::to_string(runs.size()) + " seeds converged";
  } catch (const std::exception& e) {
    status.exit_code = 1;
    status.message = e.what();
  }
  return status;
}

}  // namespace blocksweep
