// Acceptance run: one PASS/FAIL line per criterion, nonzero exit when any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "blocksweep/config.hpp"
#include "fixtures.hpp"

using namespace blocksweep;
using fixture::scalar_blocks;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

Vector v1(double a) { return Vector::Constant(1, a); }

SweepingRule rule_of(std::mt19937_64& gen, std::size_t m, int which) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<double> w(m);
  for (auto& v : w) v = u(gen);
  if (which == 0) return SweepingRule::single_block(w);
  if (which == 1) return SweepingRule::independent_bernoulli(w);
  return SweepingRule::fixed_subset_size(m, 1 + gen() % m);
}

std::vector<std::uint64_t> seeds(std::size_t n) {
  std::vector<std::uint64_t> s(n);
  for (std::size_t k = 0; k < n; ++k) s[k] = k;
  return s;
}

// ---- shared instances

struct Instances {
  // |x| with B x = x - 2
  std::vector<MonotoneOperator> dr_A = {MonotoneOperator::subdifferential(ProxFunction::l1(1))};
  CoupledOperator dr_B = CoupledOperator::affine(BlockDims{1}, Matrix::Identity(1, 1), v1(-2));
  PdProblem pd = assemble_pd_problem({ProxFunction::l1(1)}, {ProxFunction::sq_l2(v1(2))},
                                     LinearBlockOperator::identity(BlockDims{1}));

  // 0.5 |x| + (x - 1)^2 / 2
  std::vector<ProxFunction> lasso_f = {ProxFunction::l1(1, 0.5)};
  std::vector<SmoothFunction> lasso_g = {SmoothFunction::sq_distance(v1(1))};
  LinearBlockOperator lasso_L = LinearBlockOperator::identity(BlockDims{1});

  // 0.2 |x1| + 0.4 |x2| + (x1 + x2 - 1)^2 / 2
  std::vector<ProxFunction> sum_f = {ProxFunction::l1(1, 0.2), ProxFunction::l1(1, 0.4)};
  std::vector<SmoothFunction> sum_g = {SmoothFunction::sq_distance(v1(1))};
  LinearBlockOperator sum_L{std::vector<std::vector<Matrix>>{{Matrix::Identity(1, 1), Matrix::Identity(1, 1)}}};

  std::vector<MonotoneOperator> box_A;
  Matrix box_M = Matrix(4, 4);
  Vector box_q = Vector(4);

  BlockOperatorFamily km_T = halfspace_composition(
      BlockDims{1, 1}, {{(Vector(2) << 1.0, 0.0).finished(), 1.0}, {(Vector(2) << 0.0, 1.0).finished(), -0.5}});
  BlockVector km_x0 = scalar_blocks({3.0, 2.0});

  Instances() {
    box_M << 2.0, 0.5, 0.0, 0.0, 0.5, 2.0, 0.5, 0.0, 0.0, 0.5, 2.0, 0.5, 0.0, 0.0, 0.5, 2.0;
    box_q << -3.0, 1.0, -0.5, -5.0;
    for (int i = 0; i < 4; ++i) box_A.push_back(MonotoneOperator::normal_cone(v1(0), v1(1)));
  }
  CocoerciveOperator box_B() const { return CocoerciveOperator::affine(BlockDims::uniform(4, 1), box_M, box_q); }
};

/// A replica driver returning the final primal iterate for one seed.
struct Driver {
  std::string name;
  BlockVector reference;
  std::function<BlockVector(std::uint64_t, const ErrorSlots&)> solve;
};

std::vector<Driver> suite(const Instances& I) {
  std::vector<Driver> out;
  auto base = [](std::uint64_t seed, std::size_t blocks, const ErrorSlots& errors) {
    SolverConfig cfg;
    cfg.seed = seed;
    cfg.rule = SweepingRule::uniform_single_block(blocks);
    cfg.errors = errors;
    cfg.tolerance = 1e-12;
    cfg.max_iterations = 200000;
    cfg.snapshot_stride = 1000;
    return cfg;
  };

  out.push_back({"dr_1d", oracle_reference(DrProblem{I.dr_A, I.dr_B}),
                 [&I, base](std::uint64_t s, const ErrorSlots& e) {
                   return run_dr(I.dr_A, I.dr_B, base(s, 1, e), scalar_blocks({5}), scalar_blocks({0})).solution.primal;
                 }});
  out.push_back({"lasso_1d", oracle_reference(FbMinProblem{I.lasso_f, I.lasso_g, I.lasso_L}),
                 [&I, base](std::uint64_t s, const ErrorSlots& e) {
                   SolverConfig cfg = base(s, 1, e);
                   cfg.lambda = Schedule::constant(1.0);
                   cfg.gamma_n = Schedule::constant(1.0);
                   return run_fb_min(I.lasso_f, I.lasso_g, I.lasso_L, cfg, scalar_blocks({3})).final_iterate;
                 }});
  out.push_back({"box_quadratic", oracle_reference(FbProblem{I.box_A, I.box_B()}),
                 [&I, base](std::uint64_t s, const ErrorSlots& e) {
                   const CocoerciveOperator B = I.box_B();
                   SolverConfig cfg = base(s, 4, e);
                   cfg.lambda = Schedule::constant(1.0);
                   cfg.gamma_n = Schedule::constant(B.theta());
                   return run_fb(I.box_A, B, cfg, scalar_blocks({0.3, 0.3, 0.3, 0.3})).final_iterate;
                 }});
  out.push_back({"sum_lasso", oracle_reference(FbMinProblem{I.sum_f, I.sum_g, I.sum_L}),
                 [&I, base](std::uint64_t s, const ErrorSlots& e) {
                   SolverConfig cfg = base(s, 2, e);
                   cfg.lambda = Schedule::constant(1.0);
                   cfg.gamma_n = Schedule::constant(cocoercivity_bound(I.sum_L, CouplingGradient(I.sum_L, I.sum_g).taus()));
                   return run_fb_min(I.sum_f, I.sum_g, I.sum_L, cfg, scalar_blocks({3, -2})).final_iterate;
                 }});
  out.push_back({"km_halfspaces", oracle_reference(KmProblem{I.km_T, I.km_x0}),
                 [&I, base](std::uint64_t s, const ErrorSlots& e) {
                   return run_single_layer(I.km_T, base(s, 2, e), I.km_x0).final_iterate;
                 }});
  out.push_back({"pd_dr_1d", oracle_reference(I.pd),
                 [&I, base](std::uint64_t s, const ErrorSlots& e) {
                   const BlockVector zero = scalar_blocks({0});
                   return run_pd_dr(I.pd, base(s, 2, e), scalar_blocks({5}), zero, scalar_blocks({-3}), zero)
                       .solution.primal;
                 }});
  return out;
}

// ---- criteria

struct Verdict {
  bool pass;
  std::string detail;
};

Verdict expectation_identities() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(1001);
  std::uniform_int_distribution<std::size_t> blocks(2, 6), size(1, 3);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = blocks(gen);
    std::vector<std::size_t> d(m);
    for (auto& v : d) v = size(gen);
    const BlockDims dims(d);
    const auto T = fixture::prox_operator(fixture::random_prox_family(gen, dims), dims);
    const BlockVector x = fixture::random_vector(gen, dims, 3.0), z = fixture::random_vector(gen, dims, 3.0);
    const auto r = expectation_identity_check(T, 0, x, z, rule_of(gen, m, t % 3));
    worst = std::max({worst, r.fejer.abs_err, r.residual.abs_err});
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && secs < 10.0, "max abs error " + sci(worst) + " over 100 instances, " + sci(secs) + " s"};
}

Verdict prox_correctness() {
  std::mt19937_64 gen(1002);
  std::uniform_real_distribution<double> gam(0.2, 3.0);
  double oracle_err = 0.0, moreau_err = 0.0;
  std::size_t violations = 0;
  for (auto kind : fixture::kAllKinds) {
    for (int t = 0; t < 50; ++t) {
      const std::size_t d = 1 + t % 3;
      const ProxFunction f = fixture::random_prox(gen, kind, d);
      const double gamma = gam(gen);
      const Vector x = oracle::gaussian(gen, static_cast<Eigen::Index>(d), 2.0);
      oracle_err = std::max(oracle_err, (f.prox(gamma, x) - oracle::prox_any(f, gamma, x)).norm());
      const Vector a = oracle::gaussian(gen, static_cast<Eigen::Index>(d), 3.0), b = oracle::gaussian(gen, static_cast<Eigen::Index>(d), 3.0);
      const Vector pa = f.prox(1.0, a), pb = f.prox(1.0, b);
      if ((pa - pb).squaredNorm() > (a - b).dot(pa - pb) + 1e-9) ++violations;
    }
  }
  for (int t = 0; t < 50; ++t) {
    const ProxFunction f = fixture::random_prox(gen, ProxFunction::Kind::l1, 3);
    const Vector x = oracle::gaussian(gen, 3, 3.0);
    moreau_err = std::max(moreau_err, (f.prox(1.0, x) + f.conjugate()->prox(1.0, x) - x).norm());
  }
  return {oracle_err <= 1e-6 && moreau_err <= 1e-10 && violations == 0,
          "oracle " + sci(oracle_err) + ", Moreau (l1, box) " + sci(moreau_err) + ", firm violations " +
              std::to_string(violations)};
}

Verdict graph_projector() {
  std::mt19937_64 gen(1003);
  double idem = 0.0, adj = 0.0, route = 0.0;
  for (int t = 0; t < 50; ++t) {
    const LinearBlockOperator L = fixture::random_grid(gen, 8);
    const GraphSubspace V(L);
    const BlockVector u = fixture::random_vector(gen, V.product_dims()), w = fixture::random_vector(gen, V.product_dims());
    const BlockVector Pu = V.project(u);
    idem = std::max(idem, distance(V.project(Pu), Pu));
    adj = std::max(adj, std::abs(Pu.flat().dot(w.flat()) - u.flat().dot(V.project(w).flat())));
    const std::size_t m = L.cols(), p = L.rows();
    const auto r1 = V.project_primal_route(u.slice(0, m), u.slice(m, p));
    const auto r2 = V.project_dual_route(u.slice(0, m), u.slice(m, p));
    route = std::max(route, distance(r1.first, r2.first) + distance(r1.second, r2.second));
  }
  return {idem <= 1e-9 && adj <= 1e-9 && route <= 1e-9,
          "idempotence " + sci(idem) + ", self-adjointness " + sci(adj) + ", routes " + sci(route)};
}

Verdict cocoercivity() {
  std::mt19937_64 gen(1004);
  double worst = std::numeric_limits<double>::infinity(), fd_rel = 0.0;
  for (int t = 0; t < 10; ++t) {
    const LinearBlockOperator L = fixture::random_grid(gen, 4);
    std::vector<SmoothFunction> g;
    for (std::size_t k = 0; k < L.rows(); ++k) {
      const auto d = static_cast<Eigen::Index>(L.target()[k]);
      if (k % 3 == 0) g.push_back(SmoothFunction::sq_distance(oracle::gaussian(gen, d), 1.5));
      else if (k % 3 == 1) g.push_back(SmoothFunction::log_cosh(oracle::gaussian(gen, d), 0.8));
      else g.push_back(SmoothFunction::quadratic(fixture::random_psd(gen, d, 0.1), oracle::gaussian(gen, d)));
    }
    const double theta = cocoercivity_bound(L, CouplingGradient(L, g).taus());
    for (int s = 0; s < 1000; ++s) {
      const BlockVector x = fixture::random_vector(gen, L.source(), 3.0), y = fixture::random_vector(gen, L.source(), 3.0);
      const Vector dB = forward_coupling_eval(L, g, x).flat() - forward_coupling_eval(L, g, y).flat();
      worst = std::min(worst, (x.flat() - y.flat()).dot(dB) - theta * dB.squaredNorm());
    }
    const CouplingGradient B(L, g);
    const BlockVector x = fixture::random_vector(gen, L.source());
    const Vector fd = oracle::fd_gradient([&](const Vector& v) { return B.value(BlockVector(L.source(), v)); }, x.flat());
    fd_rel = std::max(fd_rel, (B(x).flat() - fd).norm() / std::max(1.0, fd.norm()));
  }
  return {worst >= -1e-9 && fd_rel <= 1e-6, "min slack " + sci(worst) + ", gradient vs FD " + sci(fd_rel)};
}

Verdict oracle_convergence(const std::vector<Driver>& drivers, const ErrorSlots& errors, double threshold,
                           double time_limit) {
  const auto t0 = Clock::now();
  std::string detail;
  bool ok = true;
  for (const auto& d : drivers) {
    auto replica = [&](std::uint64_t seed) {
      ReplicaOutcome r;
      const BlockVector x = d.solve(seed, errors);
      r.final_distance = distance(x, d.reference);
      r.converged = true;
      return r;
    };
    const auto rep = monte_carlo_summary(replica, seeds(20), threshold);
    ok = ok && rep.success_fraction == 1.0;
    detail += d.name + " " + sci(rep.distance ? rep.distance->max : -1.0) + "; ";
  }
  const double secs = seconds_since(t0);
  if (time_limit > 0) ok = ok && secs < time_limit;
  return {ok, "max distance per problem: " + detail + sci(secs) + " s"};
}

Verdict expected_fejer() {
  std::mt19937_64 gen(1007);
  const ProxFunction::Kind kinds[] = {ProxFunction::Kind::zero, ProxFunction::Kind::l1, ProxFunction::Kind::sq_l2,
                                      ProxFunction::Kind::indicator_box, ProxFunction::Kind::indicator_ball};
  std::uniform_int_distribution<int> pick(0, 4);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double worst = -std::numeric_limits<double>::infinity(), fix_err = 0.0;
  std::size_t checks = 0;
  for (int t = 0; t < 12; ++t) {
    const std::size_t m = 2 + static_cast<std::size_t>(t) % 5;
    const BlockDims dims = BlockDims::uniform(m, 2);
    std::vector<ProxFunction> f;
    // block 0 carries a whole set of minimizers so Fix T is not a singleton
    f.push_back(fixture::random_prox(gen, t % 2 ? ProxFunction::Kind::zero : ProxFunction::Kind::indicator_box, 2));
    for (std::size_t i = 1; i < m; ++i) f.push_back(fixture::random_prox(gen, kinds[pick(gen)], 2));
    const auto T = fixture::prox_operator(f, dims).with_regularity(Regularity::nonexpansive());

    std::vector<BlockVector> zs;
    for (int k = 0; k < 5; ++k) {
      BlockVector z = fixture::minimizer_of(f, dims);
      for (std::size_t i = 0; i < m; ++i) {
        if (f[i].kind() == ProxFunction::Kind::zero) z.block(i) = oracle::gaussian(gen, 2, 2.0);
        if (f[i].kind() == ProxFunction::Kind::indicator_box)
          for (Eigen::Index j = 0; j < 2; ++j) z.block(i)[j] = f[i].lo()[j] + u01(gen) * (f[i].hi()[j] - f[i].lo()[j]);
      }
      fix_err = std::max(fix_err, distance(T(0, z), z));
      zs.push_back(std::move(z));
    }

    SolverConfig cfg;
    cfg.lambda = t % 3 == 2 ? Schedule::ramp(0.2, 0.8, 20) : Schedule::constant(0.3 + 0.1 * (t % 5));
    cfg.rule = rule_of(gen, m, t % 3);
    cfg.seed = static_cast<std::uint64_t>(t);
    cfg.snapshot_stride = 1;
    cfg.max_iterations = 150;
    cfg.tolerance = 0.0;
    const auto tr = run_single_layer(T, cfg, fixture::random_vector(gen, dims, 4.0));
    const auto rep = expected_fejer_profile(T, tr, zs, *cfg.rule, cfg.lambda);
    worst = std::max(worst, rep.max_slack);
    checks += rep.slacks.size();
  }
  return {worst <= 1e-12 && fix_err <= 1e-12,
          "max slack " + sci(worst) + " over " + std::to_string(checks) + " (step, z) pairs, fixed-point check " +
              sci(fix_err)};
}

Verdict engine_equivalence(const Instances& I) {
  const CocoerciveOperator B = I.box_B();
  const double gamma = 1.5 * B.theta();
  SolverConfig cfg;
  cfg.lambda = Schedule::constant(0.8);
  cfg.gamma_n = Schedule::constant(gamma);
  cfg.rule = SweepingRule::independent_bernoulli({0.5, 0.4, 0.6, 0.3});
  cfg.errors.a = ErrorModel::gaussian_decay(0.05, 0.9);
  const BlockDims dims = BlockDims::uniform(4, 1);
  const auto T = BlockOperatorFamily::stationary(
      dims, [&](const BlockVector& y) { return product_resolvent(I.box_A, gamma, y); }, Regularity::averaged(0.5));
  const auto R = BlockOperatorFamily::stationary(
      dims, [&](const BlockVector& x) { return combine(1.0, x, -gamma, B(x)); },
      Regularity::averaged(gamma / (2 * B.theta())));
  const BlockVector x0 = scalar_blocks({2, -1, 0.5, 3});
  std::size_t same = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    cfg.seed = seed;
    same += same_path(run_fb(I.box_A, B, cfg, x0), run_double_layer(T, R, cfg, x0)) ? 1 : 0;
  }

  // replay through the batch runner
  namespace fs = std::filesystem;
  RunConfig rc = parse_config(R"({
    "problem": {"kind": "pd_dr", "A": [{"kind": "l1", "dim": 1}], "B": [{"kind": "linear", "M": [[1.0]], "q": [-2.0]}], "L": [[[[1.0]]]]},
    "solver": {"tolerance": 1e-10, "max_iterations": 5000},
    "sweeping": {"scheme": "bernoulli", "q": [0.6, 0.6]},
    "errors": {"a": {"kind": "gaussian_decay", "scale": 0.1, "ratio": 0.9},
               "c": {"kind": "gaussian_decay", "scale": 0.1, "ratio": 0.9}},
    "initial": {"x0": [[5.0]], "y0": [[-3.0]]},
    "seeds": [0, 1, 2]
  })");
  const fs::path root = fs::temp_directory_path() / ("blocksweep_acceptance_" + std::to_string(::getpid()));
  std::size_t identical = 0, files = 0;
  std::string runs[2][3];
  for (int rep = 0; rep < 2; ++rep) {
    rc.output_directory = (root / std::to_string(rep)).string();
    execute_run(rc, rep == 0 ? 1 : 3);
    for (std::uint64_t s = 0; s < 3; ++s) {
      std::ifstream f(trace_path(rc, s), std::ios::binary);
      std::ostringstream text;
      text << f.rdbuf();
      runs[rep][s] = text.str();
    }
  }
  for (int s = 0; s < 3; ++s) {
    ++files;
    identical += !runs[0][s].empty() && runs[0][s] == runs[1][s] ? 1 : 0;
  }
  fs::remove_all(root);
  return {same == 10 && identical == files,
          "fb vs double layer identical on " + std::to_string(same) + "/10 seeds, replayed CSVs identical " +
              std::to_string(identical) + "/" + std::to_string(files)};
}

Verdict primal_dual(const Instances& I) {
  const DrProblem dr{I.dr_A, I.dr_B};
  double agree = 0.0, residual = 0.0;
  for (double gamma : {0.5, 1.0, 2.0}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      SolverConfig cfg;
      cfg.seed = seed;
      cfg.tolerance = 1e-12;
      cfg.max_iterations = 200000;
      const BlockVector zero = scalar_blocks({0});
      const auto a = run_dr(I.dr_A, I.dr_B, gamma, cfg, scalar_blocks({5}), zero);
      const auto b = run_pd_dr(I.pd, gamma, cfg, scalar_blocks({5}), zero, scalar_blocks({-3}), zero);
      agree = std::max({agree, distance(a.solution.primal, b.solution.primal), distance(*a.solution.dual, *b.solution.dual)});
      const auto ra = inclusion_residual(dr, a.solution);
      const auto rb = inclusion_residual(I.pd, b.solution);
      residual = std::max({residual, ra.primal_res, *ra.dual_res, rb.primal_res, *rb.dual_res});
    }
  }
  return {agree <= 1e-5 && residual <= 1e-5, "DR vs PD-DR " + sci(agree) + ", inclusion residuals " + sci(residual)};
}

}  // namespace

int main() {
  const Instances I;
  const std::vector<Driver> drivers = suite(I);
  ErrorSlots noisy;
  noisy.a = noisy.b = noisy.c = noisy.d = ErrorModel::gaussian_decay(0.1, 0.9);
  // the error-robustness rerun covers the forward-backward and Douglas-Rachford instances
  std::vector<Driver> fb_dr;
  for (const auto& d : drivers)
    if (d.name != "km_halfspaces") fb_dr.push_back(d);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"expectation identities", expectation_identities},
      {"prox and resolvent correctness", prox_correctness},
      {"graph projector", graph_projector},
      {"cocoercivity of the coupling gradient", cocoercivity},
      {"solver convergence vs oracle", [&] { return oracle_convergence(drivers, ErrorSlots{}, 1e-5, 120.0); }},
      {"robustness to summable errors", [&] { return oracle_convergence(fb_dr, noisy, 1e-4, 0.0); }},
      {"expected quasi-Fejer slack", expected_fejer},
      {"engine equivalence and replay", [&] { return engine_equivalence(I); }},
      {"primal-dual consistency", [&] { return primal_dual(I); }},
  };

  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Verdict v{false, ""};
    try {
      v = criteria[k].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += v.pass ? 0 : 1;
    std::printf("%s %zu %s: %s\n", v.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
