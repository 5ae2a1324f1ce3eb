#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "blocksweep/config.hpp"
#include "fixtures.hpp"

using namespace blocksweep;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::size_t line_count(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("blocksweep_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const char* kMinimalKm = R"({
  "problem": {"kind": "km", "dims": [1, 1], "halfspaces": [{"normal": [1, 0], "offset": 1}]},
  "initial": {"x0": [[3], [2]]}
})";

std::string config_error(const std::string& text) {
  try {
    validate(parse_config(text));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

RunConfig dr1d(const fs::path& dir) {
  RunConfig cfg = parse_config(R"({
    "problem": {"kind": "dr", "A": [{"kind": "l1", "dim": 1}], "B": {"kind": "affine", "M": [[1.0]], "q": [-2.0]}},
    "solver": {"tolerance": 1e-10, "max_iterations": 2000},
    "initial": {"x0": [[5.0]]},
    "seeds": [0, 1, 2, 3, 4],
    "reference": "oracle"
  })");
  cfg.output_directory = dir.string();
  cfg.output_prefix = "dr";
  return cfg;
}

/// Environment override, else the path baked in at build time.
const char* location(const char* env, const char* built) {
  const char* v = std::getenv(env);
  return v && *v ? v : built;
}

#ifndef BLOCKSWEEP_CLI_PATH
#define BLOCKSWEEP_CLI_PATH nullptr
#endif
#ifndef BLOCKSWEEP_CONFIG_DIR
#define BLOCKSWEEP_CONFIG_DIR nullptr
#endif

int shell(const std::string& cmd) {
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

}  // namespace

TEST(Config, MinimalKmDefaults) {
  const RunConfig cfg = parse_config(kMinimalKm);
  EXPECT_EQ(cfg.kind, "km");
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{0}));
  EXPECT_EQ(cfg.lambda.start(), 0.5);
  EXPECT_EQ(cfg.max_iterations, 100000u);
  EXPECT_FALSE(cfg.sweeping);
  const BuiltProblem b = validate(cfg);
  EXPECT_EQ(primal_dims(b.problem), (BlockDims{1, 1}));
}

TEST(Config, RelaxationBoundReported) {
  std::string doc = kMinimalKm;
  doc.insert(doc.rfind('}'), R"(, "solver": {"lambda": 1.0})");
  const std::string msg = config_error(doc);
  EXPECT_NE(msg.find("solver."), std::string::npos) << msg;
  EXPECT_NE(msg.find("sup λₙ < 1"), std::string::npos) << msg;
}

TEST(Config, ForwardBackwardStepsizeBound) {
  const std::string doc = R"({
    "problem": {"kind": "fb", "A": [{"kind": "zero", "dim": 1}],
                "B": {"kind": "affine", "M": [[1.0]], "q": [-1.0]}},
    "solver": {"lambda": 1.0, "stepsize": 2.0}
  })";
  const std::string msg = config_error(doc);
  EXPECT_NE(msg.find("]0,2ϑ["), std::string::npos) << msg;
  std::string ok = doc;
  ok.replace(ok.find("2.0}"), 3, "1.9");
  EXPECT_EQ(config_error(ok), "");
}

TEST(Config, UnknownKeysAndBadValues) {
  EXPECT_NE(config_error(R"({"problem": {"kind": "km", "dims": [1], "halfspaces": [{"normal": [1], "offset": 0}]}, "solvr": {}})").find("solvr"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"problem": {"kind": "nope"}})"), "");
  EXPECT_NE(config_error(R"({"problem": {"kind": "km", "dims": [1], "halfspaces": [{"normal": [1], "offset": 0}]}, "seeds": []})").find("seeds"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"problem": {"kind": "km", "dims": [1, 1], "halfspaces": [{"normal": [1, 0], "offset": 0}]}, "initial": {"x0": [[1]]}})")
                .find("initial.x0"),
            std::string::npos);
  // error slot the driver never reads
  EXPECT_NE(config_error(R"({"problem": {"kind": "km", "dims": [1], "halfspaces": [{"normal": [1], "offset": 0}]},
                             "errors": {"c": {"kind": "gaussian_decay", "scale": 0.1, "ratio": 0.9}}})")
                .find("errors.c"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"problem": {"kind": "km", "dims": [1], "halfspaces": [{"normal": [1], "offset": 0}]},
                             "sweeping": {"scheme": "bernoulli", "q": [0.0]}})"),
            "");
}

TEST(Config, ParseErrorLine) {
  try {
    parse_config("{\n  \"problem\": {\n    \"kind\": \"km\",,\n  }\n}");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Config, RoundTripEveryShippedConfig) {
  const char* dir = location("BLOCKSWEEP_CONFIGS", BLOCKSWEEP_CONFIG_DIR);
  if (!dir) GTEST_SKIP() << "BLOCKSWEEP_CONFIGS not set";
  std::size_t seen = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    const RunConfig a = parse_config(slurp(entry.path()));
    EXPECT_NO_THROW(validate(a)) << entry.path();
    const RunConfig b = parse_config(serialize_config(a));
    EXPECT_TRUE(a == b) << entry.path();
    EXPECT_EQ(serialize_config(a), serialize_config(b));
    ++seen;
  }
  EXPECT_GE(seen, 6u);
}

TEST(Config, ScheduleBoundsFuzz) {
  std::mt19937_64 gen(113);
  std::uniform_real_distribution<double> u(-0.5, 2.5);
  for (int t = 0; t < 200; ++t) {
    const double s = u(gen), e = u(gen);
    std::ostringstream doc;
    doc << R"({"problem": {"kind": "km", "dims": [1], "halfspaces": [{"normal": [1], "offset": 0}]}, "solver": {"lambda": {"start": )"
        << format_double(s) << R"(, "end": )" << format_double(e) << R"(, "ramp": 5}}})";
    const bool inside = std::min(s, e) > 0.0 && std::max(s, e) < 1.0;
    const std::string msg = config_error(doc.str());
    EXPECT_EQ(msg.empty(), inside) << s << " " << e << " " << msg;
  }
}

TEST(Execute, WritesOneTracePerSeedAndReport) {
  const fs::path dir = scratch("exec");
  const RunConfig cfg = dr1d(dir);
  const RunStatus st = execute_run(cfg, 2);
  EXPECT_EQ(st.exit_code, 0) << st.message;
  for (std::uint64_t s = 0; s < 5; ++s) EXPECT_TRUE(fs::exists(trace_path(cfg, s))) << s;
  ASSERT_TRUE(fs::exists(report_path(cfg)));
  const json rep = json::parse(slurp(report_path(cfg)));
  EXPECT_EQ(rep["summary"]["seed_count"], 5);
  EXPECT_EQ(rep["summary"]["success_fraction"], 1.0);
  ASSERT_EQ(rep["seeds"].size(), 5u);
  for (const auto& s : rep["seeds"]) EXPECT_NEAR(s["primal"][0][0].get<double>(), 1.0, 1e-8);
  EXPECT_NEAR(rep["reference"][0][0].get<double>(), 1.0, 1e-10);
  fs::remove_all(dir);
}

TEST(Execute, ExitCodes) {
  const fs::path dir = scratch("codes");
  RunConfig cfg = dr1d(dir);
  cfg.max_iterations = 1;
  EXPECT_EQ(execute_run(cfg).exit_code, 2);
  RunConfig bad = dr1d(dir);
  std::ofstream(dir / "blocker") << "x";
  bad.output_directory = (dir / "blocker" / "sub").string();
  const RunStatus st = execute_run(bad);
  EXPECT_EQ(st.exit_code, 1);
  EXPECT_FALSE(st.message.empty());
  fs::remove_all(dir);
}

TEST(Execute, ReplayIsByteIdentical) {
  const fs::path a = scratch("replay_a"), b = scratch("replay_b");
  RunConfig cfg = dr1d(a);
  cfg.errors.a = ErrorModel::gaussian_decay(0.1, 0.9);
  ASSERT_EQ(execute_run(cfg, 1).exit_code, 0);
  cfg.output_directory = b.string();
  ASSERT_EQ(execute_run(cfg, 3).exit_code, 0);
  for (std::uint64_t s = 0; s < 5; ++s) {
    RunConfig ca = cfg;
    ca.output_directory = a.string();
    EXPECT_EQ(slurp(trace_path(ca, s)), slurp(trace_path(cfg, s))) << s;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(TraceIo, LinesAndMaskColumn) {
  const fs::path dir = scratch("trace");
  const auto T = fixture::prox_operator({ProxFunction::l1(1), ProxFunction::l1(1), ProxFunction::l1(1)},
                                        BlockDims::uniform(3, 1))
                     .with_regularity(Regularity::nonexpansive());
  SolverConfig cfg;
  cfg.lambda = Schedule::constant(0.5);
  cfg.rule = SweepingRule::independent_bernoulli({0.5, 0.5, 0.5});
  cfg.max_iterations = 30;
  cfg.tolerance = 0.0;
  const auto tr = run_single_layer(T, cfg, fixture::scalar_blocks({1, 2, 3}));
  const fs::path p = dir / "t.csv";
  write_trace(tr, p.string());
  const std::string text = slurp(p);
  EXPECT_EQ(line_count(text), tr.records.size() + 1);
  EXPECT_EQ(text.substr(0, text.find('\n')), kTraceHeader);
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  for (const auto& r : tr.records) {
    std::getline(in, line);
    std::vector<std::string> cols;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
    if (r.mask.size()) {
      ASSERT_GE(cols.size(), 4u);
      EXPECT_EQ(cols[3], r.mask.str());
      EXPECT_EQ(std::stod(cols[1]), r.residual);
    }
  }
  EXPECT_EQ(ActivationMask::from_code(0b101, 3).str(), "101");
  EXPECT_THROW(write_trace(tr, (dir / "missing" / "t.csv").string()), Error);
  fs::remove_all(dir);
}

TEST(Binary, RunValidateOracle) {
  const char* cli = location("BLOCKSWEEP_CLI", BLOCKSWEEP_CLI_PATH);
  const char* configs = location("BLOCKSWEEP_CONFIGS", BLOCKSWEEP_CONFIG_DIR);
  if (!cli || !configs) GTEST_SKIP() << "BLOCKSWEEP_CLI / BLOCKSWEEP_CONFIGS not set";
  const fs::path dir = scratch("binary");
  const std::string exe = std::string("\"") + cli + "\"";
  const std::string dr = std::string("\"") + configs + "/dr_1d.json\"";
  const std::string log = (dir / "log.txt").string();

  EXPECT_EQ(shell(exe + " validate " + dr + " > " + log), 0);
  EXPECT_NE(slurp(log).find("valid: dr"), std::string::npos);

  EXPECT_EQ(shell(exe + " oracle " + dr + " > " + log), 0);
  const json x = json::parse(slurp(log));
  EXPECT_NEAR(x[0][0].get<double>(), 1.0, 1e-10);

  EXPECT_EQ(shell(exe + " run " + dr + " --seeds 3,4 --out \"" + dir.string() + "\" > " + log), 0);
  EXPECT_TRUE(fs::exists(dir / "dr_1d_seed3.csv"));
  EXPECT_TRUE(fs::exists(dir / "dr_1d_seed4.csv"));
  EXPECT_FALSE(fs::exists(dir / "dr_1d_seed0.csv"));
  EXPECT_TRUE(fs::exists(dir / "dr_1d_report.json"));

  EXPECT_EQ(shell("BLOCKSWEEP_OUT=\"" + (dir / "env").string() + "\" " + exe + " run " + dr + " --seeds 1 > " + log), 0);
  EXPECT_TRUE(fs::exists(dir / "env" / "dr_1d_seed1.csv"));

  EXPECT_EQ(shell(exe + " run " + dr + " --max-iter 1 --out \"" + dir.string() + "\" > " + log + " 2>&1"), 2);

  std::ofstream(dir / "broken.json") << "{\n\"problem\": \n";
  EXPECT_EQ(shell(exe + " validate \"" + (dir / "broken.json").string() + "\" 2> " + log), 1);
  EXPECT_NE(slurp(log).find("parse error at line"), std::string::npos);
  EXPECT_EQ(shell(exe + " bogus > /dev/null 2>&1"), 1);
  fs::remove_all(dir);
}
