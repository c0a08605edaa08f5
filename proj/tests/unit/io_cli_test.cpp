#include "commands.hpp"
#include "permk/io.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace permk;
using nlohmann::json;

namespace fs = std::filesystem;

namespace {

struct ToolRun {
  int exit_code = -1;
  std::string stdout_text;
};

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("permk_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ToolRun run_tool(const fs::path& dir, const std::string& config, const std::string& extra = "") {
  const fs::path cfg = dir / "config.json";
  std::ofstream(cfg) << config;
  const std::string cmd = std::string(PERMK_TOOL_PATH) + " --config " + cfg.string() + " --out " +
                          (dir / "out").string() + " " + extra + " 2>/dev/null";
  ToolRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) r.stdout_text.append(buf, got);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Every leaf number in a report sits inside a {"value", "key"} pair, or is a
// count/seed/index field.
void expect_tagged(const json& j, const std::string& path) {
  static const std::set<std::string> plain = {"direct_terms", "trials", "seed", "interior_rows", "excluded_rows",
                                               "N", "index", "multiplicity", "alpha", "re", "im"};
  if (j.is_object()) {
    if (j.contains("value") && j.contains("key")) return;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.value().is_number()) {
        EXPECT_TRUE(plain.count(it.key())) << "untagged number at " << path << "." << it.key();
      } else {
        expect_tagged(it.value(), path + "." + it.key());
      }
    }
  } else if (j.is_array()) {
    for (const auto& x : j)
      if (!x.is_number()) expect_tagged(x, path + "[]");
  }
}

}  // namespace

TEST(Io, SequenceRoundTrip) {
  for (const Sequence& s : {Sequence::from_values({1, 2.5, 4}), Sequence::constant(0.5), Sequence::affine(1, 2),
                            Sequence::exp_affine(0, 2), Sequence::geometric(0.25, 4), Sequence::power(1, 1.5),
                            Sequence::root_gap(0.5, 1)}) {
    const Sequence back = io::sequence_from_json(io::to_json(s), "s");
    for (std::size_t j = 1; j <= 3; ++j) EXPECT_EQ(back(j), s(j));
    EXPECT_EQ(io::to_json(back), io::to_json(s));
  }
}

TEST(Io, SpecRoundTrip) {
  const std::vector<KernelSpec> specs = {
      MinKernel{Sequence::affine(0, 1)},
      ScaledMinKernel{Sequence::affine(0, 1), Sequence::constant(2)},
      ExpKernel{Sequence::affine(0, 1)},
      AR1{Sequence::constant(0.5)},
      AR1Shifted{Sequence::constant(0.5), 1.5},
      ARk{{0.5, 0.25}},
      ARkGen{{0.5, 0.25}, 0.5},
      ShiftedScaled{Sequence::geometric(0.25, 4), Sequence::geometric(0.5, 2), 1.0},
      make_rank_one(ExpKernel{Sequence::affine(0, 1)}, 1, 2, 0.5),
      KilledWalk{{{-1, 0.5}, {1, 0.5}}, 1.0, 20},
  };
  for (const auto& spec : specs) {
    const json j = io::to_json(spec);
    EXPECT_EQ(io::to_json(io::spec_from_json(j)), j) << j.dump();
  }
}

TEST(Io, UnknownFieldsRejected) {
  try {
    io::spec_from_json(json{{"family", "ark"}, {"p", {0.5}}, {"q", 1}});
    FAIL();
  } catch (const Failure& e) {
    EXPECT_EQ(e.key(), "config-unknown-field");
    EXPECT_EQ(e.kind(), FailureKind::usage);
  }
  EXPECT_THROW(io::sequence_from_json(json{{"kind", "constant"}, {"c", 1}, {"d", 2}}, "s"), Failure);
  EXPECT_THROW(io::spec_from_json(json{{"family", "nope"}}), Failure);
}

TEST(Cli, CStarReport) {
  const auto r = cli::run(json{{"command", "cstar"}, {"p", {0.5, 0.25}}});
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NEAR(r.report["c_star"]["value"].get<double>(), 1.92, 1e-9);
  EXPECT_EQ(r.report["c_star"]["key"], "cstar-finite");
  expect_tagged(r.report, "cstar");
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli::run(json::object()).exit_code, 2);
  EXPECT_EQ(cli::run(json{{"command", "cstar"}, {"p", {0.5}}, {"extra", 1}}).exit_code, 2);
  EXPECT_EQ(cli::run(json{{"command", "launch"}}).exit_code, 2);
  const auto v = cli::run(json{{"command", "validate"}, {"spec", {{"family", "ark"}, {"p", {0.25, 0.5}}}}});
  EXPECT_EQ(v.exit_code, 1);
  EXPECT_EQ(v.report["error"]["key"], "ark-generator-monotone-p");
  const auto ok = cli::run(json{{"command", "validate"}, {"spec", {{"family", "ark"}, {"p", {0.5, 0.25}}}}});
  EXPECT_EQ(ok.exit_code, 0) << ok.report.dump();
  const auto none = cli::run(json{{"command", "predict"}, {"spec", {{"family", "ar1"}, {"x", {{"kind", "constant"}, {"c", 0.5}}}}}});
  EXPECT_EQ(none.exit_code, 1);
  EXPECT_EQ(none.report["error"]["key"], "no-applicable-theorem");
}

TEST(Cli, EveryCommandTagsItsNumbers) {
  const json min_spec = {{"family", "min"}, {"s", {{"kind", "affine"}, {"a", 0}, {"b", 1}}}};
  const json ar1_spec = {{"family", "ar1"}, {"x", {{"kind", "constant"}, {"c", 0.5}}}};
  const std::vector<json> configs = {
      {{"command", "validate"}, {"spec", min_spec}, {"window", {{"l", 2}, {"n", 10}}}},
      {{"command", "validate"},
       {"spec", {{"family", "killed_walk"}, {"step_rates", {{"-1", 0.5}, {"1", 0.5}}}, {"beta", 1}, {"radius", 20}}}},
      {{"command", "invert"}, {"spec", min_spec}, {"window", {{"l", 0}, {"n", 3}}}},
      {{"command", "phi"}, {"p", {0.5, 0.5}}, {"terms", 10}},
      {{"command", "predict"}, {"spec", ar1_spec}, {"f_class", "c0"}, {"hypotheses", {{"x_limit", 0.5}}}},
      {{"command", "simulate"}, {"spec", ar1_spec}, {"window", {{"l", 0}, {"n", 4}}}, {"f", {{"kind", "constant"}, {"c", 0.3}}},
       {"alpha", 1}, {"trials", 200}, {"seed", 3}, {"ks_indices", {4}}},
      {{"command", "limsup"}, {"spec", ar1_spec}, {"checkpoints", {100, 1000}}, {"trials", 5}, {"seed", 1},
       {"hypotheses", {{"x_limit", 0.5}}}, {"band_replicates", 50}},
      {{"command", "symmetrize"}, {"spec", min_spec}, {"window", {{"l", 1}, {"n", 4}}}, {"f", {{"density", {1.0}}}}},
  };
  for (const auto& c : configs) {
    const auto r = cli::run(c);
    EXPECT_EQ(r.exit_code, 0) << r.report.dump();
    expect_tagged(r.report, c["command"].get<std::string>());
  }
}

TEST(Cli, InvertWritesCsv) {
  const auto r = cli::run(json{{"command", "invert"},
                               {"spec", {{"family", "min"}, {"s", {1, 2, 3}}}},
                               {"window", {{"l", 0}, {"n", 3}}}});
  ASSERT_EQ(r.exit_code, 0);
  const std::string csv = r.artifacts.at("inverse.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "i,j,value");
  EXPECT_NE(csv.find("1,1,2\n"), std::string::npos);
  EXPECT_NE(csv.find("3,3,1\n"), std::string::npos);
}

TEST(Cli, SymmetrizeFollowsMinClosedForm) {
  const auto r = cli::run(json{{"command", "symmetrize"},
                               {"spec", {{"family", "min"}, {"s", {{"kind", "affine"}, {"a", 0}, {"b", 1}}}}},
                               {"window", {{"l", 9}, {"n", 6}}},
                               {"f", {{"kind", "constant"}, {"c", 1}}},
                               {"alpha", 0.5}});
  ASSERT_EQ(r.exit_code, 0) << r.report.dump();
  EXPECT_NEAR(r.report["rho"]["value"].get<double>(), 0.1, 1e-12);
  EXPECT_EQ(r.report["rho"]["key"], "rho-min-closed-form");
  for (const char* f : {"K_ext.csv", "A.csv", "A_sym.csv", "K_isymi.csv"}) EXPECT_TRUE(r.artifacts.count(f));
}

TEST(CliBinary, ExitCodesAndArtifacts) {
  const fs::path dir = scratch("codes");
  const auto ok = run_tool(dir, R"({"command": "cstar", "p": [0.5, 0.25]})");
  EXPECT_EQ(ok.exit_code, 0);
  EXPECT_NE(ok.stdout_text.find("1.92"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "out" / "cstar.json"));
  EXPECT_EQ(run_tool(dir, "{}").exit_code, 2);
  EXPECT_EQ(run_tool(dir, "not json").exit_code, 2);
  EXPECT_EQ(run_tool(dir, R"({"command": "validate", "spec": {"family": "ark", "p": [0.25, 0.5]}})").exit_code, 1);
  EXPECT_EQ(run_tool(dir, R"({"command": "cstar", "p": [0.5]})", "--bogus-flag").exit_code, 2);
  const auto quiet = run_tool(dir, R"({"command": "cstar", "p": [0.5]})", "--quiet");
  EXPECT_EQ(quiet.exit_code, 0);
  EXPECT_TRUE(quiet.stdout_text.empty());
}

TEST(CliBinary, SameSeedSameBytes) {
  const std::string cfg = R"({"command": "simulate", "spec": {"family": "exp", "v": {"kind": "affine", "a": 0, "b": 1}},
    "window": {"l": 0, "n": 5}, "alpha": 1.5, "trials": 50, "seed": 4})";
  const fs::path a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
  ASSERT_EQ(run_tool(a, cfg).exit_code, 0);
  ASSERT_EQ(run_tool(b, cfg).exit_code, 0);
  ASSERT_EQ(run_tool(c, cfg, "--seed 5").exit_code, 0);
  for (const char* f : {"simulate.json", "samples.csv"}) {
    EXPECT_EQ(slurp(a / "out" / f), slurp(b / "out" / f)) << f;
    EXPECT_FALSE(slurp(a / "out" / f).empty());
  }
  EXPECT_NE(slurp(a / "out" / "samples.csv"), slurp(c / "out" / "samples.csv"));
}
