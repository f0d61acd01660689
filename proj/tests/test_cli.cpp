#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <sys/wait.h>

#include "mixedctrl/cli.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mixedctrl;

namespace {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("mixedctrl_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "mixedctrl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::execute(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path write_config(const TempDir& d, const json& j, const std::string& name = "config.json") {
  const auto p = d / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::vector<std::vector<double>> read_numeric_csv(const fs::path& p, std::string* header) {
  std::ifstream f(p);
  std::string line;
  std::getline(f, line);
  if (header) *header = line;
  std::vector<std::vector<double>> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<double> r;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) r.push_back(std::stod(cell));
    rows.push_back(std::move(r));
  }
  return rows;
}

json small_grid_config() {
  return {{"schema_version", 1},
          {"kind", "grid"},
          {"scenario",
           {{"width", 7},
            {"height", 7},
            {"obstacles", {{2, 2, 4, 4}}},
            {"horizon", 4},
            {"start", {0, 0}},
            {"goal", {6, 6}},
            {"max_step", 2},
            {"sigma", 0.6},
            {"miss_penalty", 10},
            {"risk_bound", 0.05}}},
          {"monte_carlo", {{"seed", 3}, {"samples", 4000}}}};
}

json small_smpc_config() {
  return {{"schema_version", 1},
          {"kind", "smpc"},
          {"scenario",
           {{"double_integrator", {{"dt", 1.0}, {"sigma_w", 0.1}}},
            {"u_max", 1.0},
            {"horizon", 3},
            {"terminal", {1.5, 0, 0, 0}},
            {"state_box", {{"lower", {-3, -3, -3, -3}}, {"upper", {3, 3, 3, 3}}}},
            {"obstacles", {{{"box", {0.6, 1.0, -0.3, 0.3}}}}},
            {"risk_bound", 0.18}}},
          {"monte_carlo", {{"seed", 2}, {"samples", 4000}}}};
}

}  // namespace

TEST(Cli, ConfigErrorsExitTwo) {
  TempDir d;
  EXPECT_EQ(run({"solve", (d / "missing.json").string(), "--out", d.path().string()}).code, 2);

  std::ofstream(d / "bad.json") << "{ not json";
  auto r = run({"solve", (d / "bad.json").string(), "--out", d.path().string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("JSON"), std::string::npos);

  const auto v2 = write_config(d, {{"schema_version", 2}, {"kind", "toy"}}, "v2.json");
  r = run({"solve", v2.string(), "--out", d.path().string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("schema_version"), std::string::npos);

  const auto kind = write_config(d, {{"schema_version", 1}, {"kind", "maze"}}, "kind.json");
  EXPECT_EQ(run({"solve", kind.string(), "--out", d.path().string()}).code, 2);

  const auto pts = write_config(
      d, {{"schema_version", 1}, {"kind", "finite"}, {"scenario", {{"points", json::array()}}}}, "pts.json");
  EXPECT_EQ(run({"solve", pts.string(), "--out", d.path().string()}).code, 2);

  const auto tol = write_config(d, {{"schema_version", 1}, {"kind", "toy"}, {"solver", {{"tol_lambda", -1}}}},
                                "tol.json");
  EXPECT_EQ(run({"solve", tol.string(), "--out", d.path().string()}).code, 2);
}

TEST(Cli, UsageErrorsExitTwo) {
  auto r = run({"frobnicate"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("solve"), std::string::npos);
  r = run({"solve"});
  EXPECT_EQ(r.code, 2);
  r = run({"solve", "x.json", "--seed", "abc"});
  EXPECT_EQ(r.code, 2);
}

TEST(Cli, ToySolveReport) {
  TempDir d;
  const auto cfg = write_config(d, {{"schema_version", 1}, {"kind", "toy"}});
  const auto r = run({"solve", cfg.string(), "--out", (d / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = read_json(d / "out" / "report.json");
  EXPECT_EQ(rep["schema_version"], 1);
  EXPECT_EQ(rep["kind"], "toy");
  EXPECT_EQ(rep["status"], "mixed");
  EXPECT_NEAR(rep["lambda"][0].get<double>(), 1000.0, 1e-3);
  const auto& comps = rep["mixed"]["components"];
  ASSERT_EQ(comps.size(), 2u);
  for (const auto& c : comps) EXPECT_NEAR(c["probability"].get<double>(), 0.5, 1e-9);
  EXPECT_NEAR(rep["mixed"]["aggregate"]["cost"].get<double>(), 15.0, 1e-9);
  EXPECT_NEAR(rep["mixed"]["aggregate"]["risk"][0].get<double>(), 0.01, 1e-9);
  EXPECT_TRUE(rep["optimality"]["overall"].get<bool>());
  EXPECT_NEAR(rep["pure"]["cost"].get<double>(), 20.0, 1e-12);
  EXPECT_TRUE(rep["monte_carlo"].is_null());
  for (const char* key : {"converged", "bounds", "q_star", "gap_estimate", "oracle_calls", "dual_trace"})
    EXPECT_TRUE(rep.contains(key)) << key;
  EXPECT_TRUE(fs::exists(d / "out" / "timing.json"));
  EXPECT_NE(r.out.find("aggregate cost=15"), std::string::npos);
}

TEST(Cli, LooseBoundIsPure) {
  TempDir d;
  const auto cfg = write_config(d, {{"schema_version", 1}, {"kind", "toy"}, {"scenario", {{"risk_bound", 0.5}}}});
  ASSERT_EQ(run({"solve", cfg.string(), "--out", d.path().string()}).code, 0);
  const auto rep = read_json(d / "report.json");
  EXPECT_EQ(rep["status"], "pure");
  ASSERT_EQ(rep["mixed"]["components"].size(), 1u);
  EXPECT_NEAR(rep["mixed"]["aggregate"]["cost"].get<double>(), 10.0, 1e-12);
  EXPECT_EQ(rep["lambda"][0].get<double>(), 0.0);
}

TEST(Cli, InfeasibleExitsOne) {
  TempDir d;
  const auto finite = write_config(
      d, {{"schema_version", 1}, {"kind", "finite"}, {"scenario", {{"points", {{1, 0.5}, {2, 0.3}}}, {"bounds", {0.1}}}}},
      "finite.json");
  auto r = run({"solve", finite.string(), "--out", d.path().string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("infeasible"), std::string::npos);

  const auto smpc = write_config(
      d, {{"schema_version", 1}, {"kind", "smpc"}, {"scenario", {{"preset", "corridor"}, {"horizon", 4}}}},
      "smpc.json");
  r = run({"solve", smpc.string(), "--out", d.path().string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("step 4"), std::string::npos) << r.err;
}

TEST(Cli, ReportsAreByteIdentical) {
  TempDir d;
  const auto cfg = write_config(d, small_grid_config());
  ASSERT_EQ(run({"solve", cfg.string(), "--out", (d / "a").string()}).code, 0);
  ASSERT_EQ(run({"solve", cfg.string(), "--out", (d / "b").string()}).code, 0);
  EXPECT_EQ(slurp(d / "a" / "report.json"), slurp(d / "b" / "report.json"));
  EXPECT_EQ(slurp(d / "a" / "dual_trace.csv"), slurp(d / "b" / "dual_trace.csv"));
  // A different seed moves only the Monte Carlo block.
  ASSERT_EQ(run({"solve", cfg.string(), "--out", (d / "c").string(), "--seed", "9"}).code, 0);
  auto a = read_json(d / "a" / "report.json"), c = read_json(d / "c" / "report.json");
  EXPECT_NE(a["monte_carlo"], c["monte_carlo"]);
  a.erase("monte_carlo");
  c.erase("monte_carlo");
  EXPECT_EQ(a, c);
}

TEST(Cli, ValidateAcceptsAndRejects) {
  TempDir d;
  const auto cfg = write_config(d, {{"schema_version", 1}, {"kind", "toy"}});
  ASSERT_EQ(run({"solve", cfg.string(), "--out", d.path().string()}).code, 0);
  auto r = run({"validate", cfg.string(), "--out", d.path().string()});
  EXPECT_EQ(r.code, 0) << r.err;
  auto val = read_json(d / "validation.json");
  EXPECT_TRUE(val["passed"].get<bool>());
  EXPECT_TRUE(val["aggregate_consistent"].get<bool>());

  // Probabilities 0.6 / 0.4 break complementary slackness and the aggregate.
  auto rep = read_json(d / "report.json");
  rep["mixed"]["components"][0]["probability"] = 0.6;
  rep["mixed"]["components"][1]["probability"] = 0.4;
  std::ofstream(d / "report.json") << rep.dump(2);
  r = run({"validate", cfg.string(), "--out", d.path().string()});
  EXPECT_EQ(r.code, 3);
  val = read_json(d / "validation.json");
  EXPECT_FALSE(val["passed"].get<bool>());
  EXPECT_FALSE(val["aggregate_consistent"].get<bool>());

  fs::remove(d / "report.json");
  EXPECT_EQ(run({"validate", cfg.string(), "--out", d.path().string()}).code, 2);
}

TEST(Cli, GridPolicyFilesRoundTrip) {
  TempDir d;
  const auto cfg = write_config(d, small_grid_config());
  auto r = run({"solve", cfg.string(), "--out", d.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = read_json(d / "report.json");
  for (const auto& c : rep["mixed"]["components"]) {
    const auto file = c["file"].get<std::string>();
    EXPECT_TRUE(fs::exists(d / file));
    EXPECT_EQ(slurp(d / file).rfind("step,state,action\n", 0), 0u);
    EXPECT_EQ(c["nominal_path"].front(), json({0, 0}));
  }
  EXPECT_LE(rep["mixed"]["aggregate"]["risk"][0].get<double>(), 0.05 + 1e-12);
  const auto& mc = rep["monte_carlo"];
  ASSERT_FALSE(mc.is_null());
  EXPECT_EQ(mc["rollouts"], 4000);
  r = run({"validate", cfg.string(), "--out", d.path().string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(read_json(d / "validation.json")["optimality"]["overall"].get<bool>());

  // A corrupted policy file is a config error.
  const auto file = rep["mixed"]["components"][0]["file"].get<std::string>();
  std::ofstream(d / file) << "step,state,action\n0,0,999\n";
  EXPECT_EQ(run({"validate", cfg.string(), "--out", d.path().string()}).code, 2);
}

TEST(Cli, SmpcPlanFilesRoundTrip) {
  TempDir d;
  const auto cfg = write_config(d, small_smpc_config());
  auto r = run({"solve", cfg.string(), "--out", d.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = read_json(d / "report.json");
  for (const auto& c : rep["mixed"]["components"]) {
    const auto text = slurp(d / c["file"].get<std::string>());
    EXPECT_EQ(text.rfind("step,u0,u1,x0", 0), 0u) << text.substr(0, 60);
  }
  r = run({"validate", cfg.string(), "--out", d.path().string()});
  EXPECT_EQ(r.code, 0) << r.err;
}

TEST(Cli, SweepCsv) {
  TempDir d;
  const auto cfg = write_config(
      d, {{"schema_version", 1},
          {"kind", "finite"},
          {"scenario", {{"points", {{3, 0.04}, {6, 0.02}, {12, 0.0}}}, {"bounds", {0.01}}}},
          {"sweep", {{"lambda_min", 1}, {"lambda_max", 1000}, {"points", 31}}}});
  ASSERT_EQ(run({"sweep", cfg.string(), "--out", d.path().string()}).code, 0);
  std::string header;
  const auto rows = read_numeric_csv(d / "sweep.csv", &header);
  EXPECT_EQ(header, "lambda,c0,c1,lagrangian_value,subgradient");
  ASSERT_EQ(rows.size(), 32u);
  EXPECT_EQ(rows.front()[0], 0.0);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_GT(rows[i][0], rows[i - 1][0]);
    EXPECT_LE(rows[i][2], rows[i - 1][2]);
    EXPECT_GE(rows[i][1], rows[i - 1][1]);
  }
  for (const auto& row : rows) {
    EXPECT_NEAR(row[3], row[1] + row[0] * (row[2] - 0.01), 1e-9 * (1.0 + std::abs(row[3])));
    EXPECT_NEAR(row[4], row[2] - 0.01, 1e-15);
  }
}

TEST(Cli, DualTraceCsv) {
  TempDir d;
  const auto cfg = write_config(d, {{"schema_version", 1}, {"kind", "toy"}});
  ASSERT_EQ(run({"solve", cfg.string(), "--out", d.path().string()}).code, 0);
  std::string header;
  const auto rows = read_numeric_csv(d / "dual_trace.csv", &header);
  EXPECT_EQ(header, "iteration,lambda,c0,c1,lagrangian_value");
  const auto rep = read_json(d / "report.json");
  EXPECT_EQ(rows.size(), rep["oracle_calls"].get<std::size_t>());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i][0], static_cast<double>(i));
    EXPECT_NEAR(rows[i][4], rows[i][2] + rows[i][1] * (rows[i][3] - 0.01), 1e-9 * (1.0 + rows[i][4]));
  }
}

TEST(Cli, ShippedConfigsParse) {
  for (const char* name : {"toy.json", "finite.json", "grid.json", "edl.json", "smpc.json"}) {
    const auto cfg = cli::load_config(fs::path(MIXEDCTRL_CONFIG_DIR) / name);
    EXPECT_NO_THROW(cli::build_problem(cfg)) << name;
  }
}

TEST(Cli, ExecutableExitCodes) {
  TempDir d;
  const auto cfg = write_config(d, {{"schema_version", 1}, {"kind", "toy"}});
  const std::string exe = MIXEDCTRL_CLI;
  const auto status = [](int s) { return WIFEXITED(s) ? WEXITSTATUS(s) : -1; };
  EXPECT_EQ(status(std::system((exe + " solve " + cfg.string() + " --out " + d.path().string() + " >/dev/null").c_str())), 0);
  EXPECT_TRUE(fs::exists(d / "report.json"));
  EXPECT_EQ(status(std::system((exe + " solve " + (d / "nope.json").string() + " 2>/dev/null").c_str())), 2);
}
