#include <gtest/gtest.h>

#include <sys/wait.h>

#include <filesystem>
#include <sstream>

#include "disc/disc.hpp"

namespace fs = std::filesystem;
using namespace disc;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("disc_cli_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DISC_CLI_PATH) + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  fs::path p = dir / "run.ini";
  write_file(p, text);
  return p;
}

const char* kToyConfig =
    "[run]\n"
    "preset = toy\n"
    "steps = 4\n";

}  // namespace

TEST(Cli, SimulateAndRuntoyAreDeterministic) {
  const fs::path dir = scratch("det");
  const fs::path cfg = write_config(dir, kToyConfig);
  for (const char* cmd : {"simulate", "runtoy"}) {
    const fs::path a = dir / (std::string(cmd) + "_a"), b = dir / (std::string(cmd) + "_b");
    ASSERT_EQ(run_cli(std::string(cmd) + " --config " + cfg.string() + " --seed 5 --out " + a.string()), 0);
    ASSERT_EQ(run_cli(std::string(cmd) + " --config " + cfg.string() + " --seed 5 --out " + b.string()), 0);
    std::size_t compared = 0;
    for (const auto& e : fs::directory_iterator(a)) {
      if (e.path().filename() == "manifest.json") continue;
      EXPECT_EQ(read_file(e.path()), read_file(b / e.path().filename())) << e.path();
      ++compared;
    }
    EXPECT_GE(compared, 2u);
  }
}

TEST(Cli, OutputsMatchLibrary) {
  const fs::path dir = scratch("lib");
  const fs::path cfg = write_config(dir, kToyConfig);
  ASSERT_EQ(run_cli("simulate --config " + cfg.string() + " --seed 2 --out " + dir.string()), 0);
  const RunConfig rc = parse_config_text(kToyConfig);
  const auto lib = cmd_simulate(rc, 2);
  for (const auto& [name, content] : lib.files) EXPECT_EQ(read_file(dir / name), content) << name;

  auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  EXPECT_EQ(manifest["command"], "simulate");
  EXPECT_EQ(manifest["seed"], 2);
  EXPECT_EQ(manifest["tool_version"], std::string(kToolVersion));
  EXPECT_EQ(manifest["outputs"].size(), lib.files.size());
}

TEST(Cli, SummaryTotalsEqualSumOfSteps) {
  const RunConfig rc = parse_config_text(kToyConfig);
  const auto out = cmd_simulate(rc, 3);
  std::map<std::string, std::uint64_t> per_mode;
  std::istringstream steps(out.file("simulate_steps.csv"));
  std::string line;
  std::getline(steps, line);
  while (std::getline(steps, line)) {
    const auto mode = line.substr(0, line.find(','));
    per_mode[mode] += std::stoull(line.substr(line.rfind(',') + 1));
  }
  std::istringstream summary(out.file("simulate_summary.csv"));
  std::getline(summary, line);
  std::size_t rows = 0;
  while (std::getline(summary, line)) {
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
    EXPECT_EQ(std::stoull(line.substr(c1 + 1, c2 - c1 - 1)), per_mode[line.substr(0, c1)]);
    ++rows;
  }
  EXPECT_EQ(rows, 3u);
  EXPECT_TRUE(out.violations.empty());
}

TEST(Cli, FlopsAndLoadbalanceWriteCsv) {
  const fs::path dir = scratch("csv");
  const fs::path cfg = write_config(dir,
                                    "[run]\npreset = pixart-2k\n"
                                    "[loadbalance]\nmasks_per_level = 2\nsparsity_levels = 0.1, 0.5\n");
  ASSERT_EQ(run_cli("flops --config " + cfg.string() + " --out " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "flops_breakdown.csv"));
  EXPECT_EQ(read_file(dir / "flops_reduction.csv").rfind("mode,model,resolution", 0), 0u);
  ASSERT_EQ(run_cli("loadbalance --config " + cfg.string() + " --out " + dir.string()), 0);
  EXPECT_EQ(read_file(dir / "loadbalance.csv").rfind(load_profile_csv_header(), 0), 0u);
}

TEST(Cli, RejectsBadInput) {
  const fs::path dir = scratch("bad");
  EXPECT_EQ(run_cli("simulate --config " + write_config(dir, "[run]\nsteps = many\n").string() + " --out " +
                    dir.string()),
            2);
  EXPECT_EQ(run_cli("simulate --config " + write_config(dir, "[model]\nn_blocks = 0\n").string() + " --out " +
                    dir.string()),
            1);
  EXPECT_EQ(run_cli("runtoy --config " + write_config(dir, "[run]\npreset = pixart-2k\n").string() + " --out " +
                    dir.string()),
            1);
  EXPECT_NE(run_cli("simulate --config /nonexistent/run.ini"), 0);
  EXPECT_NE(run_cli("simulate --mode turbo --out " + dir.string()), 0);
  EXPECT_NE(run_cli(""), 0);
}

TEST(Cli, SingleUnitCoreRuns) {
  const fs::path dir = scratch("d1");
  const fs::path cfg = write_config(dir, std::string(kToyConfig) + "[arch]\npreset = toy\nunits = 1\n");
  ASSERT_EQ(run_cli("simulate --config " + cfg.string() + " --out " + dir.string()), 0);
  EXPECT_FALSE(read_file(dir / "simulate_summary.csv").empty());
}
