// disc: FLOPs accounting, hash load balance, cycle simulation and toy denoising runs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "disc/disc.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
};

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("disc");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* lvl = std::getenv("DISC_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));
}

disc::RunConfig load_config(const Options& o) {
  if (o.config.empty()) return {};
  std::ifstream in(o.config);
  if (!in) throw std::runtime_error("cannot open config " + o.config);
  spdlog::debug("reading config {}", o.config);
  return disc::parse_config(in);
}

int emit(const std::string& command, const Options& o, std::uint64_t seed, const disc::CommandOutput& result) {
  fs::create_directories(o.out);
  disc::RunManifest manifest;
  manifest.command = command;
  manifest.config_path = o.config;
  manifest.output_dir = o.out;
  manifest.seed = seed;
  manifest.timestamp = disc::utc_timestamp();
  for (const auto& [name, content] : result.files) {
    disc::write_file(fs::path(o.out) / name, content);
    manifest.outputs.push_back(name);
    spdlog::info("wrote {}", (fs::path(o.out) / name).string());
  }
  disc::write_file(fs::path(o.out) / "manifest.json", manifest.to_json().dump(2) + "\n");
  for (const auto& v : result.violations) spdlog::error("invariant violated: {}", v);
  return result.violations.empty() ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Diffusion transformer accelerator model: FLOPs, load balance, cycle simulation, toy runs"};
  app.require_subcommand(1);
  Options o;
  auto common = [&o](CLI::App* sub, bool with_mode) {
    sub->add_option("--config", o.config, "run configuration file")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
    sub->add_option("--seed", o.seed, "random seed (overrides [run] seed)");
    if (with_mode)
      sub->add_option("--mode", o.mode, "baseline | ctr | all")->check(CLI::IsMember({"baseline", "ctr", "all"}));
  };
  auto* flops = app.add_subcommand("flops", "FLOPs breakdown and CTR/ST reduction");
  auto* lb = app.add_subcommand("loadbalance", "per-DPU load stddev of the three hash functions");
  auto* sim = app.add_subcommand("simulate", "cycle simulation of baseline, ctr and all modes");
  auto* toy = app.add_subcommand("runtoy", "functional toy denoising run");
  common(flops, false);
  common(lb, false);
  common(sim, true);
  common(toy, true);

  CLI11_PARSE(app, argc, argv);

  try {
    const disc::RunConfig cfg = load_config(o);
    const std::uint64_t seed = o.seed.value_or(cfg.seed.value_or(0));
    std::optional<disc::Mode> mode;
    if (o.mode) mode = disc::parse_mode(*o.mode);
    spdlog::debug("workload {} seed {}", cfg.workload_name, seed);
    if (*flops) return emit("flops", o, seed, disc::cmd_flops(cfg));
    if (*lb) return emit("loadbalance", o, seed, disc::cmd_loadbalance(cfg, seed));
    if (*sim) return emit("simulate", o, seed, disc::cmd_simulate(cfg, seed, mode));
    if (*toy) return emit("runtoy", o, seed, disc::cmd_runtoy(cfg, seed, mode));
  } catch (const disc::ConfigError& e) {
    spdlog::error("{}: {}", o.config, e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
