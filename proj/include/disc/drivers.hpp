#pragma once

// Experiment drivers behind the CLI subcommands. Each returns its output files as
// (name, content) pairs so callers decide where they go.

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "disc/config.hpp"
#include "disc/denoise.hpp"
#include "disc/flops.hpp"
#include "disc/io.hpp"
#include "disc/loadbalance.hpp"

namespace disc {

struct CommandOutput {
  std::vector<std::pair<std::string, std::string>> files;
  std::vector<std::string> violations;  // failed internal invariants

  const std::string& file(std::string_view name) const {
    for (const auto& [n, c] : files)
      if (n == name) return c;
    throw std::out_of_range("no output named " + std::string(name));
  }
};

inline std::vector<Mode> modes_to_run(std::optional<Mode> only) {
  if (only) return {*only};
  return {Mode::baseline, Mode::ctr, Mode::all};
}

/// Breakdown for the configured model and resolution, plus the reduction summary per mode
/// at the configured pruning ratio and sparsity.
inline CommandOutput cmd_flops(const RunConfig& cfg) {
  cfg.workload.validate();
  CommandOutput out;
  out.files.emplace_back("flops_breakdown.csv", flops_csv(flops_breakdown(cfg.workload.model, cfg.workload.resolution)));
  std::string summary = "mode," + flops_summary_csv_header();
  for (Mode m : modes_to_run(std::nullopt)) {
    WorkloadConfig w = cfg.workload;
    w.mode = m;
    summary += std::string(to_string(m)) + "," +
               flops_summary_csv_row(flops_reduction(w, cfg.workload.pruning_ratio, cfg.workload.sparsity));
  }
  out.files.emplace_back("flops_reduction.csv", std::move(summary));
  return out;
}

inline std::vector<HashFunction> loadbalance_hashes(const LoadBalanceConfig& lb) {
  return {HashFunction::modular(lb.n_buckets),
          HashFunction::multiplicative(lb.n_buckets, lb.k_odd, lb.word_bits),
          HashFunction::range(lb.n_buckets, lb.cols)};
}

/// Synthetic masks shared by all hash functions: masks_per_level masks at every level.
inline std::vector<BitMatrix> loadbalance_masks(const LoadBalanceConfig& lb, std::uint64_t seed) {
  lb.validate();
  Rng rng = derived_rng(seed, 0x6c62);
  const ClusteredMaskGenerator gen;
  std::vector<BitMatrix> masks;
  for (double s : lb.sparsity_levels)
    for (std::size_t k = 0; k < lb.masks_per_level; ++k)
      masks.push_back(lb.generator == "clustered" ? gen.generate(lb.rows, lb.cols, 1.0 - s, rng)
                                                  : uniform_random_mask(lb.rows, lb.cols, 1.0 - s, rng));
  return masks;
}

inline CommandOutput cmd_loadbalance(const RunConfig& cfg, std::uint64_t seed) {
  const auto& lb = cfg.loadbalance;
  const auto masks = loadbalance_masks(lb, seed);
  std::string csv = load_profile_csv_header();
  for (const auto& h : loadbalance_hashes(lb)) csv += to_csv_rows(load_balance_profile(masks, h, lb.bucket_width));
  CommandOutput out;
  out.files.emplace_back("loadbalance.csv", std::move(csv));
  return out;
}

/// Runs the workload once per mode on identical seeds. Checks cycles(all) <= cycles(ctr) <=
/// cycles(baseline) when all three modes run.
inline CommandOutput cmd_simulate(const RunConfig& cfg, std::uint64_t seed, std::optional<Mode> only = std::nullopt) {
  cfg.workload.validate();
  const ArchConfig arch = cfg.resolved_arch();
  arch.validate();
  CommandOutput out;
  std::ostringstream steps, summary;
  steps << "mode,step,dense,computed_tokens,pruning_ratio,sparsity,cycles\n";
  summary << "mode,cycles_total,multi_core_cycles,speedup_vs_baseline\n";
  std::vector<std::pair<Mode, SimStats>> totals;
  for (Mode m : modes_to_run(only)) {
    WorkloadConfig w = cfg.workload;
    w.mode = m;
    const DenoiseResult r = simulate_workload(w, arch, seed);
    const auto& per_step = *r.step_stats;
    steps << std::setprecision(17);
    for (std::size_t i = 0; i < per_step.size(); ++i) {
      const auto& t = r.trajectory[i];
      steps << to_string(m) << ',' << t.step << ',' << (t.dense ? 1 : 0) << ',' << t.computed_tokens << ','
            << t.pruning_ratio << ',' << t.sparsity << ',' << per_step[i].cycles_total << '\n';
    }
    totals.emplace_back(m, r.total());
    out.files.emplace_back("simstats_" + std::string(to_string(m)) + ".csv", to_csv(totals.back().second));
  }
  std::optional<Cycles> base;
  for (const auto& [m, s] : totals)
    if (m == Mode::baseline) base = s.cycles_total;
  summary << std::setprecision(17);
  for (const auto& [m, s] : totals) {
    summary << to_string(m) << ',' << s.cycles_total << ',' << multi_core_cycles(s, arch.n_cores) << ',';
    if (base && s.cycles_total > 0) summary << double(*base) / double(s.cycles_total);
    summary << '\n';
  }
  if (totals.size() == 3) {
    const Cycles b = totals[0].second.cycles_total, c = totals[1].second.cycles_total, a = totals[2].second.cycles_total;
    if (c > b) out.violations.push_back("ctr cycles " + std::to_string(c) + " exceed baseline " + std::to_string(b));
    if (a > c) out.violations.push_back("all cycles " + std::to_string(a) + " exceed ctr " + std::to_string(c));
  }
  out.files.emplace_back("simulate_steps.csv", steps.str());
  out.files.emplace_back("simulate_summary.csv", summary.str());
  return out;
}

/// Functional toy run: final latent dump and the measured pruning/sparsity trajectory.
inline CommandOutput cmd_runtoy(const RunConfig& cfg, std::uint64_t seed, std::optional<Mode> mode = std::nullopt) {
  WorkloadConfig w = cfg.workload;
  if (mode) w.mode = *mode;
  w.validate();
  if (!runs_functionally(w))
    throw ParameterError("runtoy: model '" + w.model.name + "' is too large to execute functionally");
  const DenoiseResult r = run_denoising(w, std::nullopt, seed);
  CommandOutput out;
  out.files.emplace_back("latent.bin", encode_latent(*r.latent));
  out.files.emplace_back("trajectory.csv", trajectory_csv_header() + trajectory_csv_rows(r.trajectory));
  for (const auto& v : r.latent->data)
    if (!std::isfinite(v)) {
      out.violations.push_back("final latent has non-finite values");
      break;
    }
  return out;
}

}  // namespace disc
