#pragma once

// Sectioned key = value run configuration.
//
//   # comment
//   [run]
//   preset = pixart-2k
//   steps = 20
//
// Sections: run, model, ctr, st, arch, loadbalance. Unknown sections or keys are
// errors reported with their line number.

#include <charconv>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "disc/errors.hpp"
#include "disc/hash.hpp"
#include "disc/denoise.hpp"
#include "disc/model.hpp"
#include "disc/sim.hpp"

namespace disc {

struct LoadBalanceConfig {
  std::uint32_t n_buckets = 64;
  std::uint64_t k_odd = kDefaultOddMultiplier;
  std::uint32_t word_bits = 0;  // 0: index width of the mask
  std::size_t cols = 1024;      // square token grid
  std::size_t rows = 16;
  std::size_t masks_per_level = 20;
  // Bucket midpoints, plus both extremes at finer steps.
  std::vector<double> sparsity_levels = {0.01,  0.02,  0.03,  0.04,  0.125, 0.225, 0.325, 0.425, 0.475, 0.525,
                                         0.575, 0.625, 0.675, 0.775, 0.875, 0.96,  0.97,  0.98,  0.99};
  std::string generator = "clustered";  // clustered | uniform
  double bucket_width = 0.05;

  void validate() const {
    if (cols == 0 || rows == 0 || masks_per_level == 0) throw ParameterError("loadbalance: cols, rows, masks_per_level must be >= 1");
    if (sparsity_levels.empty()) throw ParameterError("loadbalance: no sparsity levels");
    for (double s : sparsity_levels)
      if (s < 0.0 || s > 1.0) throw ParameterError("loadbalance: sparsity levels must lie in [0, 1]");
    if (generator != "clustered" && generator != "uniform")
      throw ParameterError("loadbalance: generator must be clustered or uniform");
    if (!(bucket_width > 0.0)) throw ParameterError("loadbalance: bucket_width must be > 0");
  }
};

struct RunConfig {
  std::string workload_name = "toy";
  WorkloadConfig workload = builtin_workload("toy");
  std::optional<ArchConfig> arch;  // unset: picked to match the workload scale
  LoadBalanceConfig loadbalance;
  std::optional<std::uint64_t> seed;

  /// The explicit arch, else the small core for toy-sized models and the full core otherwise.
  ArchConfig resolved_arch() const {
    if (arch) return *arch;
    return runs_functionally(workload) ? ArchConfig::toy() : ArchConfig{};
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view v, int line, std::string_view key) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end)
    throw ConfigError("bad value '" + std::string(v) + "' for " + std::string(key), line);
  return out;
}

inline bool parse_bool(std::string_view v, int line, std::string_view key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean '" + std::string(v) + "' for " + std::string(key), line);
}

inline std::vector<double> parse_list(std::string_view v, int line, std::string_view key) {
  std::vector<double> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(parse_number<double>(trim(v.substr(0, comma)), line, key));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace detail

inline RunConfig parse_config(std::istream& in) {
  using detail::parse_bool;
  using detail::parse_number;
  RunConfig cfg;
  auto& w = cfg.workload;
  auto& m = cfg.workload.model;
  auto& lb = cfg.loadbalance;
  bool workload_touched = false;
  std::optional<std::string> hash_kind;
  std::optional<std::uint64_t> k_odd;
  std::optional<std::uint32_t> word_bits;

  auto arch = [&]() -> ArchConfig& {
    if (!cfg.arch) cfg.arch = ArchConfig{};
    return *cfg.arch;
  };

  std::string current_key;
  using Setter = std::function<void(std::string_view, int)>;
  auto sz = [&](std::size_t& f) -> Setter {
    return [&f, &current_key](std::string_view v, int line) { f = parse_number<std::size_t>(v, line, current_key); };
  };
  auto dbl = [&](double& f) -> Setter {
    return [&f, &current_key](std::string_view v, int line) { f = parse_number<double>(v, line, current_key); };
  };
  auto u32 = [&](std::uint32_t& f) -> Setter {
    return [&f, &current_key](std::string_view v, int line) { f = parse_number<std::uint32_t>(v, line, current_key); };
  };
  auto u64 = [&](std::uint64_t& f) -> Setter {
    return [&f, &current_key](std::string_view v, int line) { f = parse_number<std::uint64_t>(v, line, current_key); };
  };

  std::map<std::string, std::map<std::string, Setter>> keys;
  keys["run"] = {
      {"preset",
       [&](std::string_view v, int line) {
         if (workload_touched) throw ConfigError("preset must precede other workload keys", line);
         try {
           w = builtin_workload(v);
         } catch (const ParameterError& e) {
           throw ConfigError(e.what(), line);
         }
         cfg.workload_name = std::string(v);
       }},
      {"resolution", sz(w.resolution)},
      {"steps", sz(w.steps)},
      {"mode", [&](std::string_view v, int line) {
         try {
           w.mode = parse_mode(v);
         } catch (const ParameterError& e) {
           throw ConfigError(e.what(), line);
         }
       }},
      {"step_size", dbl(w.step_size)},
      {"seed", [&](std::string_view v, int line) { cfg.seed = parse_number<std::uint64_t>(v, line, "seed"); }},
  };
  keys["model"] = {
      {"name", [&](std::string_view v, int) { m.name = std::string(v); }},
      {"n_blocks", sz(m.n_blocks)},
      {"hidden_dim", sz(m.hidden_dim)},
      {"heads", sz(m.heads)},
      {"ffn_mult", dbl(m.ffn_mult)},
      {"latent_channels", sz(m.latent_channels)},
      {"patch_size", sz(m.patch_size)},
      {"cross_attention", [&](std::string_view v, int line) { m.has_cross_attention = parse_bool(v, line, "cross_attention"); }},
      {"text_tokens", sz(m.text_tokens)},
  };
  keys["ctr"] = {{"tau", dbl(w.tau_ctr)}, {"pruning_ratio", dbl(w.pruning_ratio)}};
  keys["st"] = {{"tau", dbl(w.tau_st)}, {"reuse_interval", sz(w.reuse_interval)}, {"sparsity", dbl(w.sparsity)}};
  keys["arch"] = {
      {"preset",
       [&](std::string_view v, int line) {
         if (v == "toy") cfg.arch = ArchConfig::toy();
         else if (v == "full") cfg.arch = ArchConfig{};
         else throw ConfigError("unknown arch preset '" + std::string(v) + "' (expected toy|full)", line);
       }},
      {"units",
       [&](std::string_view v, int line) {
         const auto u = parse_number<std::uint32_t>(v, line, "units");
         auto& a = arch();
         a.n_dpus = a.n_simds = a.n_banks = u;
       }},
      {"mults_per_dpu", [&](std::string_view v, int line) { arch().mults_per_dpu = parse_number<std::uint32_t>(v, line, "mults_per_dpu"); }},
      {"lanes_per_simd", [&](std::string_view v, int line) { arch().lanes_per_simd = parse_number<std::uint32_t>(v, line, "lanes_per_simd"); }},
      {"reduction_bus_latency", [&](std::string_view v, int line) { arch().reduction_bus_latency = parse_number<std::uint64_t>(v, line, "reduction_bus_latency"); }},
      {"dram_bandwidth", [&](std::string_view v, int line) { arch().dram_bandwidth = parse_number<double>(v, line, "dram_bandwidth"); }},
      {"dram_latency", [&](std::string_view v, int line) { arch().dram_latency = parse_number<std::uint64_t>(v, line, "dram_latency"); }},
      {"cores", [&](std::string_view v, int line) { arch().n_cores = parse_number<std::uint32_t>(v, line, "cores"); }},
      {"hash", [&](std::string_view v, int) { (void)arch(); hash_kind = std::string(v); }},
      {"k_odd", [&](std::string_view v, int line) { (void)arch(); k_odd = parse_number<std::uint64_t>(v, line, "k_odd"); }},
      {"word_bits", [&](std::string_view v, int line) { (void)arch(); word_bits = parse_number<std::uint32_t>(v, line, "word_bits"); }},
      {"sddmm_schedule",
       [&](std::string_view v, int line) {
         if (v == "decoupled") arch().sddmm_schedule = SddmmSchedule::decoupled;
         else if (v == "row_serial") arch().sddmm_schedule = SddmmSchedule::row_serial;
         else throw ConfigError("sddmm_schedule must be decoupled or row_serial", line);
       }},
  };
  keys["loadbalance"] = {
      {"n_buckets", u32(lb.n_buckets)},
      {"k_odd", u64(lb.k_odd)},
      {"word_bits", u32(lb.word_bits)},
      {"cols", sz(lb.cols)},
      {"rows", sz(lb.rows)},
      {"masks_per_level", sz(lb.masks_per_level)},
      {"sparsity_levels", [&](std::string_view v, int line) { lb.sparsity_levels = detail::parse_list(v, line, "sparsity_levels"); }},
      {"generator", [&](std::string_view v, int) { lb.generator = std::string(v); }},
      {"bucket_width", dbl(lb.bucket_width)},
  };

  std::string section;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view s = raw;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = detail::trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("unterminated section header", line);
      section = std::string(detail::trim(s.substr(1, s.size() - 2)));
      if (!keys.count(section)) throw ConfigError("unknown section [" + section + "]", line);
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected key = value", line);
    if (section.empty()) throw ConfigError("key outside of a section", line);
    const std::string key(detail::trim(s.substr(0, eq)));
    const std::string_view value = detail::trim(s.substr(eq + 1));
    auto& table = keys[section];
    auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown key '" + key + "' in [" + section + "]", line);
    if (value.empty()) throw ConfigError("empty value for '" + key + "'", line);
    current_key = key;
    it->second(value, line);
    if (section != "arch" && section != "loadbalance" && !(section == "run" && (key == "preset" || key == "seed")))
      workload_touched = true;
  }

  if (cfg.arch) {
    auto& a = *cfg.arch;
    HashFunction h = a.hash;
    if (hash_kind) {
      try {
        h.kind = parse_hash_kind(*hash_kind);
      } catch (const ParameterError& e) {
        throw ConfigError(e.what());
      }
    }
    if (k_odd) h.k_odd = *k_odd;
    if (word_bits) h.word_bits = *word_bits;
    h.n_buckets = a.n_banks;
    a.hash = h;
  }
  return cfg;
}

inline RunConfig parse_config_text(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

}  // namespace disc
