#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "disc/errors.hpp"

namespace disc {

struct ModelConfig {
  std::string name = "toy";
  std::size_t n_blocks = 2;
  std::size_t hidden_dim = 64;
  std::size_t heads = 2;
  double ffn_mult = 4.0;
  std::size_t latent_channels = 4;
  std::size_t patch_size = 2;
  bool has_cross_attention = true;
  std::size_t text_tokens = 8;

  std::size_t head_dim() const { return hidden_dim / heads; }
  std::size_t ffn_dim() const { return static_cast<std::size_t>(ffn_mult * double(hidden_dim) + 0.5); }

  /// Latent side length for an 8x VAE.
  std::size_t latent_side(std::size_t resolution) const {
    if (resolution == 0 || resolution % (8 * patch_size) != 0)
      throw ParameterError("resolution " + std::to_string(resolution) + " is not a multiple of 8 * patch_size (" +
                           std::to_string(8 * patch_size) + ")");
    return resolution / 8;
  }
  std::size_t grid_side(std::size_t resolution) const { return latent_side(resolution) / patch_size; }
  std::size_t tokens(std::size_t resolution) const {
    const std::size_t g = grid_side(resolution);
    return g * g;
  }

  void validate() const {
    if (n_blocks == 0 || hidden_dim == 0 || heads == 0 || latent_channels == 0 || patch_size == 0)
      throw ParameterError("model '" + name + "': n_blocks, hidden_dim, heads, latent_channels, patch_size must be >= 1");
    if (hidden_dim % heads != 0) throw ParameterError("model '" + name + "': hidden_dim must be divisible by heads");
    if (!(ffn_mult > 0.0)) throw ParameterError("model '" + name + "': ffn_mult must be > 0");
    if (has_cross_attention && text_tokens == 0)
      throw ParameterError("model '" + name + "': cross-attention needs text_tokens >= 1");
  }
};

// Public architecture shapes of the evaluated model families.
inline ModelConfig dit_xl_model() {
  return {"dit-xl", 28, 1152, 16, 4.0, 4, 2, false, 0};
}
inline ModelConfig pixart_sigma_model(std::size_t text_tokens = 300) {
  return {"pixart-sigma", 28, 1152, 16, 4.0, 4, 2, true, text_tokens};
}
inline ModelConfig toy_model() { return {}; }

enum class Mode { baseline, ctr, all };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::baseline: return "baseline";
    case Mode::ctr: return "ctr";
    case Mode::all: return "all";
  }
  return "?";
}

inline Mode parse_mode(std::string_view s) {
  if (s == "baseline") return Mode::baseline;
  if (s == "ctr") return Mode::ctr;
  if (s == "all") return Mode::all;
  throw ParameterError("unknown mode '" + std::string(s) + "' (expected baseline|ctr|all)");
}

struct WorkloadConfig {
  ModelConfig model;
  std::size_t resolution = 128;
  std::size_t steps = 20;
  double tau_ctr = 0.1;
  double tau_st = 0.015;
  std::size_t reuse_interval = 3;
  Mode mode = Mode::all;
  double step_size = 0.05;  // toy update z <- z - step_size * network(z, t)
  // Targets used when a layer is too large to execute functionally.
  double pruning_ratio = 0.4;
  double sparsity = 0.6;

  std::size_t tokens() const { return model.tokens(resolution); }

  void validate() const {
    model.validate();
    (void)model.tokens(resolution);
    if (steps == 0) throw ParameterError("steps must be >= 1");
    if (reuse_interval == 0) throw ParameterError("reuse_interval must be >= 1");
    if (tau_st < 0.0) throw ParameterError("tau_st must be >= 0");
    if (pruning_ratio < 0.0 || pruning_ratio > 1.0 || sparsity < 0.0 || sparsity > 1.0)
      throw ParameterError("pruning_ratio and sparsity must lie in [0, 1]");
  }
};

/// Built-in workloads: the functional toy plus the evaluated model/resolution pairs with
/// pruning and sparsity targets inside the reported operating ranges.
inline std::vector<std::pair<std::string, WorkloadConfig>> builtin_workloads() {
  std::vector<std::pair<std::string, WorkloadConfig>> w;
  WorkloadConfig toy;
  toy.model = toy_model();
  toy.resolution = 128;
  toy.steps = 8;
  w.emplace_back("toy", toy);

  auto big = [](ModelConfig m, std::size_t res, double pruning, double sparsity) {
    WorkloadConfig c;
    c.model = std::move(m);
    c.resolution = res;
    c.steps = 20;
    c.pruning_ratio = pruning;
    c.sparsity = sparsity;
    return c;
  };
  w.emplace_back("dit-xl-512", big(dit_xl_model(), 512, 0.50, 0.60));
  w.emplace_back("pixart-512", big(pixart_sigma_model(), 512, 0.626, 0.562));
  w.emplace_back("pixart-1k", big(pixart_sigma_model(), 1024, 0.45, 0.62));
  w.emplace_back("pixart-2k", big(pixart_sigma_model(), 2048, 0.253, 0.661));
  return w;
}

inline WorkloadConfig builtin_workload(std::string_view name) {
  for (auto& [n, w] : builtin_workloads())
    if (n == name) return w;
  throw ParameterError("unknown built-in workload '" + std::string(name) + "'");
}

}  // namespace disc
