#pragma once

// End-to-end denoising driver: functional toy runs with CTR and ST, per-step phase
// plans for the cycle model, and a synthetic-mask path for full-size configs.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "disc/ctr.hpp"
#include "disc/loadbalance.hpp"
#include "disc/model.hpp"
#include "disc/network.hpp"
#include "disc/plan.hpp"
#include "disc/random.hpp"
#include "disc/sim.hpp"
#include "disc/st.hpp"

namespace disc {

inline constexpr std::uint64_t kBytesPerElement = 2;  // fp16 operands in DRAM

struct StepRecord {
  std::size_t step = 0;
  bool dense = true;
  std::size_t computed_tokens = 0;
  double pruning_ratio = 0.0;
  double sparsity = 0.0;  // attention-mask sparsity in effect this step (0 without ST)
};

struct DenoiseResult {
  std::optional<Latent> latent;  // absent for synthetic full-size runs
  std::optional<std::vector<SimStats>> step_stats;
  std::vector<StepRecord> trajectory;

  SimStats total() const {
    SimStats t;
    if (step_stats)
      for (const auto& s : *step_stats) t += s;
    return t;
  }
};

// ---- phase plans ----------------------------------------------------------------------------

/// What one block does in one step, independent of how the numbers were produced.
struct BlockStepShape {
  TokenIndexMask tokens;                        // computed query rows
  std::optional<std::vector<SparseLoad>> st;    // per-head loads on sparse steps
  bool project_text_kv = false;                 // cross-attention K/V computed this step
};

namespace detail {

class PlanBuilder {
 public:
  std::size_t add(PhasePlan p) {
    plan_.push_back(std::move(p));
    return plan_.size() - 1;
  }
  std::vector<PhasePlan> take() { return std::move(plan_); }

 private:
  std::vector<PhasePlan> plan_;
};

inline PhasePlan vector_phase(std::string name, std::uint64_t elements, std::uint64_t rows, unsigned sweeps,
                              unsigned reductions, std::vector<std::size_t> deps) {
  PhasePlan p;
  p.kind = PhaseKind::vector_op;
  p.name = std::move(name);
  p.elements = elements;
  p.rows = rows;
  p.sweeps = sweeps;
  p.reductions = reductions;
  p.deps = std::move(deps);
  return p;
}

inline PhasePlan matmul_phase(std::string name, std::size_t m, std::size_t k, std::size_t n,
                              std::vector<std::size_t> deps, std::uint64_t weight_bytes = 0) {
  PhasePlan p;
  p.kind = PhaseKind::dense_matmul;
  p.name = std::move(name);
  p.m = m;
  p.k = k;
  p.n = n;
  p.deps = std::move(deps);
  p.dram_bytes = weight_bytes;
  return p;
}

inline PhasePlan gated_phase(std::string name, const TokenIndexMask& mask, std::size_t k, std::size_t n,
                             std::vector<std::size_t> deps, std::uint64_t weight_bytes = 0) {
  PhasePlan p = matmul_phase(std::move(name), mask.size(), k, n, std::move(deps), weight_bytes);
  p.kind = PhaseKind::token_gated_matmul;
  p.token_mask = mask;
  return p;
}

}  // namespace detail

/// Phases of one transformer block: self-attention, optional cross-attention, FFN.
inline std::vector<PhasePlan> build_block_plan(const ModelConfig& model, std::size_t n_tokens,
                                               const BlockStepShape& shape) {
  using detail::gated_phase;
  using detail::matmul_phase;
  using detail::vector_phase;
  if (shape.tokens.size() != n_tokens) throw ShapeError("build_block_plan: token mask length != token count");
  const std::size_t d = model.hidden_dim, hd = model.head_dim(), f = model.ffn_dim(), h = model.heads;
  const std::size_t n = n_tokens;
  const std::size_t sel = shape.tokens.popcount();
  const std::uint64_t wbytes = std::uint64_t(d) * d * kBytesPerElement;
  const std::uint64_t nd = std::uint64_t(n) * d;
  detail::PlanBuilder b;

  const auto ln1 = b.add(vector_phase("sa.layernorm", nd, n, 2, 2, {}));
  const auto q = b.add(gated_phase("sa.q_proj", shape.tokens, d, d, {ln1}, wbytes));
  const auto k = b.add(matmul_phase("sa.k_proj", n, d, d, {ln1}, wbytes));
  const auto v = b.add(matmul_phase("sa.v_proj", n, d, d, {ln1}, wbytes));
  std::size_t pv;
  if (shape.st) {
    if (shape.st->size() != h) throw ShapeError("build_block_plan: need one sparse load per head");
    for (const auto& l : *shape.st)
      if (l.rows() != sel) throw ShapeError("build_block_plan: sparse load rows != computed tokens");
    PhasePlan qk;
    qk.kind = PhaseKind::sddmm;
    qk.name = "sa.qk";
    qk.k = hd;
    qk.loads = *shape.st;
    qk.deps = {q, k};
    const auto qk_i = b.add(std::move(qk));
    PhasePlan sm;
    sm.kind = PhaseKind::sparse_softmax;
    sm.name = "sa.softmax";
    sm.loads = *shape.st;
    sm.deps = {qk_i};
    const auto sm_i = b.add(std::move(sm));
    PhasePlan sp;
    sp.kind = PhaseKind::spmm;
    sp.name = "sa.pv";
    sp.n = hd;
    sp.loads = *shape.st;
    sp.deps = {sm_i, v};
    pv = b.add(std::move(sp));
  } else {
    auto qk = gated_phase("sa.qk", shape.tokens, hd, n, {q, k});
    qk.repeat = h;
    const auto qk_i = b.add(std::move(qk));
    const std::uint64_t scores = std::uint64_t(sel) * n * h;
    const auto sm_i = b.add(vector_phase("sa.softmax", scores, std::uint64_t(sel) * h, 3, 2, {qk_i}));
    auto pvp = gated_phase("sa.pv", shape.tokens, n, hd, {sm_i, v});
    pvp.repeat = h;
    pv = b.add(std::move(pvp));
  }
  auto out = gated_phase("sa.out_proj", shape.tokens, d, d, {pv}, wbytes);
  if (shape.st) out.stream_from = pv;
  const auto out_i = b.add(std::move(out));
  std::size_t last = b.add(vector_phase("sa.residual", nd, n, 1, 0, {out_i}));

  if (model.has_cross_attention) {
    const std::size_t t = model.text_tokens;
    const auto ln2 = b.add(vector_phase("ca.layernorm", nd, n, 2, 2, {last}));
    const auto cq = b.add(gated_phase("ca.q_proj", shape.tokens, d, d, {ln2}, wbytes));
    const auto ckv = b.add(matmul_phase("ca.kv_proj", shape.project_text_kv ? t : 0, d, 2 * d, {}, 2 * wbytes));
    auto cqk = gated_phase("ca.qk", shape.tokens, hd, t, {cq, ckv});
    cqk.repeat = h;
    const auto cqk_i = b.add(std::move(cqk));
    const auto csm =
        b.add(vector_phase("ca.softmax", std::uint64_t(sel) * t * h, std::uint64_t(sel) * h, 3, 2, {cqk_i}));
    auto cpv = gated_phase("ca.pv", shape.tokens, t, hd, {csm, ckv});
    cpv.repeat = h;
    const auto cpv_i = b.add(std::move(cpv));
    const auto cout = b.add(gated_phase("ca.out_proj", shape.tokens, d, d, {cpv_i}, wbytes));
    last = b.add(vector_phase("ca.residual", nd, n, 1, 0, {cout}));
  }

  const std::uint64_t fbytes = std::uint64_t(d) * f * kBytesPerElement;
  const auto ln3 = b.add(vector_phase("ffn.layernorm", nd, n, 2, 2, {last}));
  const auto fc1 = b.add(gated_phase("ffn.fc1", shape.tokens, d, f, {ln3}, fbytes));
  const auto act = b.add(vector_phase("ffn.gelu", std::uint64_t(sel) * f, sel, 1, 0, {fc1}));
  const auto fc2 = b.add(gated_phase("ffn.fc2", shape.tokens, f, d, {act}, fbytes));
  b.add(vector_phase("ffn.residual", nd, n, 1, 0, {fc2}));
  return b.take();
}

/// Patch embedding at the start of a step.
inline std::vector<PhasePlan> build_embed_plan(const ModelConfig& model, std::size_t n_tokens) {
  const std::size_t pin = model.latent_channels * model.patch_size * model.patch_size;
  const std::uint64_t bytes = std::uint64_t(pin) * model.hidden_dim * kBytesPerElement;
  detail::PlanBuilder b;
  const auto e = b.add(detail::matmul_phase("embed.proj", n_tokens, pin, model.hidden_dim, {}, bytes));
  b.add(detail::vector_phase("embed.add", std::uint64_t(n_tokens) * model.hidden_dim, n_tokens, 2, 0, {e}));
  return b.take();
}

/// Final layernorm, unpatchify projection and the latent update.
inline std::vector<PhasePlan> build_final_plan(const ModelConfig& model, std::size_t n_tokens) {
  const std::size_t pin = model.latent_channels * model.patch_size * model.patch_size;
  const std::uint64_t bytes = std::uint64_t(pin) * model.hidden_dim * kBytesPerElement;
  detail::PlanBuilder b;
  const auto ln = b.add(
      detail::vector_phase("final.layernorm", std::uint64_t(n_tokens) * model.hidden_dim, n_tokens, 2, 2, {}));
  const auto p = b.add(detail::matmul_phase("final.proj", n_tokens, model.hidden_dim, pin, {ln}, bytes));
  b.add(detail::vector_phase("final.update", std::uint64_t(n_tokens) * pin, n_tokens, 2, 0, {p}));
  return b.take();
}

/// Sum of embed, every block and final phases (blocks run back to back).
inline SimStats simulate_step(const ModelConfig& model, std::size_t n_tokens,
                              std::span<const BlockStepShape> blocks, const ArchConfig& arch) {
  SimStats s = sim_block(build_embed_plan(model, n_tokens), arch);
  for (const auto& bs : blocks) s += sim_block(build_block_plan(model, n_tokens, bs), arch);
  s += sim_block(build_final_plan(model, n_tokens), arch);
  return s;
}

// ---- functional toy run -----------------------------------------------------------------------

inline StConfig st_config_for(const WorkloadConfig& w) {
  StConfig st;
  st.tau = w.tau_st;
  st.schedule = {w.steps, w.reuse_interval};
  return st;
}

/// Runs the toy network for w.steps steps: z <- z - step_size * net(z, t).
inline DenoiseResult run_denoising(const WorkloadConfig& w, const std::optional<ArchConfig>& arch,
                                   std::uint64_t seed) {
  w.validate();
  if (arch) arch->validate();
  const ToyNetwork net = ToyNetwork::create(w.model, w.resolution, seed);
  const std::size_t n = net.n_tokens;
  const PatchConfig patch{w.model.patch_size};
  const StConfig st = st_config_for(w);
  const auto scfg = net.self_config();
  const auto ccfg = net.cross_config();

  Latent z = net.initial_latent(seed);
  std::optional<Latent> z_prev;
  std::vector<TokenCache> caches(net.blocks.size());
  std::vector<MaskCache> masks(net.blocks.size());

  DenoiseResult res;
  if (arch) res.step_stats.emplace();

  for (std::size_t step = 0; step < w.steps; ++step) {
    StepRecord rec;
    rec.step = step;
    const bool use_st = w.mode == Mode::all;
    rec.dense = !use_st || st.schedule.is_dense(step);

    TokenIndexMask tm = TokenIndexMask::all(n);
    if (w.mode != Mode::baseline && z_prev) tm = build_token_mask(latent_diff(z, *z_prev), w.tau_ctr, patch);
    rec.computed_tokens = tm.popcount();
    rec.pruning_ratio = tm.pruning_ratio();

    Latent eps;
    std::vector<BlockStepShape> shapes;
    if (w.mode == Mode::baseline) {
      eps = net.forward_dense(z, step);
      for (std::size_t b = 0; b < net.blocks.size(); ++b) shapes.push_back({tm, std::nullopt, step == 0});
    } else {
      Matrix x = net.embed_tokens(z, step);
      double sparsity_sum = 0.0;
      for (std::size_t b = 0; b < net.blocks.size(); ++b) {
        const auto& bw = net.blocks[b];
        Matrix sa;
        if (use_st) {
          StAttentionKernel kern{&st, step, &masks[b], std::nullopt};
          sa = selective_self_attention(layernorm(x), bw.self_attn, tm, caches[b], scfg, kern);
        } else {
          sa = selective_self_attention(layernorm(x), bw.self_attn, tm, caches[b], scfg);
        }
        x = add(x, sa);
        if (w.model.has_cross_attention)
          x = add(x, selective_cross_attention(layernorm(x), net.text_kv[b], bw.cross_attn, tm, caches[b], ccfg));
        x = add(x, selective_ffn(layernorm(x), bw.ffn, tm, caches[b]));
        caches[b].valid = true;

        BlockStepShape shape{tm, std::nullopt, step == 0};
        if (use_st && masks[b].mask) {
          const SparsityMask& m = *masks[b].mask;
          sparsity_sum += m.sparsity();
          if (!rec.dense && arch) {
            const auto idx = tm.selected();
            std::vector<SparseLoad> loads;
            for (const auto& head : m.heads) loads.push_back(SparseLoad::from_mask(select_rows(head, idx), arch->hash));
            shape.st = std::move(loads);
          }
        }
        shapes.push_back(std::move(shape));
      }
      if (use_st) rec.sparsity = sparsity_sum / double(net.blocks.size());
      eps = net.head(x);
    }

    if (arch) res.step_stats->push_back(simulate_step(w.model, n, shapes, *arch));
    res.trajectory.push_back(rec);

    Latent next = z;
    for (std::size_t i = 0; i < next.data.size(); ++i) next.data[i] = z.data[i] - w.step_size * eps.data[i];
    z_prev = std::move(z);
    z = std::move(next);
  }
  res.latent = std::move(z);
  return res;
}

// ---- synthetic full-size run ------------------------------------------------------------------

/// Rows sampled per head to characterize a full-size attention mask.
inline constexpr std::size_t kMaskSampleRows = 16;

/// CTR masks prune exactly round(pruning_ratio * N) tokens chosen from a per-step stream, so
/// every mode sees the same masks for a seed. ST masks are clustered samples regenerated on
/// dense steps. All blocks share one shape; the per-step block cost is multiplied by n_blocks.
inline DenoiseResult simulate_synthetic(const WorkloadConfig& w, const ArchConfig& arch, std::uint64_t seed) {
  w.validate();
  arch.validate();
  const std::size_t n = w.tokens();
  const StepSchedule schedule{w.steps, w.reuse_interval};
  const ClusteredMaskGenerator gen;
  std::vector<BitMatrix> samples;

  DenoiseResult res;
  res.step_stats.emplace();
  for (std::size_t step = 0; step < w.steps; ++step) {
    StepRecord rec;
    rec.step = step;
    const bool use_st = w.mode == Mode::all;
    rec.dense = !use_st || schedule.is_dense(step);

    TokenIndexMask tm = TokenIndexMask::all(n);
    if (w.mode != Mode::baseline && step > 0) {
      Rng rng = derived_rng(seed, 0x63747200000000ull + step);
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      const auto pruned = static_cast<std::size_t>(std::llround(w.pruning_ratio * double(n)));
      for (std::size_t i = 0; i < pruned; ++i) tm.bits[order[i]] = 0;
    }
    rec.computed_tokens = tm.popcount();
    rec.pruning_ratio = tm.pruning_ratio();

    BlockStepShape shape{tm, std::nullopt, step == 0};
    if (use_st) {
      if (schedule.is_dense(step)) {
        Rng rng = derived_rng(seed, 0x73740000000000ull + step);
        samples.clear();
        for (std::size_t h = 0; h < w.model.heads; ++h)
          samples.push_back(gen.generate(kMaskSampleRows, n, 1.0 - w.sparsity, rng));
      }
      double sp = 0.0;
      for (const auto& s : samples) sp += s.sparsity();
      rec.sparsity = sp / double(samples.size());
      if (!rec.dense) {
        std::vector<SparseLoad> loads;
        for (const auto& s : samples) loads.push_back(SparseLoad::from_mask(s, arch.hash).with_rows(rec.computed_tokens));
        shape.st = std::move(loads);
      }
    }

    SimStats s = sim_block(build_embed_plan(w.model, n), arch);
    s += sim_block(build_block_plan(w.model, n, shape), arch).times(w.model.n_blocks);
    s += sim_block(build_final_plan(w.model, n), arch);
    res.step_stats->push_back(std::move(s));
    res.trajectory.push_back(rec);
  }
  return res;
}

/// Toy-sized models execute functionally; full-size ones are costed from synthetic masks.
inline bool runs_functionally(const WorkloadConfig& w) {
  return w.tokens() <= 1024 && w.model.hidden_dim <= 256;
}

inline DenoiseResult simulate_workload(const WorkloadConfig& w, const ArchConfig& arch, std::uint64_t seed) {
  return runs_functionally(w) ? run_denoising(w, arch, seed) : simulate_synthetic(w, arch, seed);
}

}  // namespace disc
