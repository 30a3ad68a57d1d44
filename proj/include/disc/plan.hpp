#pragma once

// Phase plans for one transformer block and their composition into SimStats.

#include <algorithm>
#include <array>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "disc/sim.hpp"

namespace disc {

enum class PhaseKind { dense_matmul, token_gated_matmul, sddmm, sparse_softmax, spmm, vector_op };

inline std::string_view to_string(PhaseKind k) {
  switch (k) {
    case PhaseKind::dense_matmul: return "dense-matmul";
    case PhaseKind::token_gated_matmul: return "token-gated-matmul";
    case PhaseKind::sddmm: return "sddmm";
    case PhaseKind::sparse_softmax: return "sparse-softmax";
    case PhaseKind::spmm: return "spmm";
    case PhaseKind::vector_op: return "vector-op";
  }
  return "?";
}

enum class Unit { dpu, vpu };

inline Unit unit_of(PhaseKind k) {
  switch (k) {
    case PhaseKind::dense_matmul:
    case PhaseKind::token_gated_matmul:
    case PhaseKind::sddmm: return Unit::dpu;
    default: return Unit::vpu;
  }
}

struct PhasePlan {
  PhaseKind kind = PhaseKind::dense_matmul;
  std::string name;
  // matmuls: m x k times k x n, repeated `repeat` times (e.g. once per head).
  // sddmm: k = head dim. spmm: n = head dim.
  std::size_t m = 0, k = 0, n = 0, repeat = 1;
  std::optional<TokenIndexMask> token_mask;  // token-gated matmul: m = popcount
  std::vector<SparseLoad> loads;             // sddmm / sparse-softmax / spmm: one per head
  // vector-op
  std::uint64_t elements = 0, rows = 0;
  unsigned sweeps = 1, reductions = 0;
  std::uint64_t dram_bytes = 0;  // off-chip traffic, overlapped by double buffering
  std::vector<std::size_t> deps;
  std::optional<std::size_t> stream_from;  // spmm producer feeding this matmul row by row

  std::size_t effective_rows() const { return token_mask ? token_mask->popcount() : m; }
};

struct PhaseStats {
  Cycles cycles = 0;
  std::uint64_t dpu_busy_cycles = 0;
  std::uint64_t vpu_busy_cycles = 0;
  std::uint64_t mac_count = 0;
  std::uint64_t sram_reads = 0;
  std::uint64_t sram_writes = 0;
  std::uint64_t dram_bytes = 0;
  std::uint64_t bank_conflicts = 0;

  PhaseStats& operator+=(const PhaseStats& o) {
    cycles += o.cycles;
    dpu_busy_cycles += o.dpu_busy_cycles;
    vpu_busy_cycles += o.vpu_busy_cycles;
    mac_count += o.mac_count;
    sram_reads += o.sram_reads;
    sram_writes += o.sram_writes;
    dram_bytes += o.dram_bytes;
    bank_conflicts += o.bank_conflicts;
    return *this;
  }
  friend bool operator==(const PhaseStats&, const PhaseStats&) = default;
};

struct SimStats {
  Cycles cycles_total = 0;
  std::map<std::string, PhaseStats> cycles_per_phase;  // keyed by phase name
  std::uint64_t bank_conflicts = 0;
  std::uint64_t dpu_busy_cycles = 0;
  std::uint64_t vpu_busy_cycles = 0;
  std::uint64_t mac_count = 0;
  std::uint64_t sram_reads = 0;
  std::uint64_t sram_writes = 0;
  std::uint64_t dram_bytes = 0;

  SimStats& operator+=(const SimStats& o) {
    cycles_total += o.cycles_total;
    for (const auto& [k, v] : o.cycles_per_phase) cycles_per_phase[k] += v;
    bank_conflicts += o.bank_conflicts;
    dpu_busy_cycles += o.dpu_busy_cycles;
    vpu_busy_cycles += o.vpu_busy_cycles;
    mac_count += o.mac_count;
    sram_reads += o.sram_reads;
    sram_writes += o.sram_writes;
    dram_bytes += o.dram_bytes;
    return *this;
  }
  /// Every counter multiplied by `f` (identical blocks).
  SimStats times(std::uint64_t f) const {
    SimStats s;
    for (std::uint64_t i = 0; i < f; ++i) s += *this;
    return s;
  }
  friend bool operator==(const SimStats&, const SimStats&) = default;
};

inline const char* simstats_csv_header() {
  return "phase,cycles,dpu_busy_cycles,vpu_busy_cycles,mac_count,sram_reads,sram_writes,dram_bytes,bank_conflicts\n";
}

/// One row per phase plus a "total" row. Per-phase cycles are durations; the total row
/// carries the makespan, which is smaller whenever phases overlap.
inline std::string to_csv(const SimStats& s) {
  std::ostringstream os;
  os << simstats_csv_header();
  auto row = [&](const std::string& name, Cycles c, std::uint64_t dpu, std::uint64_t vpu, std::uint64_t mac,
                 std::uint64_t rd, std::uint64_t wr, std::uint64_t dram, std::uint64_t bc) {
    os << name << ',' << c << ',' << dpu << ',' << vpu << ',' << mac << ',' << rd << ',' << wr << ',' << dram
       << ',' << bc << '\n';
  };
  for (const auto& [name, p] : s.cycles_per_phase)
    row(name, p.cycles, p.dpu_busy_cycles, p.vpu_busy_cycles, p.mac_count, p.sram_reads, p.sram_writes,
        p.dram_bytes, p.bank_conflicts);
  row("total", s.cycles_total, s.dpu_busy_cycles, s.vpu_busy_cycles, s.mac_count, s.sram_reads, s.sram_writes,
      s.dram_bytes, s.bank_conflicts);
  return os.str();
}

/// Query-token split across cores; no interconnect contention.
inline Cycles multi_core_cycles(const SimStats& s, std::uint32_t n_cores) {
  return ceil_div(s.cycles_total, std::max<std::uint32_t>(1, n_cores));
}

namespace detail {

struct PhaseCost {
  PhaseStats stats;
  std::vector<Cycles> row_completion;  // spmm only
};

inline Cycles transfer_cycles(std::uint64_t bytes, const ArchConfig& arch) {
  if (bytes == 0) return 0;
  return arch.dram_latency + static_cast<Cycles>(std::ceil(double(bytes) / arch.dram_bandwidth));
}

inline PhaseCost phase_compute(const PhasePlan& p, const ArchConfig& arch) {
  PhaseCost c;
  auto& s = c.stats;
  const Cycles kchunks = ceil_div(p.k, arch.mults_per_dpu);
  switch (p.kind) {
    case PhaseKind::dense_matmul:
    case PhaseKind::token_gated_matmul: {
      const std::size_t rows = p.effective_rows();
      s.cycles = sim_dense_matmul(rows, p.k, p.n, arch) * p.repeat;
      const std::uint64_t outs = std::uint64_t(rows) * p.n * p.repeat;
      s.mac_count = outs * p.k;
      s.dpu_busy_cycles = outs * kchunks;
      s.sram_reads = 2 * outs * kchunks;
      s.sram_writes = outs;
      break;
    }
    case PhaseKind::sddmm: {
      for (const auto& l : p.loads) {
        auto r = sim_sddmm(l, p.k, arch);
        s.cycles += r.cycles;
        const std::uint64_t nnz = l.nnz();
        s.mac_count += nnz * p.k;
        s.dpu_busy_cycles += nnz * kchunks;
        s.sram_reads += 2 * nnz * kchunks;
        s.sram_writes += nnz;
      }
      break;
    }
    case PhaseKind::sparse_softmax: {
      s.cycles = sim_sparse_softmax(p.loads, arch);
      for (const auto& l : p.loads) {
        const std::uint64_t lines = ceil_div(l.nnz(), arch.lanes_per_simd);
        s.vpu_busy_cycles += 3 * lines;
        s.sram_reads += 2 * lines;
        s.sram_writes += lines;
      }
      break;
    }
    case PhaseKind::spmm: {
      auto r = sim_spmm(p.loads, p.n, arch);
      s.cycles = r.cycles;
      c.row_completion = std::move(r.row_completion);
      const Cycles dchunks = ceil_div(p.n, arch.lanes_per_simd);
      for (const auto& l : p.loads) {
        const std::uint64_t nnz = l.nnz();
        s.mac_count += nnz * p.n;
        s.vpu_busy_cycles += nnz * dchunks;
        s.sram_reads += nnz * (1 + dchunks);
        s.sram_writes += l.nonempty_rows() * dchunks;
      }
      break;
    }
    case PhaseKind::vector_op: {
      s.cycles = sim_vector_op(p.elements, p.rows, p.sweeps, p.reductions, arch);
      const std::uint64_t lines = ceil_div(p.elements, arch.lanes_per_simd);
      s.vpu_busy_cycles = p.sweeps * lines;
      s.sram_reads = p.sweeps * lines;
      s.sram_writes = lines;
      break;
    }
  }
  return c;
}

}  // namespace detail

/// Validates that dependencies point backwards (the plan order is a topological order).
inline void validate_plan(std::span<const PhasePlan> plan) {
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto& p = plan[i];
    for (auto d : p.deps)
      if (d >= i) throw PreconditionError("phase '" + p.name + "': dependency cycle or forward reference");
    if (p.stream_from) {
      const auto s = *p.stream_from;
      if (s >= i) throw PreconditionError("phase '" + p.name + "': dependency cycle or forward reference");
      if (plan[s].kind != PhaseKind::spmm || unit_of(p.kind) != Unit::dpu)
        throw PreconditionError("phase '" + p.name + "': only spmm -> matmul row streaming is modeled");
      if (plan[s].loads.empty() || plan[s].loads.front().rows() != p.effective_rows())
        throw PreconditionError("phase '" + p.name + "': streamed row counts differ");
    }
    if (p.kind == PhaseKind::token_gated_matmul && !p.token_mask)
      throw PreconditionError("phase '" + p.name + "': token-gated matmul without a mask");
  }
}

/// List-schedules the plan on the DPU array and the VPU. A phase starts when its unit is
/// free and its dependencies are done; a matmul streamed from an spmm starts row i as soon
/// as that row is produced. DRAM transfers overlap compute (phase time = max of both).
inline SimStats sim_block(std::span<const PhasePlan> plan, const ArchConfig& arch) {
  arch.validate();
  validate_plan(plan);
  SimStats out;
  std::array<Cycles, 2> unit_free{0, 0};
  std::vector<Cycles> start(plan.size(), 0), finish(plan.size(), 0);
  std::vector<std::vector<Cycles>> rows_done(plan.size());

  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto& p = plan[i];
    auto cost = detail::phase_compute(p, arch);
    const Cycles compute = cost.stats.cycles;
    const bool active = compute > 0;
    const Cycles transfer = active ? detail::transfer_cycles(p.dram_bytes, arch) : 0;
    const auto u = static_cast<std::size_t>(unit_of(p.kind));

    // A streamed consumer waits on its producer row by row, not on the whole phase.
    Cycles ready = unit_free[u];
    for (auto d : p.deps)
      if (!(p.stream_from && *p.stream_from == d && active)) ready = std::max(ready, finish[d]);

    Cycles done;
    if (p.stream_from && active) {
      const auto s = *p.stream_from;
      std::vector<Cycles> prod(rows_done[s].size());
      for (std::size_t r = 0; r < prod.size(); ++r) prod[r] = start[s] + rows_done[s][r];
      auto per_row = dense_row_costs(p.effective_rows(), p.k, p.n, arch);
      for (auto& c : per_row) c *= p.repeat;
      const Cycles first = prod.empty() ? ready : std::max(ready, prod.front());
      start[i] = first;
      done = std::max(pipelined_finish(prod, per_row, ready), ready + transfer);
    } else {
      start[i] = ready;
      done = ready + std::max(compute, transfer);
    }
    finish[i] = done;
    rows_done[i] = std::move(cost.row_completion);
    if (active) unit_free[u] = done;

    PhaseStats ps = cost.stats;
    ps.cycles = done - start[i];
    if (!active) ps.cycles = 0;
    ps.dram_bytes = active ? p.dram_bytes : 0;
    out.cycles_per_phase[p.name] += ps;
    out.cycles_total = std::max(out.cycles_total, done);
    out.dpu_busy_cycles += ps.dpu_busy_cycles;
    out.vpu_busy_cycles += ps.vpu_busy_cycles;
    out.mac_count += ps.mac_count;
    out.sram_reads += ps.sram_reads;
    out.sram_writes += ps.sram_writes;
    out.dram_bytes += ps.dram_bytes;
    out.bank_conflicts += ps.bank_conflicts;
  }
  return out;
}

}  // namespace disc
