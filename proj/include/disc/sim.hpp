#pragma once

// Cycle-approximate model of one core: DPU array (D dot-product units, L multipliers
// each), VPU (S SIMD engines, W lanes each, inter-SIMD reduction bus), one SRAM bank
// per unit, and bandwidth/latency DRAM with double buffering.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "disc/ctr.hpp"
#include "disc/errors.hpp"
#include "disc/hash.hpp"
#include "disc/st.hpp"

namespace disc {

using Cycles = std::uint64_t;

inline Cycles ceil_div(Cycles a, Cycles b) { return b == 0 ? 0 : (a + b - 1) / b; }

enum class SddmmSchedule {
  decoupled,   ///< every DPU drains its own bank queue across rows
  row_serial,  ///< all DPUs synchronize at the end of each output row
};

struct ArchConfig {
  std::uint32_t n_dpus = 64;
  std::uint32_t mults_per_dpu = 16;
  std::uint32_t n_simds = 64;
  std::uint32_t lanes_per_simd = 16;
  std::uint32_t n_banks = 64;
  Cycles reduction_bus_latency = 1;
  double dram_bandwidth = 64.0;  // bytes per cycle
  Cycles dram_latency = 100;
  HashFunction hash = HashFunction::multiplicative(64, kDefaultOddMultiplier, 0);
  std::uint32_t n_cores = 1;
  SddmmSchedule sddmm_schedule = SddmmSchedule::decoupled;

  /// Small core for the functional toy model.
  static ArchConfig toy() {
    ArchConfig a;
    a.n_dpus = a.n_simds = a.n_banks = 8;
    a.mults_per_dpu = a.lanes_per_simd = 8;
    a.hash = HashFunction::multiplicative(8, kDefaultOddMultiplier, 0);
    a.dram_bandwidth = 16.0;
    a.dram_latency = 20;
    return a;
  }

  unsigned reduction_stages() const { return static_cast<unsigned>(std::countr_zero(n_simds)); }
  Cycles reduction_cycles() const { return reduction_bus_latency * reduction_stages(); }

  void validate() const {
    if (n_dpus == 0 || mults_per_dpu == 0 || n_simds == 0 || lanes_per_simd == 0 || n_banks == 0 || n_cores == 0)
      throw ParameterError("ArchConfig: all counts must be >= 1");
    if (!std::has_single_bit(n_dpus) || !std::has_single_bit(n_simds))
      throw ParameterError("ArchConfig: n_dpus and n_simds must be powers of two");
    if (n_dpus != n_simds || n_dpus != n_banks || n_dpus != hash.n_buckets)
      throw ParameterError("ArchConfig: n_dpus, n_simds, n_banks and hash buckets must match");
    if (!(dram_bandwidth > 0.0)) throw ParameterError("ArchConfig: dram_bandwidth must be > 0");
  }
};

// ---- sparse workload descriptors --------------------------------------------------------

/// Per-row, per-bank nonzero counts of a hash-distributed sparse matrix.
///
/// Holds `samples` measured rows; logical row i uses sample i mod samples, which lets
/// full-size layers be costed from a row sample.
class SparseLoad {
 public:
  SparseLoad() = default;
  SparseLoad(std::size_t n_rows, std::uint32_t n_banks, std::vector<std::vector<std::uint32_t>> samples)
      : n_rows_(n_rows), n_banks_(n_banks), samples_(std::move(samples)) {
    if (n_rows_ > 0 && samples_.empty()) throw ShapeError("SparseLoad: rows without samples");
    for (const auto& s : samples_)
      if (s.size() != n_banks_) throw ShapeError("SparseLoad: sample width != bank count");
    prepare();
  }

  static SparseLoad from_mask(const BitMatrix& mask, const HashFunction& hash) {
    const HashFunction h = hash.bound_to(mask.cols);
    h.validate();
    std::vector<std::vector<std::uint32_t>> s;
    s.reserve(mask.rows);
    for (std::size_t i = 0; i < mask.rows; ++i) s.push_back(bucket_counts(mask.row(i), h));
    return SparseLoad(mask.rows, h.n_buckets, std::move(s));
  }

  static SparseLoad from_encoded(const HashEncodedMatrix& m) {
    std::vector<std::vector<std::uint32_t>> s(m.rows, std::vector<std::uint32_t>(m.n_banks(), 0));
    for (std::size_t v = 0; v < m.banks.size(); ++v)
      for (const auto& e : m.banks[v]) ++s[e.row][v];
    return SparseLoad(m.rows, static_cast<std::uint32_t>(m.n_banks()), std::move(s));
  }

  /// Same samples tiled over a different logical row count.
  SparseLoad with_rows(std::size_t n_rows) const { return SparseLoad(n_rows, n_banks_, samples_); }

  std::size_t rows() const { return n_rows_; }
  std::uint32_t banks() const { return n_banks_; }
  std::size_t sample_count() const { return samples_.size(); }

  std::uint32_t row_max(std::size_t i) const { return sample_max_[i % samples_.size()]; }
  std::uint64_t row_nnz(std::size_t i) const { return sample_nnz_[i % samples_.size()]; }

  /// Sum over logical rows of count[v].
  std::vector<std::uint64_t> bank_totals() const {
    std::vector<std::uint64_t> t(n_banks_, 0);
    if (n_rows_ == 0) return t;
    const std::size_t s = samples_.size(), full = n_rows_ / s, rem = n_rows_ % s;
    for (std::size_t k = 0; k < s; ++k)
      for (std::uint32_t v = 0; v < n_banks_; ++v)
        t[v] += samples_[k][v] * static_cast<std::uint64_t>(full + (k < rem ? 1 : 0));
    return t;
  }

  std::uint64_t nnz() const { return tile_sum(sample_nnz_); }
  std::uint64_t sum_row_max() const { return tile_sum(sample_max_); }
  std::uint64_t nonempty_rows() const {
    std::vector<std::uint64_t> ne(sample_nnz_.size());
    for (std::size_t k = 0; k < ne.size(); ++k) ne[k] = sample_nnz_[k] ? 1 : 0;
    return tile_sum(ne);
  }

  /// Sum over logical rows of f(row_max) for a per-row cost function of the max bucket.
  template <class F>
  std::uint64_t sum_over_rows(F f) const {
    std::vector<std::uint64_t> per(samples_.size());
    for (std::size_t k = 0; k < per.size(); ++k) per[k] = f(sample_max_[k], sample_nnz_[k]);
    return tile_sum(per);
  }

 private:
  template <class T>
  std::uint64_t tile_sum(const std::vector<T>& per_sample) const {
    if (n_rows_ == 0) return 0;
    const std::size_t s = per_sample.size(), full = n_rows_ / s, rem = n_rows_ % s;
    std::uint64_t total = 0;
    for (std::size_t k = 0; k < s; ++k) total += static_cast<std::uint64_t>(per_sample[k]) * (full + (k < rem ? 1 : 0));
    return total;
  }

  void prepare() {
    sample_max_.clear();
    sample_nnz_.clear();
    for (const auto& s : samples_) {
      sample_max_.push_back(s.empty() ? 0 : *std::max_element(s.begin(), s.end()));
      sample_nnz_.push_back(std::accumulate(s.begin(), s.end(), std::uint64_t{0}));
    }
  }

  std::size_t n_rows_ = 0;
  std::uint32_t n_banks_ = 1;
  std::vector<std::vector<std::uint32_t>> samples_;
  std::vector<std::uint32_t> sample_max_;
  std::vector<std::uint64_t> sample_nnz_;
};

// ---- bank access traces -----------------------------------------------------------------

struct BankAccess {
  Cycles cycle;
  std::uint32_t unit;
  std::uint32_t bank;
};

/// Stall cycles: for every (cycle, bank) addressed by k > 1 distinct units, k - 1.
inline std::uint64_t check_bank_conflicts(std::span<const BankAccess> trace) {
  std::map<std::pair<Cycles, std::uint32_t>, std::vector<std::uint32_t>> users;
  for (const auto& a : trace) users[{a.cycle, a.bank}].push_back(a.unit);
  std::uint64_t conflicts = 0;
  for (auto& [key, units] : users) {
    std::sort(units.begin(), units.end());
    const auto distinct = static_cast<std::uint64_t>(std::unique(units.begin(), units.end()) - units.begin());
    conflicts += distinct - 1;
  }
  return conflicts;
}

// ---- dense phases -------------------------------------------------------------------------

/// Output-stationary: each DPU owns one output element for ceil(K/L) cycles.
inline Cycles sim_dense_matmul(std::size_t m, std::size_t k, std::size_t n, const ArchConfig& arch) {
  return ceil_div(Cycles(m) * n, arch.n_dpus) * ceil_div(k, arch.mults_per_dpu);
}

/// Only selected token rows are addressed; pruned rows cost nothing.
inline Cycles sim_token_gated_matmul(const TokenIndexMask& mask, std::size_t k, std::size_t n,
                                     const ArchConfig& arch) {
  return sim_dense_matmul(mask.popcount(), k, n, arch);
}

/// Completion time of each output row when a dense matmul runs standalone.
inline std::vector<Cycles> dense_row_costs(std::size_t m, std::size_t k, std::size_t n, const ArchConfig& arch) {
  std::vector<Cycles> cost(m);
  const Cycles per = ceil_div(k, arch.mults_per_dpu);
  Cycles prev = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const Cycles done = ceil_div(Cycles(i + 1) * n, arch.n_dpus) * per;
    cost[i] = done - prev;
    prev = done;
  }
  return cost;
}

// ---- SDDMM --------------------------------------------------------------------------------

struct SddmmResult {
  Cycles cycles = 0;
  std::vector<std::uint64_t> per_dpu_work;  // output elements computed by each DPU
  std::uint64_t bank_conflicts = 0;
  std::vector<BankAccess> trace;
};

inline void check_layout(std::uint32_t banks, const ArchConfig& arch) {
  if (banks != arch.n_dpus)
    throw ParameterError("hash has " + std::to_string(banks) + " buckets but the core has " +
                         std::to_string(arch.n_dpus) + " units");
}

/// Column j's K^T data lives in bank hash(j) and output (i, j) is computed by DPU hash(j).
inline SddmmResult sim_sddmm(const SparseLoad& load, std::size_t k, const ArchConfig& arch) {
  arch.validate();
  check_layout(load.banks(), arch);
  SddmmResult r;
  r.per_dpu_work = load.bank_totals();
  const Cycles per = ceil_div(k, arch.mults_per_dpu);
  if (arch.sddmm_schedule == SddmmSchedule::decoupled)
    r.cycles = *std::max_element(r.per_dpu_work.begin(), r.per_dpu_work.end()) * per;
  else
    r.cycles = load.sum_row_max() * per;
  return r;
}

/// Mask-level entry point; records the per-cycle bank trace when `with_trace`.
inline SddmmResult sim_sddmm(const BitMatrix& mask, std::size_t k, const ArchConfig& arch,
                             bool with_trace = false) {
  if (arch.hash.n_buckets != arch.n_dpus) throw ParameterError("sim_sddmm: hash buckets != n_dpus");
  const HashFunction h = arch.hash.bound_to(mask.cols);
  SddmmResult r = sim_sddmm(SparseLoad::from_mask(mask, h), k, arch);
  if (!with_trace) return r;
  const Cycles per = ceil_div(k, arch.mults_per_dpu);
  std::vector<Cycles> next(arch.n_dpus, 0);
  Cycles row_start = 0;
  for (std::size_t i = 0; i < mask.rows; ++i) {
    if (arch.sddmm_schedule == SddmmSchedule::row_serial) std::fill(next.begin(), next.end(), row_start);
    for (std::size_t j = 0; j < mask.cols; ++j) {
      if (!mask.get(i, j)) continue;
      const std::uint32_t dpu = hash_apply(h, j);   // computation assignment
      const std::uint32_t bank = hash_apply(h, j);  // weight mapping of column j
      for (Cycles t = 0; t < per; ++t) r.trace.push_back({next[dpu] + t, dpu, bank});
      next[dpu] += per;
    }
    row_start = *std::max_element(next.begin(), next.end());
  }
  r.bank_conflicts = check_bank_conflicts(r.trace);
  return r;
}

/// Naive baseline: the n-th nonzero of a row goes to DPU n mod D while K^T columns stay
/// interleaved (column j in bank j mod banks). Every conflict adds one stall cycle.
inline SddmmResult sim_sddmm_round_robin(const BitMatrix& mask, std::size_t k, const ArchConfig& arch) {
  arch.validate();
  SddmmResult r;
  r.per_dpu_work.assign(arch.n_dpus, 0);
  const Cycles per = ceil_div(k, arch.mults_per_dpu);
  Cycles clock = 0;
  for (std::size_t i = 0; i < mask.rows; ++i) {
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < mask.cols; ++j)
      if (mask.get(i, j)) cols.push_back(j);
    for (std::size_t w = 0; w < cols.size(); w += arch.n_dpus) {
      const std::size_t end = std::min(cols.size(), w + arch.n_dpus);
      for (std::size_t n = w; n < end; ++n) {
        const auto dpu = static_cast<std::uint32_t>(n - w);
        const auto bank = static_cast<std::uint32_t>(cols[n] % arch.n_banks);
        for (Cycles t = 0; t < per; ++t) r.trace.push_back({clock + t, dpu, bank});
        ++r.per_dpu_work[dpu];
      }
      clock += per;
    }
  }
  r.bank_conflicts = check_bank_conflicts(r.trace);
  r.cycles = clock + r.bank_conflicts;
  return r;
}

// ---- SpMM ---------------------------------------------------------------------------------

struct SpmmResult {
  Cycles cycles = 0;
  std::vector<Cycles> row_completion;  // cumulative, relative to phase start
  std::uint64_t bank_conflicts = 0;
  std::vector<BankAccess> trace;
};

/// Row cost = max bank count * ceil(d/W) FMA cycles + log2(S) reduction-bus stages.
/// Rows with no elements are skipped.
inline Cycles spmm_row_cycles(std::uint64_t row_max, std::uint64_t row_nnz, std::size_t d_cols,
                              const ArchConfig& arch) {
  if (row_nnz == 0) return 0;
  return row_max * ceil_div(d_cols, arch.lanes_per_simd) + arch.reduction_cycles();
}

/// Rows of several heads interleaved row-major (row i of every head, then row i + 1).
inline SpmmResult sim_spmm(std::span<const SparseLoad> heads, std::size_t d_cols, const ArchConfig& arch) {
  arch.validate();
  SpmmResult r;
  if (heads.empty()) return r;
  const std::size_t rows = heads.front().rows();
  for (const auto& h : heads) {
    check_layout(h.banks(), arch);
    if (h.rows() != rows) throw ShapeError("sim_spmm: heads disagree on row count");
  }
  r.row_completion.resize(rows);
  Cycles t = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    for (const auto& h : heads) t += spmm_row_cycles(h.row_max(i), h.row_nnz(i), d_cols, arch);
    r.row_completion[i] = t;
  }
  r.cycles = t;
  return r;
}

inline SpmmResult sim_spmm(const SparseLoad& load, std::size_t d_cols, const ArchConfig& arch) {
  return sim_spmm(std::span<const SparseLoad>(&load, 1), d_cols, arch);
}

/// Encoded-matrix entry point with a per-cycle bank trace: SIMD v reads c(i,j) and
/// V row j from its own bank v = hash(j).
inline SpmmResult sim_spmm(const HashEncodedMatrix& p, std::size_t d_cols, const ArchConfig& arch,
                           bool with_trace = false) {
  arch.validate();
  const HashFunction expect = arch.hash.bound_to(p.cols);
  if (p.hash.kind != expect.kind || p.hash.n_buckets != expect.n_buckets ||
      (p.hash.kind == HashKind::multiplicative &&
       (p.hash.k_odd != expect.k_odd || p.hash.effective_word_bits() != expect.effective_word_bits())))
    throw ParameterError("sim_spmm: encoded layout does not match the core's hash");
  SpmmResult r = sim_spmm(SparseLoad::from_encoded(p), d_cols, arch);
  if (!with_trace) return r;
  const Cycles chunks = ceil_div(d_cols, arch.lanes_per_simd);
  std::vector<std::vector<const HashEncodedMatrix::Entry*>> per_row(p.rows);
  for (const auto& bank : p.banks)
    for (const auto& e : bank) per_row[e.row].push_back(&e);
  Cycles row_start = 0;
  for (std::size_t i = 0; i < p.rows; ++i) {
    std::vector<Cycles> next(arch.n_simds, row_start);
    for (const auto* e : per_row[i]) {
      const std::uint32_t simd = hash_apply(expect, e->col);
      const std::uint32_t bank = hash_apply(p.hash, e->col);
      for (Cycles c = 0; c < chunks; ++c) r.trace.push_back({next[simd] + c, simd, bank});
      next[simd] += chunks;
    }
    row_start = r.row_completion[i];
  }
  r.bank_conflicts = check_bank_conflicts(r.trace);
  return r;
}

// ---- producer/consumer overlap -----------------------------------------------------------

/// Consumer row i may start once producer row i is done and consumer row i-1 finished.
/// `producer_done` is cumulative; `consumer_cost` is per row. Returns the finish time.
inline Cycles pipelined_finish(std::span<const Cycles> producer_done, std::span<const Cycles> consumer_cost,
                               Cycles consumer_ready = 0) {
  if (producer_done.size() != consumer_cost.size())
    throw ShapeError("pipelined_finish: producer and consumer row counts differ");
  Cycles f = consumer_ready;
  for (std::size_t i = 0; i < consumer_cost.size(); ++i) f = std::max(f, producer_done[i]) + consumer_cost[i];
  return std::max(f, producer_done.empty() ? Cycles{0} : producer_done.back());
}

/// SpMM on the VPU streaming rows into the following DPU projection (rows x d_in x d_out).
inline Cycles sim_pipelined(const SpmmResult& spmm, std::size_t d_in, std::size_t d_out, const ArchConfig& arch) {
  const auto cost = dense_row_costs(spmm.row_completion.size(), d_in, d_out, arch);
  return pipelined_finish(spmm.row_completion, cost);
}

// ---- vector ops ---------------------------------------------------------------------------

/// sweeps * ceil(elements / (S * W)) plus, per row-reduction pass, one bus issue per row
/// and the log2(S)-stage bus drain.
inline Cycles sim_vector_op(std::uint64_t elements, std::uint64_t rows, unsigned sweeps, unsigned reductions,
                            const ArchConfig& arch) {
  if (elements == 0) return 0;
  const Cycles lanes = Cycles(arch.n_simds) * arch.lanes_per_simd;
  return sweeps * ceil_div(elements, lanes) + reductions * (rows + arch.reduction_cycles());
}

/// Softmax over the hash-encoded layout: SIMD v only sees bank v, so a row's sweep
/// takes ceil(max bank count / W) cycles.
inline Cycles sim_sparse_softmax(std::span<const SparseLoad> heads, const ArchConfig& arch) {
  Cycles c = 0;
  for (const auto& h : heads) {
    check_layout(h.banks(), arch);
    const std::uint64_t sweep = h.sum_over_rows(
        [&](std::uint64_t mx, std::uint64_t) { return ceil_div(mx, arch.lanes_per_simd); });
    const std::uint64_t rows = h.nonempty_rows();
    if (rows == 0) continue;
    c += 3 * sweep + 2 * (rows + arch.reduction_cycles());
  }
  return c;
}

}  // namespace disc
