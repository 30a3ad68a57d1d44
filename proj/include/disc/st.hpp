#pragma once

// Softmax thresholding with sparsity-mask reuse: mask generation on dense steps,
// SDDMM -> sparse softmax -> SpMM over the hash-encoded layout on sparse steps.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "disc/errors.hpp"
#include "disc/hash.hpp"
#include "disc/matrix.hpp"
#include "disc/numerics.hpp"

namespace disc {

/// Row-major boolean matrix.
struct BitMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> bits;

  BitMatrix() = default;
  BitMatrix(std::size_t r, std::size_t c, bool value = false)
      : rows(r), cols(c), bits(r * c, value ? 1 : 0) {}

  bool get(std::size_t i, std::size_t j) const { return bits[i * cols + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v = true) { bits[i * cols + j] = v ? 1 : 0; }
  std::span<const std::uint8_t> row(std::size_t i) const { return {bits.data() + i * cols, cols}; }
  std::span<std::uint8_t> row(std::size_t i) { return {bits.data() + i * cols, cols}; }

  std::size_t nnz() const {
    std::size_t n = 0;
    for (auto b : bits) n += b ? 1 : 0;
    return n;
  }
  double density() const { return bits.empty() ? 0.0 : double(nnz()) / double(bits.size()); }
  double sparsity() const { return 1.0 - density(); }

  friend bool operator==(const BitMatrix&, const BitMatrix&) = default;
};

inline BitMatrix select_rows(const BitMatrix& m, std::span<const std::size_t> idx) {
  BitMatrix out(idx.size(), m.cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= m.rows) throw ShapeError("select_rows: mask row index out of range");
    auto src = m.row(idx[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

/// One boolean n_q x n_k matrix per head.
struct SparsityMask {
  std::vector<BitMatrix> heads;

  std::size_t nnz() const {
    std::size_t n = 0;
    for (const auto& h : heads) n += h.nnz();
    return n;
  }
  std::size_t cells() const {
    std::size_t n = 0;
    for (const auto& h : heads) n += h.bits.size();
    return n;
  }
  double density() const { return cells() ? double(nnz()) / double(cells()) : 0.0; }
  double sparsity() const { return 1.0 - density(); }
  friend bool operator==(const SparsityMask&, const SparsityMask&) = default;
};

/// Dense at steps s with s mod reuse_interval == 0, sparse otherwise.
struct StepSchedule {
  std::size_t total_steps = 20;
  std::size_t reuse_interval = 3;

  void validate() const {
    if (reuse_interval == 0) throw ParameterError("reuse_interval must be >= 1");
  }
  bool is_dense(std::size_t step) const { return step % reuse_interval == 0; }
};

/// bit(i,j) = p(i,j) >= tau. Each row keeps its first maximum even when below tau.
inline BitMatrix threshold_mask(const Matrix& p, double tau_st) {
  if (!(tau_st >= 0.0)) throw ParameterError("tau_st must be >= 0");
  BitMatrix m(p.rows(), p.cols());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    auto r = p.row(i);
    bool any = false;
    for (std::size_t j = 0; j < r.size(); ++j)
      if (r[j] >= tau_st) {
        m.set(i, j);
        any = true;
      }
    if (!any && !r.empty()) m.set(i, static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin()));
  }
  return m;
}

/// Sparse matrix whose bank index is hash(col). Banks are sorted by (row, col).
struct HashEncodedMatrix {
  struct Entry {
    std::uint32_t row;
    std::uint32_t col;
    double value;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  std::size_t rows = 0;
  std::size_t cols = 0;
  HashFunction hash;
  std::vector<std::vector<Entry>> banks;

  HashEncodedMatrix() = default;
  HashEncodedMatrix(std::size_t r, std::size_t c, const HashFunction& h)
      : rows(r), cols(c), hash(h.bound_to(c)), banks(h.n_buckets) {}

  std::size_t n_banks() const { return banks.size(); }
  std::size_t nnz() const {
    std::size_t n = 0;
    for (const auto& b : banks) n += b.size();
    return n;
  }

  /// Dense view with absent entries as zero.
  Matrix decode() const {
    Matrix m(rows, cols);
    for (const auto& b : banks)
      for (const auto& e : b) m(e.row, e.col) = e.value;
    return m;
  }

  BitMatrix support() const {
    BitMatrix s(rows, cols);
    for (const auto& b : banks)
      for (const auto& e : b) s.set(e.row, e.col);
    return s;
  }

  /// Throws ShapeError describing the first broken layout invariant.
  void validate() const {
    if (banks.size() != hash.n_buckets) throw ShapeError("hash-encoded: bank count != hash buckets");
    BitMatrix seen(rows, cols);
    for (std::size_t v = 0; v < banks.size(); ++v) {
      for (std::size_t k = 0; k < banks[v].size(); ++k) {
        const auto& e = banks[v][k];
        if (e.row >= rows || e.col >= cols) throw ShapeError("hash-encoded: index out of range");
        if (hash_apply(hash, e.col) != v)
          throw ShapeError("hash-encoded: column " + std::to_string(e.col) + " stored in bank " +
                           std::to_string(v));
        if (k > 0) {
          const auto& p = banks[v][k - 1];
          if (std::pair(p.row, p.col) >= std::pair(e.row, e.col))
            throw ShapeError("hash-encoded: bank " + std::to_string(v) + " not sorted by (row, col)");
        }
        if (seen.get(e.row, e.col)) throw ShapeError("hash-encoded: duplicate element");
        seen.set(e.row, e.col);
      }
    }
  }

  friend bool operator==(const HashEncodedMatrix&, const HashEncodedMatrix&) = default;
};

/// Computes scale * dot(q_i, kT_j) for every set mask bit; element (i, j) goes to bank hash(j).
inline HashEncodedMatrix sddmm(const Matrix& q, const Matrix& kT, const BitMatrix& mask,
                               const HashFunction& hash, double scale) {
  if (q.cols() != kT.rows()) throw ShapeError("sddmm: " + shape_str(q) + " x " + shape_str(kT));
  if (mask.rows != q.rows() || mask.cols != kT.cols())
    throw ShapeError("sddmm: mask shape " + std::to_string(mask.rows) + "x" +
                     std::to_string(mask.cols) + " vs output " + std::to_string(q.rows()) + "x" +
                     std::to_string(kT.cols()));
  const HashFunction h = hash.bound_to(kT.cols());
  h.validate();
  HashEncodedMatrix out(q.rows(), kT.cols(), h);
  std::vector<double> col(kT.rows());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    auto qi = q.row(i);
    for (std::size_t j = 0; j < kT.cols(); ++j) {
      if (!mask.get(i, j)) continue;
      double s = 0.0;
      for (std::size_t c = 0; c < kT.rows(); ++c) s += qi[c] * kT(c, j);
      out.banks[hash_apply(h, j)].push_back(
          {static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), s * scale});
    }
  }
  return out;
}

/// Softmax over the present entries of each row; layout is unchanged.
inline HashEncodedMatrix sparse_softmax(const HashEncodedMatrix& scores) {
  HashEncodedMatrix out = scores;
  const double lowest = -std::numeric_limits<double>::infinity();
  std::vector<double> row_max(scores.rows, lowest), row_sum(scores.rows, 0.0);
  for (const auto& b : out.banks)
    for (const auto& e : b) row_max[e.row] = std::max(row_max[e.row], e.value);
  for (auto& b : out.banks)
    for (auto& e : b) {
      e.value = std::exp(e.value - row_max[e.row]);
      row_sum[e.row] += e.value;
    }
  for (auto& b : out.banks)
    for (auto& e : b) e.value /= row_sum[e.row];
  return out;
}

/// Row-wise product: per-bank partial rows, then a cross-bank reduction.
inline Matrix spmm(const HashEncodedMatrix& p, const Matrix& v) {
  if (p.cols > v.rows())
    throw ShapeError("spmm: sparse operand has " + std::to_string(p.cols) + " columns but dense has " +
                     std::to_string(v.rows()) + " rows");
  const std::size_t d = v.cols();
  Matrix out(p.rows, d);
  Matrix partial(p.rows, d);
  for (const auto& bank : p.banks) {
    std::fill(partial.data().begin(), partial.data().end(), 0.0);
    for (const auto& e : bank) {
      if (e.col >= v.rows()) throw ShapeError("spmm: column index out of range");
      auto acc = partial.row(e.row);
      auto vj = v.row(e.col);
      for (std::size_t c = 0; c < d; ++c) acc[c] += e.value * vj[c];
    }
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += partial.data()[i];
  }
  return out;
}

// ---- canonical serialization ------------------------------------------------------------

/// Per bank: "bank,<id>,<count>" then one "row,col,value" line per element.
inline std::string to_canonical_text(const HashEncodedMatrix& m) {
  std::ostringstream os;
  os << "hashenc," << m.rows << ',' << m.cols << ',' << to_string(m.hash.kind) << ','
     << m.hash.n_buckets << ',' << m.hash.k_odd << ',' << m.hash.word_bits << '\n';
  os << std::setprecision(17);
  for (std::size_t v = 0; v < m.banks.size(); ++v) {
    os << "bank," << v << ',' << m.banks[v].size() << '\n';
    for (const auto& e : m.banks[v]) os << e.row << ',' << e.col << ',' << e.value << '\n';
  }
  return os.str();
}

inline HashEncodedMatrix parse_canonical_text(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  auto fields = [](const std::string& l) {
    std::vector<std::string> f;
    std::stringstream ss(l);
    std::string x;
    while (std::getline(ss, x, ',')) f.push_back(x);
    return f;
  };
  if (!std::getline(is, line)) throw ShapeError("hash-encoded text: empty input");
  auto head = fields(line);
  if (head.size() != 7 || head[0] != "hashenc") throw ShapeError("hash-encoded text: bad header");
  HashFunction h;
  h.kind = parse_hash_kind(head[3]);
  h.n_buckets = static_cast<std::uint32_t>(std::stoul(head[4]));
  h.k_odd = std::stoull(head[5]);
  h.word_bits = static_cast<std::uint32_t>(std::stoul(head[6]));
  HashEncodedMatrix m(std::stoull(head[1]), std::stoull(head[2]), h);
  for (std::size_t v = 0; v < m.banks.size(); ++v) {
    if (!std::getline(is, line)) throw ShapeError("hash-encoded text: missing bank header");
    auto bh = fields(line);
    if (bh.size() != 3 || bh[0] != "bank" || std::stoul(bh[1]) != v)
      throw ShapeError("hash-encoded text: bad bank header '" + line + "'");
    const std::size_t count = std::stoull(bh[2]);
    for (std::size_t k = 0; k < count; ++k) {
      if (!std::getline(is, line)) throw ShapeError("hash-encoded text: truncated bank");
      auto f = fields(line);
      if (f.size() != 3) throw ShapeError("hash-encoded text: bad element '" + line + "'");
      m.banks[v].push_back({static_cast<std::uint32_t>(std::stoul(f[0])),
                            static_cast<std::uint32_t>(std::stoul(f[1])), std::stod(f[2])});
    }
  }
  m.validate();
  return m;
}

/// Debug rendering: bank,row,col,value.
inline std::string to_csv(const HashEncodedMatrix& m) {
  std::ostringstream os;
  os << "bank,row,col,value\n" << std::setprecision(17);
  for (std::size_t v = 0; v < m.banks.size(); ++v)
    for (const auto& e : m.banks[v]) os << v << ',' << e.row << ',' << e.col << ',' << e.value << '\n';
  return os.str();
}

// ---- per-step driver --------------------------------------------------------------------

struct StConfig {
  double tau = 0.02;
  StepSchedule schedule;
  HashFunction hash = HashFunction::multiplicative(64, kDefaultOddMultiplier, 0);
};

/// Mask from the most recent dense step; single writer per (layer, step).
struct MaskCache {
  std::optional<SparsityMask> mask;
};

struct StStepResult {
  Matrix output;
  SparsityMask mask;
  bool dense = true;
};

/// One self-attention step under ST.
///
/// `q` holds the rows listed in `token_rows` (all n_key rows when CTR is off); those
/// index the full-size mask. Dense steps run full attention and refresh only the
/// listed mask rows; sparse steps run sddmm -> sparse_softmax -> spmm per head.
inline StStepResult st_attention_step(const Matrix& q, const Matrix& k, const Matrix& v,
                                      const AttentionConfig& cfg, const StConfig& st,
                                      std::size_t step, MaskCache& cache,
                                      std::span<const std::size_t> token_rows) {
  st.schedule.validate();
  detail::check_attention_shapes(q, k, v, cfg);
  if (token_rows.size() != q.rows()) throw ShapeError("st_attention_step: token_rows length != q rows");
  const std::size_t n = k.rows();
  StStepResult res;
  res.dense = st.schedule.is_dense(step);

  if (res.dense) {
    std::vector<Matrix> probs;
    res.output = dense_attention(q, k, v, cfg, &probs);
    SparsityMask m;
    if (cache.mask) {
      m = *cache.mask;
    } else {
      if (token_rows.size() != n)
        throw PreconditionError("first dense step must compute every query row");
      m.heads.assign(cfg.heads, BitMatrix(n, n));
    }
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      BitMatrix fresh = threshold_mask(probs[h], st.tau);
      for (std::size_t r = 0; r < token_rows.size(); ++r) {
        auto src = fresh.row(r);
        std::copy(src.begin(), src.end(), m.heads[h].row(token_rows[r]).begin());
      }
    }
    cache.mask = m;
    res.mask = std::move(m);
    return res;
  }

  if (!cache.mask) throw ScheduleError("sparse step " + std::to_string(step) + " has no cached mask");
  const SparsityMask& m = *cache.mask;
  if (m.heads.size() != cfg.heads) throw ShapeError("cached mask head count mismatch");
  res.output = Matrix(q.rows(), cfg.hidden_dim());
  const std::size_t hd = cfg.head_dim;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    Matrix qh = column_block(q, h * hd, hd);
    Matrix kT = transpose(column_block(k, h * hd, hd));
    Matrix vh = column_block(v, h * hd, hd);
    BitMatrix rows = select_rows(m.heads[h], token_rows);
    auto scores = sddmm(qh, kT, rows, st.hash, cfg.scale());
    set_column_block(res.output, h * hd, spmm(sparse_softmax(scores), vh));
  }
  res.mask = m;
  return res;
}

/// Kernel adaptor so selective_self_attention can run the ST path.
struct StAttentionKernel {
  const StConfig* st;
  std::size_t step;
  MaskCache* cache;
  mutable std::optional<StStepResult> last;

  Matrix operator()(const Matrix& q, const Matrix& k, const Matrix& v, const AttentionConfig& cfg,
                    std::span<const std::size_t> token_rows) const {
    last = st_attention_step(q, k, v, cfg, *st, step, *cache, token_rows);
    return last->output;
  }
};

}  // namespace disc
