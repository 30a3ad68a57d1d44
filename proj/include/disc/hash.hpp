#pragma once

// Column-to-bank hash functions and the bank-ordered K/V row permutation.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "disc/errors.hpp"

namespace disc {

enum class HashKind { modular, multiplicative, range };

inline std::string_view to_string(HashKind k) {
  switch (k) {
    case HashKind::modular: return "modular";
    case HashKind::multiplicative: return "multiplicative";
    case HashKind::range: return "range";
  }
  return "?";
}

inline HashKind parse_hash_kind(std::string_view s) {
  if (s == "modular") return HashKind::modular;
  if (s == "multiplicative") return HashKind::multiplicative;
  if (s == "range") return HashKind::range;
  throw ParameterError("unknown hash kind '" + std::string(s) + "'");
}

inline constexpr std::uint64_t kDefaultOddMultiplier = 2053;

inline unsigned ceil_log2(std::uint64_t n) {
  return n <= 1 ? 0u : static_cast<unsigned>(std::bit_width(n - 1));
}

/// Maps a column index to one of n_buckets banks.
///
/// multiplicative: top b = log2(n_buckets) bits of (j * k_odd) mod 2^w. A word_bits of 0
/// means "the index width", ceil(log2(n_cols)), which makes the product a bijection on
/// [0, 2^w) and gives every bucket the same number of columns.
/// range: top b bits of j over log2(n_cols) bits, i.e. j * n_buckets / n_cols.
struct HashFunction {
  HashKind kind = HashKind::multiplicative;
  std::uint32_t n_buckets = 64;
  std::uint64_t k_odd = kDefaultOddMultiplier;
  std::uint32_t word_bits = 16;
  std::uint64_t n_cols = 0;

  static HashFunction modular(std::uint32_t n) { return {HashKind::modular, n, kDefaultOddMultiplier, 16, 0}; }
  static HashFunction multiplicative(std::uint32_t n, std::uint64_t k_odd = kDefaultOddMultiplier,
                                     std::uint32_t word_bits = 16, std::uint64_t n_cols = 0) {
    return {HashKind::multiplicative, n, k_odd, word_bits, n_cols};
  }
  static HashFunction range(std::uint32_t n, std::uint64_t n_cols) {
    return {HashKind::range, n, kDefaultOddMultiplier, 16, n_cols};
  }

  unsigned bucket_bits() const { return static_cast<unsigned>(std::countr_zero(n_buckets)); }

  /// Same function with the column count bound (needed by range and auto-width multiplicative).
  HashFunction bound_to(std::uint64_t cols) const {
    HashFunction h = *this;
    h.n_cols = cols;
    return h;
  }

  unsigned effective_word_bits() const {
    if (word_bits != 0) return word_bits;
    return std::max(bucket_bits(), ceil_log2(n_cols));
  }

  void validate() const {
    if (n_buckets == 0 || !std::has_single_bit(n_buckets))
      throw ParameterError("hash n_buckets must be a power of two, got " + std::to_string(n_buckets));
    if (kind == HashKind::multiplicative) {
      if (k_odd % 2 == 0) throw ParameterError("multiplicative hash k_odd must be odd");
      if (word_bits == 0 && n_cols == 0)
        throw ParameterError("auto word width needs the column count bound");
      if (effective_word_bits() < bucket_bits() || effective_word_bits() > 63)
        throw ParameterError("multiplicative hash word_bits must be in [log2 N, 63]");
    }
    if (kind == HashKind::range) {
      if (n_cols == 0 || !std::has_single_bit(n_cols))
        throw ParameterError("range hash n_cols must be a power of two, got " + std::to_string(n_cols));
    }
  }

  friend bool operator==(const HashFunction&, const HashFunction&) = default;
};

inline std::uint32_t hash_apply(const HashFunction& h, std::uint64_t j) {
  switch (h.kind) {
    case HashKind::modular:
      return static_cast<std::uint32_t>(j & (h.n_buckets - 1));
    case HashKind::multiplicative: {
      const unsigned w = h.effective_word_bits();
      const std::uint64_t mask = (w >= 64) ? ~0ULL : ((1ULL << w) - 1);
      const std::uint64_t prod = (j * h.k_odd) & mask;
      return static_cast<std::uint32_t>(prod >> (w - h.bucket_bits()));
    }
    case HashKind::range:
      if (j >= h.n_cols)
        throw ParameterError("range hash: column " + std::to_string(j) + " >= n_cols " +
                             std::to_string(h.n_cols));
      return static_cast<std::uint32_t>((j * h.n_buckets) / h.n_cols);
  }
  return 0;
}

/// counts[v] = number of set entries j with hash(j) == v.
inline std::vector<std::uint32_t> bucket_counts(std::span<const std::uint8_t> mask_row, const HashFunction& h) {
  std::vector<std::uint32_t> counts(h.n_buckets, 0);
  for (std::size_t j = 0; j < mask_row.size(); ++j)
    if (mask_row[j]) ++counts[hash_apply(h, j)];
  return counts;
}

inline double population_stddev(std::span<const std::uint32_t> counts) {
  if (counts.empty()) return 0.0;
  const double n = static_cast<double>(counts.size());
  double mean = 0.0;
  for (auto c : counts) mean += c;
  mean /= n;
  double var = 0.0;
  for (auto c : counts) var += (c - mean) * (c - mean);
  return std::sqrt(var / n);
}

/// Columns ordered by (hash(j), j). Generating K rows in this order and transposing puts
/// column j of K^T at sequential addresses inside bank hash(j).
inline std::vector<std::size_t> build_bank_permutation(const HashFunction& h, std::size_t n_cols) {
  std::vector<std::size_t> perm(n_cols);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::uint32_t> bank(n_cols);
  for (std::size_t j = 0; j < n_cols; ++j) bank[j] = hash_apply(h, j);
  std::stable_sort(perm.begin(), perm.end(),
                   [&](std::size_t a, std::size_t b) { return bank[a] < bank[b]; });
  return perm;
}

}  // namespace disc
