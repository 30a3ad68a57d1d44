#pragma once

// Cached Token Reuse: latent-difference token selection and row-selective layers.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "disc/errors.hpp"
#include "disc/matrix.hpp"
#include "disc/numerics.hpp"

namespace disc {

/// channels x height x width, index (c * height + y) * width + x.
struct Latent {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Latent() = default;
  Latent(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
  bool same_shape(const Latent& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  friend bool operator==(const Latent&, const Latent&) = default;
};

struct PatchConfig {
  std::size_t patch_size = 2;

  std::size_t token_count(const Latent& z) const {
    check(z);
    return (z.height / patch_size) * (z.width / patch_size);
  }
  void check(const Latent& z) const {
    if (patch_size == 0) throw ParameterError("patch_size must be >= 1");
    if (z.height % patch_size != 0 || z.width % patch_size != 0)
      throw ShapeError("latent " + std::to_string(z.height) + "x" + std::to_string(z.width) +
                       " is not divisible into " + std::to_string(patch_size) + "x" +
                       std::to_string(patch_size) + " patches");
  }
};

/// 1 = compute the token, 0 = reuse its cached output.
struct TokenIndexMask {
  std::vector<std::uint8_t> bits;

  TokenIndexMask() = default;
  explicit TokenIndexMask(std::size_t n, bool value = false) : bits(n, value ? 1 : 0) {}
  TokenIndexMask(std::initializer_list<int> b) {
    for (int x : b) bits.push_back(x ? 1 : 0);
  }

  static TokenIndexMask all(std::size_t n) { return TokenIndexMask(n, true); }

  std::size_t size() const noexcept { return bits.size(); }
  bool operator[](std::size_t i) const { return bits[i] != 0; }
  std::size_t popcount() const {
    std::size_t n = 0;
    for (auto b : bits) n += b ? 1 : 0;
    return n;
  }
  bool all_set() const { return popcount() == size(); }
  double computed_ratio() const { return size() ? double(popcount()) / double(size()) : 0.0; }
  double pruning_ratio() const { return 1.0 - computed_ratio(); }

  /// Ascending indices of selected tokens.
  std::vector<std::size_t> selected() const {
    std::vector<std::size_t> idx;
    idx.reserve(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i)
      if (bits[i]) idx.push_back(i);
    return idx;
  }
  friend bool operator==(const TokenIndexMask&, const TokenIndexMask&) = default;
};

/// Post-layer outputs from the previous step, one row per token.
struct TokenCache {
  Matrix self_attn_out;
  Matrix cross_attn_out;
  Matrix ffn_out;
  bool valid = false;
};

inline Latent latent_diff(const Latent& z_t, const Latent& z_prev) {
  if (!z_t.same_shape(z_prev)) throw ShapeError("latent_diff: shape mismatch");
  Latent d(z_t.channels, z_t.height, z_t.width);
  for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] = std::abs(z_t.data[i] - z_prev.data[i]);
  return d;
}

/// Threshold (diff >= tau) then OR-reduce over every channel of each p x p patch.
/// Tokens are the patch grid flattened row-major.
inline TokenIndexMask build_token_mask(const Latent& diff, double tau_ctr, const PatchConfig& cfg) {
  cfg.check(diff);
  const std::size_t p = cfg.patch_size;
  const std::size_t gw = diff.width / p;
  TokenIndexMask mask(cfg.token_count(diff));
  for (std::size_t c = 0; c < diff.channels; ++c)
    for (std::size_t y = 0; y < diff.height; ++y)
      for (std::size_t x = 0; x < diff.width; ++x)
        if (diff.at(c, y, x) >= tau_ctr) mask.bits[(y / p) * gw + x / p] = 1;
  return mask;
}

/// Row i is the next unconsumed computed row if mask[i], else cache_rows[i].
inline Matrix merge_with_cache(const Matrix& computed, const Matrix& cache_rows,
                               const TokenIndexMask& mask) {
  const std::size_t sel = mask.popcount();
  if (computed.rows() != sel)
    throw ShapeError("merge_with_cache: " + std::to_string(computed.rows()) +
                     " computed rows for popcount " + std::to_string(sel));
  if (sel == mask.size()) return computed;
  if (cache_rows.rows() != mask.size())
    throw ShapeError("merge_with_cache: cache has " + std::to_string(cache_rows.rows()) +
                     " rows, mask has " + std::to_string(mask.size()));
  if (sel > 0 && computed.cols() != cache_rows.cols())
    throw ShapeError("merge_with_cache: column mismatch");
  Matrix out = cache_rows;
  std::size_t next = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    auto src = computed.row(next++);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

struct AttentionWeights {
  Matrix wq, wk, wv, wo;  // hidden x hidden each
};

struct FfnWeights {
  Matrix w1;  // hidden x (ffn_mult * hidden)
  std::vector<double> b1;
  Matrix w2;  // (ffn_mult * hidden) x hidden
  std::vector<double> b2;
};

/// Attention over the selected query rows. `token_rows` gives each q row's token index.
struct DenseAttentionKernel {
  Matrix operator()(const Matrix& q, const Matrix& k, const Matrix& v, const AttentionConfig& cfg,
                    std::span<const std::size_t> /*token_rows*/) const {
    return dense_attention(q, k, v, cfg);
  }
};

namespace detail {

inline void check_ctr_precondition(const TokenIndexMask& mask, const Matrix& x, const TokenCache& cache) {
  if (mask.size() != x.rows())
    throw ShapeError("token mask length " + std::to_string(mask.size()) + " != " +
                     std::to_string(x.rows()) + " tokens");
  if (!cache.valid && !mask.all_set())
    throw PreconditionError("partial token mask requires a valid cache (first step must compute all tokens)");
}

}  // namespace detail

/// Q for selected rows only; K and V for every token. Updates cache.self_attn_out.
template <class Kernel = DenseAttentionKernel>
Matrix selective_self_attention(const Matrix& x, const AttentionWeights& w, const TokenIndexMask& mask,
                                TokenCache& cache, const AttentionConfig& cfg,
                                const Kernel& kernel = Kernel{}) {
  detail::check_ctr_precondition(mask, x, cache);
  const auto idx = mask.selected();
  Matrix k = matmul(x, w.wk);
  Matrix v = matmul(x, w.wv);
  Matrix computed(0, w.wo.cols());
  if (!idx.empty()) {
    Matrix q = matmul(select_rows(x, idx), w.wq);
    AttentionConfig sub = cfg;
    sub.n_query_tokens = idx.size();
    sub.n_key_tokens = x.rows();
    computed = matmul(kernel(q, k, v, sub, idx), w.wo);
  }
  Matrix merged = merge_with_cache(computed, cache.self_attn_out, mask);
  cache.self_attn_out = merged;
  return merged;
}

/// Keys/values come from the text embedding, already projected once per run.
struct TextKV {
  Matrix k;
  Matrix v;
};

inline TextKV project_text(const Matrix& text, const AttentionWeights& w) {
  return {matmul(text, w.wk), matmul(text, w.wv)};
}

inline Matrix selective_cross_attention(const Matrix& x, const TextKV& text_kv,
                                        const AttentionWeights& w, const TokenIndexMask& mask,
                                        TokenCache& cache, const AttentionConfig& cfg) {
  detail::check_ctr_precondition(mask, x, cache);
  const auto idx = mask.selected();
  Matrix computed(0, w.wo.cols());
  if (!idx.empty()) {
    Matrix q = matmul(select_rows(x, idx), w.wq);
    AttentionConfig sub = cfg;
    sub.n_query_tokens = idx.size();
    sub.n_key_tokens = text_kv.k.rows();
    computed = matmul(dense_attention(q, text_kv.k, text_kv.v, sub), w.wo);
  }
  Matrix merged = merge_with_cache(computed, cache.cross_attn_out, mask);
  cache.cross_attn_out = merged;
  return merged;
}

inline Matrix selective_ffn(const Matrix& x, const FfnWeights& w, const TokenIndexMask& mask,
                            TokenCache& cache) {
  detail::check_ctr_precondition(mask, x, cache);
  const auto idx = mask.selected();
  Matrix computed(0, w.w2.cols());
  if (!idx.empty()) computed = ffn_forward(select_rows(x, idx), w.w1, w.b1, w.w2, w.b2);
  Matrix merged = merge_with_cache(computed, cache.ffn_out, mask);
  cache.ffn_out = merged;
  return merged;
}

}  // namespace disc
