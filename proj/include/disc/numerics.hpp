#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "disc/errors.hpp"
#include "disc/matrix.hpp"

namespace disc {

struct AttentionConfig {
  std::size_t heads = 1;
  std::size_t head_dim = 1;
  std::size_t n_query_tokens = 1;
  std::size_t n_key_tokens = 1;

  std::size_t hidden_dim() const noexcept { return heads * head_dim; }
  double scale() const { return 1.0 / std::sqrt(static_cast<double>(head_dim)); }

  void validate() const {
    if (heads == 0 || head_dim == 0 || n_query_tokens == 0 || n_key_tokens == 0)
      throw ParameterError("AttentionConfig: all counts must be >= 1");
  }
};

/// Sequential-over-k accumulation, row-major output.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: " + shape_str(a) + " x " + shape_str(b));
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto crow = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

inline double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

/// In-place max-subtracted softmax over one row.
inline void softmax_inplace(std::span<double> row) {
  if (row.empty()) return;
  const double mx = *std::max_element(row.begin(), row.end());
  double sum = 0.0;
  for (double& x : row) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : row) x /= sum;
}

inline Matrix softmax_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) softmax_inplace(out.row(i));
  return out;
}

namespace detail {

inline void check_attention_shapes(const Matrix& q, const Matrix& k, const Matrix& v,
                                   const AttentionConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.hidden_dim();
  if (q.cols() != d || k.cols() != d || v.cols() != d)
    throw ShapeError("attention: q/k/v must have heads*head_dim = " + std::to_string(d) +
                     " columns (got " + shape_str(q) + ", " + shape_str(k) + ", " +
                     shape_str(v) + ")");
  if (q.rows() != cfg.n_query_tokens)
    throw ShapeError("attention: q has " + std::to_string(q.rows()) + " rows, config says " +
                     std::to_string(cfg.n_query_tokens));
  if (k.rows() != cfg.n_key_tokens || v.rows() != cfg.n_key_tokens)
    throw ShapeError("attention: k/v rows must equal n_key_tokens");
}

}  // namespace detail

/// Scaled dot-product attention, heads split along columns and concatenated back.
/// When `probs` is non-null it receives one n_query x n_key probability matrix per head.
inline Matrix dense_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                              const AttentionConfig& cfg, std::vector<Matrix>* probs = nullptr) {
  detail::check_attention_shapes(q, k, v, cfg);
  const std::size_t hd = cfg.head_dim;
  const double scale = cfg.scale();
  Matrix out(q.rows(), cfg.hidden_dim());
  if (probs) probs->assign(cfg.heads, Matrix(q.rows(), k.rows()));
  std::vector<double> p(k.rows());
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const std::size_t off = h * hd;
    for (std::size_t i = 0; i < q.rows(); ++i) {
      auto qi = q.row(i).subspan(off, hd);
      for (std::size_t j = 0; j < k.rows(); ++j) p[j] = dot(qi, k.row(j).subspan(off, hd)) * scale;
      softmax_inplace(p);
      if (probs) std::copy(p.begin(), p.end(), (*probs)[h].row(i).begin());
      auto oi = out.row(i).subspan(off, hd);
      for (std::size_t j = 0; j < k.rows(); ++j) {
        auto vj = v.row(j).subspan(off, hd);
        for (std::size_t c = 0; c < hd; ++c) oi[c] += p[j] * vj[c];
      }
    }
  }
  return out;
}

/// Exact erf-based GELU.
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline Matrix gelu(const Matrix& m) {
  Matrix out = m;
  for (double& x : out.data()) x = gelu(x);
  return out;
}

/// Per-row normalization without affine parameters.
inline Matrix layernorm(const Matrix& m, double eps = 1e-6) {
  Matrix out = m;
  const double n = static_cast<double>(m.cols());
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    double mean = 0.0;
    for (double x : r) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : r) var += (x - mean) * (x - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (double& x : r) x = (x - mean) * inv;
  }
  return out;
}

/// gelu(x w1 + b1) w2 + b2. Empty bias spans mean no bias.
inline Matrix ffn_forward(const Matrix& x, const Matrix& w1, std::span<const double> b1,
                          const Matrix& w2, std::span<const double> b2) {
  if (x.cols() != w1.rows() || w1.cols() != w2.rows())
    throw ShapeError("ffn_forward: " + shape_str(x) + " / " + shape_str(w1) + " / " +
                     shape_str(w2));
  Matrix h = matmul(x, w1);
  if (!b1.empty()) h = add_row_vector(h, b1);
  Matrix y = matmul(gelu(h), w2);
  if (!b2.empty()) y = add_row_vector(y, b2);
  return y;
}

inline Matrix ffn_forward(const Matrix& x, const Matrix& w1, const Matrix& w2) {
  return ffn_forward(x, w1, {}, w2, {});
}

}  // namespace disc
