#pragma once

// Reference implementations written independently of the library code paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "disc/disc.hpp"

namespace oracle {

using disc::Matrix;

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0.0L;
      for (std::size_t k = 0; k < a.cols(); ++k) s += (long double)a(i, k) * b(k, j);
      c(i, j) = double(s);
    }
  return c;
}

inline std::vector<double> softmax(const std::vector<double>& x) {
  double mx = -INFINITY;
  for (double v : x) mx = std::max(mx, v);
  std::vector<double> e(x.size());
  long double s = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i) s += e[i] = std::exp(x[i] - mx);
  for (double& v : e) v = double(v / s);
  return e;
}

/// Per-head softmax(q k^T * scale) v, restricted to allowed(h, i, j) when given.
template <class Allowed>
Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t heads, Allowed allowed) {
  const std::size_t hd = q.cols() / heads;
  const double scale = 1.0 / std::sqrt(double(hd));
  Matrix out(q.rows(), q.cols());
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < q.rows(); ++i) {
      std::vector<double> s;
      std::vector<std::size_t> cols;
      for (std::size_t j = 0; j < k.rows(); ++j) {
        if (!allowed(h, i, j)) continue;
        long double d = 0.0L;
        for (std::size_t c = 0; c < hd; ++c) d += (long double)q(i, h * hd + c) * k(j, h * hd + c);
        s.push_back(double(d) * scale);
        cols.push_back(j);
      }
      if (s.empty()) continue;
      auto p = softmax(s);
      for (std::size_t c = 0; c < hd; ++c) {
        long double acc = 0.0L;
        for (std::size_t t = 0; t < cols.size(); ++t) acc += (long double)p[t] * v(cols[t], h * hd + c);
        out(i, h * hd + c) = double(acc);
      }
    }
  return out;
}

inline Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t heads) {
  return attention(q, k, v, heads, [](std::size_t, std::size_t, std::size_t) { return true; });
}

/// Scans each patch cell by cell.
inline std::vector<int> token_mask(const disc::Latent& z_t, const disc::Latent& z_prev, double tau, std::size_t p) {
  const std::size_t gh = z_t.height / p, gw = z_t.width / p;
  std::vector<int> out(gh * gw, 0);
  for (std::size_t ty = 0; ty < gh; ++ty)
    for (std::size_t tx = 0; tx < gw; ++tx) {
      bool hit = false;
      for (std::size_t c = 0; c < z_t.channels && !hit; ++c)
        for (std::size_t dy = 0; dy < p && !hit; ++dy)
          for (std::size_t dx = 0; dx < p && !hit; ++dx) {
            const std::size_t y = ty * p + dy, x = tx * p + dx;
            if (std::fabs(z_t.at(c, y, x) - z_prev.at(c, y, x)) >= tau) hit = true;
          }
      out[ty * gw + tx] = hit ? 1 : 0;
    }
  return out;
}

inline double stddev(const std::vector<double>& x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= double(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  return std::sqrt(var / double(x.size()));
}

/// Per-row stddev of per-bucket counts, where bucket(j) is supplied directly.
template <class Bucket>
double mean_row_stddev(const disc::BitMatrix& m, std::size_t n_buckets, Bucket bucket) {
  double total = 0.0;
  for (std::size_t i = 0; i < m.rows; ++i) {
    std::vector<double> counts(n_buckets, 0.0);
    for (std::size_t j = 0; j < m.cols; ++j)
      if (m.get(i, j)) counts[bucket(j)] += 1.0;
    total += stddev(counts);
  }
  return total / double(m.rows);
}

/// Multiplicative hash computed with explicit modular arithmetic.
inline std::uint32_t mult_hash(std::uint64_t j, std::uint64_t k, unsigned w, unsigned b) {
  const std::uint64_t mod = std::uint64_t(1) << w;
  const std::uint64_t prod = (j % mod) * (k % mod) % mod;
  return static_cast<std::uint32_t>(prod / (std::uint64_t(1) << (w - b)));
}

/// Cycle-by-cycle pipeline: every tick the consumer, when idle, takes the next row if
/// the producer has emitted it. Zero-cost rows complete within the tick.
inline std::uint64_t pipeline_ticks(const std::vector<std::uint64_t>& producer_done,
                                    const std::vector<std::uint64_t>& consumer_cost) {
  std::uint64_t t = 0, busy_until = 0;
  std::size_t next = 0;
  while (next < consumer_cost.size()) {
    if (busy_until <= t && producer_done[next] <= t) {
      busy_until = t + consumer_cost[next];
      ++next;
    } else {
      ++t;
    }
  }
  const std::uint64_t last = producer_done.empty() ? 0 : producer_done.back();
  return std::max(busy_until, last);
}

/// Bernoulli(density) bits drawn cell by cell.
inline disc::BitMatrix random_mask(std::size_t rows, std::size_t cols, double density, disc::Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  disc::BitMatrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      if (u(rng) < density) m.set(i, j);
  return m;
}

}  // namespace oracle
