#pragma once

// Per-DPU nonzero balance of a hash function over sparsity masks, plus the synthetic
// mask generators used when real attention masks are unavailable.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "disc/errors.hpp"
#include "disc/hash.hpp"
#include "disc/random.hpp"
#include "disc/st.hpp"

namespace disc {

struct LoadProfile {
  struct Bucket {
    double sparsity = 0.0;  // lower edge of the bucket
    double mean_stddev = 0.0;
    std::size_t samples = 0;
  };
  struct MaskSample {
    double sparsity = 0.0;
    double mean_stddev = 0.0;
  };

  HashKind hash_kind = HashKind::multiplicative;
  double bucket_width = 0.05;
  std::vector<Bucket> per_sparsity_bucket;
  std::vector<MaskSample> per_mask;
  std::size_t samples = 0;

  /// Per-mask values whose sparsity lies in [lo, hi].
  std::vector<double> values_in(double lo, double hi) const {
    std::vector<double> out;
    for (const auto& s : per_mask)
      if (s.sparsity >= lo && s.sparsity <= hi) out.push_back(s.mean_stddev);
    return out;
  }
};

/// Mean over rows of the population stddev of per-bucket nonzero counts.
inline double mean_row_stddev(const BitMatrix& mask, const HashFunction& hash) {
  if (mask.rows == 0) return 0.0;
  const HashFunction h = hash.bound_to(mask.cols);
  h.validate();
  double sum = 0.0;
  for (std::size_t i = 0; i < mask.rows; ++i) sum += population_stddev(bucket_counts(mask.row(i), h));
  return sum / double(mask.rows);
}

inline LoadProfile load_balance_profile(std::span<const BitMatrix> masks, const HashFunction& hash,
                                        double bucket_width = 0.05) {
  if (masks.empty()) throw ParameterError("load_balance_profile: empty mask list");
  if (!(bucket_width > 0.0)) throw ParameterError("bucket_width must be > 0");
  LoadProfile prof;
  prof.hash_kind = hash.kind;
  prof.bucket_width = bucket_width;
  std::map<long, std::pair<double, std::size_t>> acc;
  const long last = static_cast<long>(std::floor(1.0 / bucket_width - 1e-9));
  for (const auto& m : masks) {
    const double s = m.sparsity();
    const double v = mean_row_stddev(m, hash);
    prof.per_mask.push_back({s, v});
    long b = std::min(last, static_cast<long>(std::floor(s / bucket_width + 1e-9)));
    acc[b].first += v;
    acc[b].second += 1;
  }
  for (const auto& [b, sv] : acc)
    prof.per_sparsity_bucket.push_back({double(b) * bucket_width, sv.first / double(sv.second), sv.second});
  prof.samples = masks.size();
  return prof;
}

inline LoadProfile load_balance_profile(std::span<const SparsityMask> masks, const HashFunction& hash,
                                        double bucket_width = 0.05) {
  std::vector<BitMatrix> flat;
  for (const auto& m : masks) flat.insert(flat.end(), m.heads.begin(), m.heads.end());
  return load_balance_profile(std::span<const BitMatrix>(flat), hash, bucket_width);
}

inline std::string load_profile_csv_header() { return "hash_kind,sparsity_bucket,mean_stddev,samples\n"; }

inline std::string to_csv_rows(const LoadProfile& p) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  for (const auto& b : p.per_sparsity_bucket) {
    os << to_string(p.hash_kind) << ',' << std::setprecision(3) << b.sparsity << ','
       << std::setprecision(9) << b.mean_stddev << ',' << b.samples << '\n';
  }
  return os.str();
}

// ---- synthetic masks -------------------------------------------------------------------

/// Independent Bernoulli(density) bits.
inline BitMatrix uniform_random_mask(std::size_t rows, std::size_t cols, double density, Rng& rng) {
  std::bernoulli_distribution coin(std::clamp(density, 0.0, 1.0));
  BitMatrix m(rows, cols);
  for (auto& b : m.bits) b = coin(rng) ? 1 : 0;
  return m;
}

/// Attention-like rows: every row is a set of disc-shaped clusters on the
/// sqrt(cols) x sqrt(cols) token grid (flattened row-major, as tokens are).
///
/// The minority value (ones when density <= 0.5, zeros otherwise) is painted until the
/// target is reached. Mean disc radius is max_radius * (4 d (1 - d))^2 for the minority
/// fraction d, so rows near either extreme degrade to scattered single cells.
struct ClusteredMaskGenerator {
  double max_radius = 8.0;

  BitMatrix generate(std::size_t rows, std::size_t cols, double density, Rng& rng) const {
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(double(cols))));
    if (side * side != cols) throw ParameterError("clustered masks need a square token grid, got " + std::to_string(cols));
    density = std::clamp(density, 0.0, 1.0);
    const bool invert = density > 0.5;
    const double minority = invert ? 1.0 - density : density;
    const double radius = max_radius * std::pow(4.0 * minority * (1.0 - minority), 2.0);
    const auto target = static_cast<std::size_t>(std::ceil(minority * double(cols)));

    BitMatrix m(rows, cols, invert);
    std::uniform_int_distribution<std::size_t> pos(0, side - 1);
    std::exponential_distribution<double> rad(radius > 0.0 ? 1.0 / radius : 1.0);
    for (std::size_t i = 0; i < rows; ++i) {
      auto row = m.row(i);
      std::size_t painted = 0;
      auto paint = [&](std::size_t y, std::size_t x) {
        auto& cell = row[y * side + x];
        const std::uint8_t want = invert ? 0 : 1;
        if (cell != want) {
          cell = want;
          ++painted;
        }
      };
      while (painted < target) {
        const std::size_t cy = pos(rng), cx = pos(rng);
        const double r = radius >= 0.5 ? rad(rng) : 0.0;
        if (r < 0.5) {
          paint(cy, cx);
          continue;
        }
        const auto ri = static_cast<std::ptrdiff_t>(std::floor(r));
        for (std::ptrdiff_t dy = -ri; dy <= ri && painted < target; ++dy)
          for (std::ptrdiff_t dx = -ri; dx <= ri && painted < target; ++dx) {
            if (double(dy * dy + dx * dx) > r * r) continue;
            const auto y = static_cast<std::ptrdiff_t>(cy) + dy, x = static_cast<std::ptrdiff_t>(cx) + dx;
            if (y < 0 || x < 0 || y >= std::ptrdiff_t(side) || x >= std::ptrdiff_t(side)) continue;
            paint(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
          }
      }
    }
    return m;
  }
};

struct ConfidenceInterval {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap CI of the mean.
inline ConfidenceInterval bootstrap_mean_ci(std::span<const double> values, Rng& rng,
                                            std::size_t resamples = 2000, double level = 0.95) {
  if (values.empty()) throw ParameterError("bootstrap_mean_ci: no values");
  ConfidenceInterval ci;
  for (double v : values) ci.mean += v;
  ci.mean /= double(values.size());
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> means(resamples);
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) s += values[pick(rng)];
    m = s / double(values.size());
  }
  std::sort(means.begin(), means.end());
  const double alpha = (1.0 - level) / 2.0;
  auto at = [&](double q) {
    auto idx = static_cast<std::size_t>(std::floor(q * double(resamples - 1)));
    return means[std::min(idx, resamples - 1)];
  };
  ci.lo = at(alpha);
  ci.hi = at(1.0 - alpha);
  return ci;
}

}  // namespace disc
