#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace disc;

namespace {

Latent random_latent(std::size_t c, std::size_t h, std::size_t w, Rng& rng) {
  std::normal_distribution<double> g;
  Latent z(c, h, w);
  for (double& x : z.data) x = g(rng);
  return z;
}

struct Layer {
  AttentionWeights attn;
  AttentionWeights cross;
  FfnWeights ffn;
  Matrix text;
};

Layer random_layer(std::size_t d, Rng& rng) {
  auto w = [&](std::size_t a, std::size_t b) { return random_normal(a, b, rng, 1.0 / std::sqrt(double(a))); };
  Layer l;
  l.attn = {w(d, d), w(d, d), w(d, d), w(d, d)};
  l.cross = {w(d, d), w(d, d), w(d, d), w(d, d)};
  l.ffn = {w(d, 2 * d), std::vector<double>(2 * d, 0.1), w(2 * d, d), std::vector<double>(d, -0.1)};
  l.text = random_normal(5, d, rng);
  return l;
}

TokenCache warm_cache(const Matrix& x, const Layer& l, const AttentionConfig& cfg) {
  TokenCache cache;
  const auto all = TokenIndexMask::all(x.rows());
  selective_self_attention(x, l.attn, all, cache, cfg);
  AttentionConfig ccfg = cfg;
  ccfg.n_key_tokens = l.text.rows();
  selective_cross_attention(x, project_text(l.text, l.cross), l.cross, all, cache, ccfg);
  selective_ffn(x, l.ffn, all, cache);
  cache.valid = true;
  return cache;
}

}  // namespace

TEST(TokenMask, MatchesBruteForcePatchScan) {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const std::size_t p = 1 + t % 3;
    Latent a = random_latent(3, 6 * p, 4 * p, rng), b = random_latent(3, 6 * p, 4 * p, rng);
    const double tau = 0.5 + 0.1 * (t % 20);
    auto got = build_token_mask(latent_diff(a, b), tau, PatchConfig{p});
    auto ref = oracle::token_mask(a, b, tau, p);
    ASSERT_EQ(got.size(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_EQ(int(got[i]), ref[i]) << "token " << i;
  }
}

TEST(TokenMask, SingleChannelTriggersWholePatch) {
  Latent z(2, 4, 4), prev(2, 4, 4);
  z.at(1, 3, 2) = 0.5;  // patch (1, 1) in a 2x2 grid
  auto m = build_token_mask(latent_diff(z, prev), 0.5, PatchConfig{2});
  EXPECT_EQ(m, (TokenIndexMask{0, 0, 0, 1}));
  EXPECT_EQ(build_token_mask(latent_diff(z, prev), 0.51, PatchConfig{2}).popcount(), 0u);
}

TEST(TokenMask, ZeroThresholdSelectsEverything) {
  Latent z(1, 4, 4), prev(1, 4, 4);
  EXPECT_TRUE(build_token_mask(latent_diff(z, prev), 0.0, PatchConfig{2}).all_set());
}

TEST(TokenMask, BadPatchThrows) {
  Latent z(1, 5, 4);
  EXPECT_THROW(build_token_mask(z, 0.1, PatchConfig{2}), ShapeError);
  EXPECT_THROW(latent_diff(Latent(1, 4, 4), Latent(2, 4, 4)), ShapeError);
}

TEST(MergeWithCache, InterleavesComputedRows) {
  Matrix cache{{1, 1}, {2, 2}, {3, 3}, {4, 4}};
  Matrix computed{{10, 10}, {30, 30}};
  Matrix merged = merge_with_cache(computed, cache, TokenIndexMask{1, 0, 1, 0});
  EXPECT_EQ(merged, (Matrix{{10, 10}, {2, 2}, {30, 30}, {4, 4}}));
  EXPECT_THROW(merge_with_cache(computed, cache, TokenIndexMask{1, 1, 1, 0}), ShapeError);
}

TEST(MergeWithCache, AllSelectedIgnoresCache) {
  Matrix computed{{1, 2}};
  EXPECT_EQ(merge_with_cache(computed, Matrix{}, TokenIndexMask{1}), computed);
}

TEST(SelectiveLayers, ComputedRowsAreBitExact) {
  Rng rng(21);
  const std::size_t n = 16, d = 8;
  AttentionConfig cfg{2, 4, n, n};
  AttentionConfig ccfg{2, 4, n, 5};
  for (int t = 0; t < 20; ++t) {
    Layer l = random_layer(d, rng);
    Matrix x0 = random_normal(n, d, rng), x1 = random_normal(n, d, rng);
    TokenCache cache = warm_cache(x0, l, cfg);
    TokenCache before = cache;
    TokenIndexMask mask(n);
    std::bernoulli_distribution coin(0.5);
    for (auto& b : mask.bits) b = coin(rng);

    const TextKV kv = project_text(l.text, l.cross);
    Matrix sa = selective_self_attention(x1, l.attn, mask, cache, cfg);
    Matrix ca = selective_cross_attention(x1, kv, l.cross, mask, cache, ccfg);
    Matrix ff = selective_ffn(x1, l.ffn, mask, cache);

    Matrix sa_ref = matmul(dense_attention(matmul(x1, l.attn.wq), matmul(x1, l.attn.wk), matmul(x1, l.attn.wv), cfg), l.attn.wo);
    Matrix ca_ref = matmul(dense_attention(matmul(x1, l.cross.wq), kv.k, kv.v, ccfg), l.cross.wo);
    Matrix ff_ref = ffn_forward(x1, l.ffn.w1, l.ffn.b1, l.ffn.w2, l.ffn.b2);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) {
        if (mask[i]) {
          EXPECT_EQ(sa(i, c), sa_ref(i, c));
          EXPECT_EQ(ca(i, c), ca_ref(i, c));
          EXPECT_EQ(ff(i, c), ff_ref(i, c));
        } else {
          EXPECT_EQ(sa(i, c), before.self_attn_out(i, c));
          EXPECT_EQ(ca(i, c), before.cross_attn_out(i, c));
          EXPECT_EQ(ff(i, c), before.ffn_out(i, c));
        }
      }
    EXPECT_EQ(cache.self_attn_out, sa);
    EXPECT_EQ(cache.ffn_out, ff);
  }
}

TEST(SelectiveLayers, EmptyMaskReturnsCache) {
  Rng rng(8);
  Layer l = random_layer(4, rng);
  AttentionConfig cfg{1, 4, 6, 6};
  Matrix x = random_normal(6, 4, rng);
  TokenCache cache = warm_cache(x, l, cfg);
  Matrix prev = cache.self_attn_out;
  EXPECT_EQ(selective_self_attention(random_normal(6, 4, rng), l.attn, TokenIndexMask(6), cache, cfg), prev);
}

TEST(SelectiveLayers, PartialMaskNeedsValidCache) {
  Rng rng(8);
  Layer l = random_layer(4, rng);
  AttentionConfig cfg{1, 4, 4, 4};
  TokenCache cold;
  Matrix x = random_normal(4, 4, rng);
  EXPECT_THROW(selective_self_attention(x, l.attn, TokenIndexMask{1, 0, 1, 1}, cold, cfg), PreconditionError);
  EXPECT_THROW(selective_ffn(x, l.ffn, TokenIndexMask{1, 0}, cold), ShapeError);
}

TEST(Patchify, RoundTrip) {
  Rng rng(6);
  Latent z = random_latent(4, 8, 8, rng);
  Matrix t = patchify(z, 2);
  EXPECT_EQ(t.rows(), 16u);
  EXPECT_EQ(t.cols(), 16u);
  EXPECT_EQ(t(5, 0), z.at(0, 2, 2));  // token 5 = grid (1, 1)
  Latent back = unpatchify(t, 4, 8, 8, 2);
  EXPECT_EQ(back.data, z.data);
}
