#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace disc;

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    std::uniform_int_distribution<std::size_t> dim(1, 17);
    Matrix a = random_normal(dim(rng), dim(rng), rng);
    Matrix b = random_normal(a.cols(), dim(rng), rng);
    EXPECT_LT(norm_rel_diff(matmul(a, b), oracle::matmul(a, b)), 1e-13);
  }
}

TEST(Matmul, HandExample) {
  Matrix a{{1, 2}, {3, 4}};
  Matrix b{{5, 6}, {7, 8}};
  EXPECT_EQ(matmul(a, b), (Matrix{{19, 22}, {43, 50}}));
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
}

TEST(Softmax, MatchesNaiveAndSumsToOne) {
  Rng rng(3);
  Matrix m = random_normal(9, 13, rng, 5.0);
  Matrix s = softmax_rows(m);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    std::vector<double> row(m.row(i).begin(), m.row(i).end());
    auto ref = oracle::softmax(row);
    double sum = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      EXPECT_NEAR(s(i, j), ref[j], 1e-15);
      sum += s(i, j);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Softmax, LargeInputsStayFinite) {
  Matrix m{{1000.0, 1001.0, 999.0}};
  Matrix s = softmax_rows(m);
  EXPECT_TRUE(s.all_finite());
  EXPECT_GT(s(0, 1), s(0, 0));
}

TEST(DenseAttention, MatchesComposedOracle) {
  Rng rng(11);
  for (std::size_t heads : {1, 2, 4}) {
    AttentionConfig cfg{heads, 8, 12, 10};
    Matrix q = random_normal(cfg.n_query_tokens, cfg.hidden_dim(), rng);
    Matrix k = random_normal(cfg.n_key_tokens, cfg.hidden_dim(), rng);
    Matrix v = random_normal(cfg.n_key_tokens, cfg.hidden_dim(), rng);
    EXPECT_LT(norm_rel_diff(dense_attention(q, k, v, cfg), oracle::attention(q, k, v, heads)), 1e-13);
  }
}

TEST(DenseAttention, ProbabilitiesAreRowStochastic) {
  Rng rng(5);
  AttentionConfig cfg{2, 4, 6, 6};
  Matrix x = random_normal(6, 8, rng);
  std::vector<Matrix> probs;
  dense_attention(x, x, x, cfg, &probs);
  ASSERT_EQ(probs.size(), 2u);
  for (const auto& p : probs)
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double s = 0.0;
      for (double v : p.row(i)) s += v;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(DenseAttention, ShapeErrors) {
  AttentionConfig cfg{2, 4, 3, 5};
  EXPECT_THROW(dense_attention(Matrix(3, 8), Matrix(4, 8), Matrix(5, 8), cfg), ShapeError);
  EXPECT_THROW(dense_attention(Matrix(3, 7), Matrix(5, 8), Matrix(5, 8), cfg), ShapeError);
}

TEST(DenseAttention, QueryRowsAreIndependent) {
  Rng rng(9);
  AttentionConfig cfg{2, 4, 8, 8};
  Matrix q = random_normal(8, 8, rng), k = random_normal(8, 8, rng), v = random_normal(8, 8, rng);
  Matrix full = dense_attention(q, k, v, cfg);
  std::vector<std::size_t> idx{1, 4, 7};
  AttentionConfig sub = cfg;
  sub.n_query_tokens = idx.size();
  Matrix part = dense_attention(select_rows(q, idx), k, v, sub);
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(part(r, c), full(idx[r], c));
}

TEST(Layernorm, ZeroMeanUnitVariance) {
  Rng rng(2);
  Matrix m = random_normal(5, 32, rng, 3.0);
  Matrix n = layernorm(m, 0.0);
  for (std::size_t i = 0; i < n.rows(); ++i) {
    std::vector<double> row(n.row(i).begin(), n.row(i).end());
    double mean = 0.0;
    for (double x : row) mean += x;
    EXPECT_NEAR(mean / 32.0, 0.0, 1e-12);
    EXPECT_NEAR(oracle::stddev(row), 1.0, 1e-12);
  }
}

TEST(Gelu, KnownValues) {
  EXPECT_DOUBLE_EQ(gelu(0.0), 0.0);
  EXPECT_NEAR(gelu(1.0), 0.8413447460685429, 1e-15);
  EXPECT_NEAR(gelu(-1.0), -0.15865525393145707, 1e-15);
}

TEST(Ffn, MatchesComposition) {
  Rng rng(4);
  Matrix x = random_normal(5, 6, rng), w1 = random_normal(6, 12, rng), w2 = random_normal(12, 6, rng);
  std::vector<double> b1(12, 0.5), b2(6, -0.25);
  Matrix h = oracle::matmul(x, w1);
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t j = 0; j < h.cols(); ++j) h(i, j) = gelu(h(i, j) + 0.5);
  Matrix ref = oracle::matmul(h, w2);
  for (double& v : ref.data()) v -= 0.25;
  EXPECT_LT(norm_rel_diff(ffn_forward(x, w1, b1, w2, b2), ref), 1e-13);
}
