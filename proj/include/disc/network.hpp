#pragma once

// Seeded toy diffusion transformer: patch embedding, blocks of
// self-attention / cross-attention / FFN with pre-layernorm residuals, linear unpatchify.

#include <cmath>
#include <cstdint>
#include <vector>

#include "disc/ctr.hpp"
#include "disc/matrix.hpp"
#include "disc/model.hpp"
#include "disc/numerics.hpp"
#include "disc/random.hpp"

namespace disc {

struct BlockWeights {
  AttentionWeights self_attn;
  AttentionWeights cross_attn;
  FfnWeights ffn;
};

/// Tokens are p x p patches in row-major grid order; features ordered (c, dy, dx).
inline Matrix patchify(const Latent& z, std::size_t p) {
  PatchConfig{p}.check(z);
  const std::size_t gw = z.width / p, gh = z.height / p;
  Matrix out(gh * gw, z.channels * p * p);
  for (std::size_t ty = 0; ty < gh; ++ty)
    for (std::size_t tx = 0; tx < gw; ++tx) {
      auto row = out.row(ty * gw + tx);
      std::size_t f = 0;
      for (std::size_t c = 0; c < z.channels; ++c)
        for (std::size_t dy = 0; dy < p; ++dy)
          for (std::size_t dx = 0; dx < p; ++dx) row[f++] = z.at(c, ty * p + dy, tx * p + dx);
    }
  return out;
}

inline Latent unpatchify(const Matrix& tokens, std::size_t channels, std::size_t height, std::size_t width,
                         std::size_t p) {
  Latent z(channels, height, width);
  PatchConfig{p}.check(z);
  const std::size_t gw = width / p;
  if (tokens.rows() != (height / p) * gw || tokens.cols() != channels * p * p)
    throw ShapeError("unpatchify: token matrix " + shape_str(tokens) + " does not match latent");
  for (std::size_t t = 0; t < tokens.rows(); ++t) {
    const std::size_t ty = t / gw, tx = t % gw;
    std::size_t f = 0;
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t dy = 0; dy < p; ++dy)
        for (std::size_t dx = 0; dx < p; ++dx) z.at(c, ty * p + dy, tx * p + dx) = tokens(t, f++);
  }
  return z;
}

/// Sinusoidal step embedding, one row broadcast to every token.
inline std::vector<double> step_embedding(std::size_t step, std::size_t dim) {
  std::vector<double> e(dim);
  const double t = double(step);
  for (std::size_t i = 0; i < dim; ++i) {
    const double freq = std::pow(10000.0, -double(i / 2 * 2) / double(dim));
    e[i] = 0.1 * ((i % 2 == 0) ? std::sin(t * freq) : std::cos(t * freq));
  }
  return e;
}

struct ToyNetwork {
  ModelConfig model;
  std::size_t latent_side = 0;
  std::size_t n_tokens = 0;
  Matrix embed;      // (C p^2) x d
  Matrix pos;        // N x d
  Matrix final_proj; // d x (C p^2)
  Matrix text;       // T x d
  std::vector<BlockWeights> blocks;
  std::vector<TextKV> text_kv;  // per block, projected once

  static ToyNetwork create(const ModelConfig& model, std::size_t resolution, std::uint64_t seed) {
    model.validate();
    ToyNetwork net;
    net.model = model;
    net.latent_side = model.latent_side(resolution);
    net.n_tokens = model.tokens(resolution);
    Rng rng = derived_rng(seed, 0x6e6574);
    const std::size_t d = model.hidden_dim, f = model.ffn_dim();
    const std::size_t pin = model.latent_channels * model.patch_size * model.patch_size;
    auto w = [&](std::size_t in, std::size_t out) { return random_normal(in, out, rng, 1.0 / std::sqrt(double(in))); };
    net.embed = w(pin, d);
    net.pos = random_normal(net.n_tokens, d, rng, 0.1);
    net.final_proj = w(d, pin);
    if (model.has_cross_attention) net.text = random_normal(model.text_tokens, d, rng, 1.0);
    for (std::size_t b = 0; b < model.n_blocks; ++b) {
      BlockWeights bw;
      bw.self_attn = {w(d, d), w(d, d), w(d, d), w(d, d)};
      if (model.has_cross_attention) bw.cross_attn = {w(d, d), w(d, d), w(d, d), w(d, d)};
      bw.ffn.w1 = w(d, f);
      bw.ffn.b1.assign(f, 0.0);
      bw.ffn.w2 = w(f, d);
      bw.ffn.b2.assign(d, 0.0);
      net.blocks.push_back(std::move(bw));
    }
    if (model.has_cross_attention)
      for (const auto& bw : net.blocks) net.text_kv.push_back(project_text(net.text, bw.cross_attn));
    return net;
  }

  AttentionConfig self_config() const {
    return {model.heads, model.head_dim(), n_tokens, n_tokens};
  }
  AttentionConfig cross_config() const {
    return {model.heads, model.head_dim(), n_tokens, model.text_tokens};
  }

  Latent initial_latent(std::uint64_t seed) const {
    Rng rng = derived_rng(seed, 0x7a30);
    std::normal_distribution<double> g(0.0, 1.0);
    Latent z(model.latent_channels, latent_side, latent_side);
    for (double& x : z.data) x = g(rng);
    return z;
  }

  Matrix embed_tokens(const Latent& z, std::size_t step) const {
    Matrix x = add(matmul(patchify(z, model.patch_size), embed), pos);
    return add_row_vector(x, step_embedding(step, model.hidden_dim));
  }

  Latent head(const Matrix& x) const {
    return unpatchify(matmul(layernorm(x), final_proj), model.latent_channels, latent_side, latent_side,
                      model.patch_size);
  }

  /// Plain dense forward pass, no masks or caches.
  Latent forward_dense(const Latent& z, std::size_t step) const {
    Matrix x = embed_tokens(z, step);
    const auto scfg = self_config();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& bw = blocks[b];
      Matrix h = layernorm(x);
      Matrix sa = matmul(dense_attention(matmul(h, bw.self_attn.wq), matmul(h, bw.self_attn.wk),
                                         matmul(h, bw.self_attn.wv), scfg),
                         bw.self_attn.wo);
      x = add(x, sa);
      if (model.has_cross_attention) {
        h = layernorm(x);
        Matrix ca = matmul(dense_attention(matmul(h, bw.cross_attn.wq), text_kv[b].k, text_kv[b].v, cross_config()),
                           bw.cross_attn.wo);
        x = add(x, ca);
      }
      h = layernorm(x);
      x = add(x, ffn_forward(h, bw.ffn.w1, bw.ffn.b1, bw.ffn.w2, bw.ffn.b2));
    }
    return head(x);
  }
};

}  // namespace disc
