#pragma once

// Matmul FLOPs accounting (2*m*n*k per matmul) and the analytic CTR/ST reduction model.

#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "disc/model.hpp"

namespace disc {

enum class LayerGroup { self_attn, cross_attn, ffn, other };

inline std::string_view to_string(LayerGroup g) {
  switch (g) {
    case LayerGroup::self_attn: return "self_attn";
    case LayerGroup::cross_attn: return "cross_attn";
    case LayerGroup::ffn: return "ffn";
    case LayerGroup::other: return "other";
  }
  return "?";
}

/// Which reduction applies to a matmul.
enum class Scaling {
  none,         ///< computed for every token regardless of masks (K/V, embeddings)
  query,        ///< scales with the computed-token ratio
  query_and_st  ///< QK^T and PV of self-attention: also sparsified on sparse steps
};

struct FlopsEntry {
  std::string name;
  LayerGroup group;
  Scaling scaling;
  double dense = 0.0;    // all blocks, one denoising step
  double reduced = 0.0;  // after CTR/ST (equals dense in a breakdown)
};

struct FlopsReport {
  std::string model;
  std::size_t resolution = 0;
  std::size_t tokens = 0;
  std::vector<FlopsEntry> entries;
  double ctr_removed = 0.0;
  double st_removed = 0.0;

  double total_dense() const {
    double t = 0.0;
    for (const auto& e : entries) t += e.dense;
    return t;
  }
  double total_reduced() const {
    double t = 0.0;
    for (const auto& e : entries) t += e.reduced;
    return t;
  }
  double group_dense(LayerGroup g) const {
    double t = 0.0;
    for (const auto& e : entries)
      if (e.group == g) t += e.dense;
    return t;
  }
  double share(LayerGroup g) const { return group_dense(g) / total_dense(); }

  double reduction() const { return (ctr_removed + st_removed) / total_dense(); }
  double ctr_reduction() const { return ctr_removed / total_dense(); }
  double st_reduction() const { return st_removed / total_dense(); }

  /// Fractions of self-attention FLOPs removed, split by source.
  double self_attn_ctr_reduction() const { return self_ctr_removed / group_dense(LayerGroup::self_attn); }
  double self_attn_st_reduction() const { return self_st_removed / group_dense(LayerGroup::self_attn); }

  double self_ctr_removed = 0.0;
  double self_st_removed = 0.0;
};

/// Breakdown at an explicit token count (resolution is only recorded).
inline FlopsReport flops_breakdown_tokens(const ModelConfig& model, std::size_t n_tokens, std::size_t resolution = 0) {
  model.validate();
  const double n = double(n_tokens);
  const double d = double(model.hidden_dim);
  const double f = double(model.ffn_dim());
  const double t = double(model.text_tokens);
  const double pin = double(model.latent_channels * model.patch_size * model.patch_size);
  const double blocks = double(model.n_blocks);
  auto mm = [](double m, double k, double nn) { return 2.0 * m * k * nn; };

  FlopsReport r;
  r.model = model.name;
  r.resolution = resolution;
  r.tokens = static_cast<std::size_t>(n);
  auto add = [&](std::string name, LayerGroup g, Scaling s, double per_block) {
    r.entries.push_back({std::move(name), g, s, per_block, per_block});
  };
  add("self_attn.q_proj", LayerGroup::self_attn, Scaling::query, blocks * mm(n, d, d));
  add("self_attn.k_proj", LayerGroup::self_attn, Scaling::none, blocks * mm(n, d, d));
  add("self_attn.v_proj", LayerGroup::self_attn, Scaling::none, blocks * mm(n, d, d));
  add("self_attn.qk", LayerGroup::self_attn, Scaling::query_and_st, blocks * mm(n, d, n));
  add("self_attn.pv", LayerGroup::self_attn, Scaling::query_and_st, blocks * mm(n, n, d));
  add("self_attn.out_proj", LayerGroup::self_attn, Scaling::query, blocks * mm(n, d, d));
  if (model.has_cross_attention) {
    add("cross_attn.q_proj", LayerGroup::cross_attn, Scaling::query, blocks * mm(n, d, d));
    add("cross_attn.kv_proj", LayerGroup::cross_attn, Scaling::none, blocks * 2.0 * mm(t, d, d));
    add("cross_attn.qk", LayerGroup::cross_attn, Scaling::query, blocks * mm(n, d, t));
    add("cross_attn.pv", LayerGroup::cross_attn, Scaling::query, blocks * mm(n, t, d));
    add("cross_attn.out_proj", LayerGroup::cross_attn, Scaling::query, blocks * mm(n, d, d));
  }
  add("ffn.fc1", LayerGroup::ffn, Scaling::query, blocks * mm(n, d, f));
  add("ffn.fc2", LayerGroup::ffn, Scaling::query, blocks * mm(n, f, d));
  add("other.patch_embed", LayerGroup::other, Scaling::none, mm(n, pin, d));
  add("other.final_proj", LayerGroup::other, Scaling::none, mm(n, d, pin));
  return r;
}

inline FlopsReport flops_breakdown(const ModelConfig& model, std::size_t resolution) {
  model.validate();
  return flops_breakdown_tokens(model, model.tokens(resolution), resolution);
}

/// Per-step average under CTR (query-side work scaled by 1 - pruning) followed by ST
/// (self-attention QK^T and PV further scaled by 1 - sparsity on the (R-1)/R sparse steps).
/// CTR is credited first; ST is credited with what it removes from the remainder.
inline FlopsReport flops_reduction(const WorkloadConfig& w, double pruning_ratio, double sparsity) {
  if (pruning_ratio < 0.0 || pruning_ratio > 1.0 || sparsity < 0.0 || sparsity > 1.0)
    throw ParameterError("flops_reduction: pruning_ratio and sparsity must lie in [0, 1]");
  if (w.reuse_interval == 0) throw ParameterError("flops_reduction: reuse_interval must be >= 1");
  FlopsReport r = flops_breakdown(w.model, w.resolution);
  const double p = w.mode == Mode::baseline ? 0.0 : pruning_ratio;
  const double sparse_frac = double(w.reuse_interval - 1) / double(w.reuse_interval);
  const double st = w.mode == Mode::all ? sparsity * sparse_frac : 0.0;
  for (auto& e : r.entries) {
    double ctr_cut = 0.0, st_cut = 0.0;
    if (e.scaling != Scaling::none) ctr_cut = e.dense * p;
    if (e.scaling == Scaling::query_and_st) st_cut = e.dense * (1.0 - p) * st;
    e.reduced = e.dense - ctr_cut - st_cut;
    r.ctr_removed += ctr_cut;
    r.st_removed += st_cut;
    if (e.group == LayerGroup::self_attn) {
      r.self_ctr_removed += ctr_cut;
      r.self_st_removed += st_cut;
    }
  }
  return r;
}

inline std::string flops_csv(const FlopsReport& r) {
  std::ostringstream os;
  os << "model,resolution,tokens,entry,group,dense_flops,reduced_flops,share\n";
  const double total = r.total_dense();
  os << std::setprecision(17);
  for (const auto& e : r.entries)
    os << r.model << ',' << r.resolution << ',' << r.tokens << ',' << e.name << ',' << to_string(e.group) << ','
       << e.dense << ',' << e.reduced << ',' << e.dense / total << '\n';
  return os.str();
}

inline std::string flops_summary_csv_header() {
  return "model,resolution,tokens,self_attn_share,cross_attn_share,ffn_share,other_share,"
         "reduction_total,reduction_ctr,reduction_st,self_attn_reduction_ctr,self_attn_reduction_st\n";
}

inline std::string flops_summary_csv_row(const FlopsReport& r) {
  std::ostringstream os;
  os << std::setprecision(17) << r.model << ',' << r.resolution << ',' << r.tokens << ','
     << r.share(LayerGroup::self_attn) << ',' << r.share(LayerGroup::cross_attn) << ',' << r.share(LayerGroup::ffn)
     << ',' << r.share(LayerGroup::other) << ',' << r.reduction() << ',' << r.ctr_reduction() << ','
     << r.st_reduction() << ',' << r.self_attn_ctr_reduction() << ',' << r.self_attn_st_reduction() << '\n';
  return os.str();
}

}  // namespace disc
