#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "newsrec/graph.hpp"
#include "newsrec/params.hpp"
#include "newsrec/tensor.hpp"

namespace newsrec {

struct SueConfig {
  size_t dim = 512;       // news vector width
  size_t attn_dim = 200;
  size_t gcn_layers = 4;
  bool gcn = true;           // off under the no-GCN ablation
  bool hierarchical = true;  // off: flat attention over all news nodes
};

struct SueParams {
  std::vector<Tensor> gcn_w;     // layers x [d x d]
  Tensor cluster_w;              // [d x d]
  Tensor cluster_b;              // [1 x d]
  Tensor intra_q, intra_k;       // [d x da]; also the flat-attention pair
  Tensor inter_q, inter_k;       // [d x da]
};

// Scaled dot-product attention of one query row over a key/value matrix.
// Values are the unprojected keys. Returns (pooled [1 x d], weights [1 x n]).
inline std::pair<Tensor, Tensor> candidate_attention(Tape* tape, const Tensor& query,
                                                     const Tensor& keys,
                                                     const Tensor& w_q,
                                                     const Tensor& w_k) {
  Tensor q = matmul(tape, query, w_q);                       // [1 x da]
  Tensor k = matmul(tape, keys, w_k);                        // [n x da]
  Tensor logits = transpose(tape, matmul(tape, k, transpose(tape, q)));  // [1 x n]
  const real scale = real(1) / std::sqrt(static_cast<real>(w_q.cols()));
  logits = mul_scalar(tape, logits, scale);
  std::vector<uint8_t> mask(logits.size(), 1);
  Tensor alpha = softmax_masked_rows(tape, logits, mask);
  Tensor pooled = matmul(tape, alpha, keys);  // [1 x d]
  return {pooled, alpha};
}

// Residual GCN over the full node set (news nodes plus zero-initialized
// proxy rows). Returns the news-node rows of the final layer.
inline Tensor gcn_forward(Tape* tape, const SueParams& params, const SueConfig& cfg,
                          const Tensor& history_vecs, const ClusterGraph& graph) {
  if (cfg.gcn_layers < 1) throw config_error("gcn_forward: needs at least one layer");
  Tensor proxies({graph.proxy_count, cfg.dim});  // zero embeddings
  Tensor h = concat(tape, {history_vecs, proxies}, 0);
  Tensor norm_adj = normalized_adjacency_tensor(graph);
  for (size_t l = 0; l < cfg.gcn_layers; ++l) {
    Tensor mixed = matmul(tape, matmul(tape, norm_adj, h), params.gcn_w[l]);
    h = add(tape, relu(tape, mixed), h);
  }
  return slice_rows(tape, h, 0, graph.news_count);
}

struct UserEncoding {
  Tensor vec;                     // [1 x d]
  std::vector<Tensor> intra_attn; // per cluster, [1 x |C_i|]
  Tensor inter_attn;              // [1 x |C|]
  Tensor flat_attn;               // [1 x |V_n|] under the flat ablation
};

// Structural node features for one user: identity when the GCN is ablated.
inline Tensor user_history_nodes(Tape* tape, const SueParams& params,
                                 const SueConfig& cfg, const Tensor& history_vecs,
                                 const ClusterGraph& graph) {
  if (!cfg.gcn) return history_vecs;
  return gcn_forward(tape, params, cfg, history_vecs, graph);
}

// Nonlinear residual projection into cluster-level feature space.
inline Tensor cluster_transform(Tape* tape, const SueParams& params, const Tensor& x) {
  Tensor projected = add_rowvec(tape, matmul(tape, x, params.cluster_w), params.cluster_b);
  return add(tape, relu(tape, projected), x);
}

// Candidate-conditioned aggregation of the structural node features:
// intra-cluster attention, cluster transform, inter-cluster attention.
// The flat variant replaces the hierarchy with one attention over all nodes.
inline UserEncoding attend_user(Tape* tape, const SueParams& params,
                                const SueConfig& cfg, const Tensor& node_vecs,
                                const ClusterGraph& graph, const Tensor& candidate,
                                bool keep_attention = false) {
  UserEncoding out;
  if (!cfg.hierarchical) {
    auto [pooled, alpha] =
        candidate_attention(tape, candidate, node_vecs, params.intra_q, params.intra_k);
    out.vec = pooled;
    if (keep_attention) out.flat_attn = alpha;
    return out;
  }
  std::vector<Tensor> cluster_vecs(graph.clusters.size());
  for (size_t c = 0; c < graph.clusters.size(); ++c) {
    Tensor members = gather_rows(tape, node_vecs, graph.clusters[c]);
    auto [pooled, alpha] =
        candidate_attention(tape, candidate, members, params.intra_q, params.intra_k);
    cluster_vecs[c] = cluster_transform(tape, params, pooled);
    if (keep_attention) out.intra_attn.push_back(alpha);
  }
  Tensor cluster_keys = concat(tape, cluster_vecs, 0);
  auto [user_vec, inter_alpha] =
      candidate_attention(tape, candidate, cluster_keys, params.inter_q, params.inter_k);
  out.vec = user_vec;
  if (keep_attention) out.inter_attn = inter_alpha;
  return out;
}

// Full user encoding for one (history, candidate) pair. An empty history
// yields the zero vector, which scores zero against any candidate.
inline UserEncoding encode_user(Tape* tape, const SueParams& params, const SueConfig& cfg,
                                const Tensor& history_vecs, const ClusterGraph& graph,
                                const Tensor& candidate, bool keep_attention = false) {
  if (graph.news_count == 0) {
    UserEncoding out;
    out.vec = Tensor({size_t(1), cfg.dim});
    return out;
  }
  Tensor nodes = user_history_nodes(tape, params, cfg, history_vecs, graph);
  return attend_user(tape, params, cfg, nodes, graph, candidate, keep_attention);
}

// ----------------------------- parameter setup -----------------------------

inline SueParams init_sue_params(ParamStore& store, const SueConfig& cfg, Rng& rng) {
  SueParams p;
  if (cfg.gcn) {
    p.gcn_w.reserve(cfg.gcn_layers);
    for (size_t l = 0; l < cfg.gcn_layers; ++l)
      p.gcn_w.push_back(store.add(cat("sue.gcn.", l, ".w"),
                                  scaled_uniform_init(cfg.dim, cfg.dim, rng)));
  }
  p.intra_q = store.add("sue.intra.q", scaled_uniform_init(cfg.dim, cfg.attn_dim, rng));
  p.intra_k = store.add("sue.intra.k", scaled_uniform_init(cfg.dim, cfg.attn_dim, rng));
  if (cfg.hierarchical) {
    p.cluster_w = store.add("sue.cluster.w", scaled_uniform_init(cfg.dim, cfg.dim, rng));
    p.cluster_b = store.add("sue.cluster.b", Tensor({size_t(1), cfg.dim}));
    p.inter_q = store.add("sue.inter.q", scaled_uniform_init(cfg.dim, cfg.attn_dim, rng));
    p.inter_k = store.add("sue.inter.k", scaled_uniform_init(cfg.dim, cfg.attn_dim, rng));
  }
  return p;
}

}  // namespace newsrec
