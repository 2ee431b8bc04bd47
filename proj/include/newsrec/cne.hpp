#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "newsrec/data.hpp"
#include "newsrec/params.hpp"
#include "newsrec/tensor.hpp"

namespace newsrec {

struct CneConfig {
  size_t embed_dim = 300;
  size_t hidden = 128;     // per LSTM direction
  size_t attn_dim = 200;
  real dropout = 0.2f;
  bool cross_select = true;     // off under the no-cross-selection ablation
  bool cross_attention = true;  // off under the no-cross-attention ablation

  size_t state_dim() const { return 2 * hidden; }  // bidirectional
  size_t news_dim() const { return 4 * hidden; }   // title and content halves
};

struct LstmParams {
  Tensor w_in;   // [embed x 4H]
  Tensor w_rec;  // [H x 4H]
  Tensor bias;   // [1 x 4H]
};

struct CneSideParams {
  LstmParams fw, bw;
  Tensor gate_state_w;   // [2H x 2H]
  Tensor gate_memory_w;  // [2H x 2H]
  Tensor gate_b;         // [1 x 2H]
  Tensor attn_w;         // [2H x da]
  Tensor attn_b;         // [1 x da]
  Tensor attn_v;         // [da x 1]
  Tensor cross_q;        // [2H x da], projects the other side's query
  Tensor cross_k;        // [2H x da], projects this side's keys
};

struct CneParams {
  CneSideParams title, content;
};

// A batch of equally padded token sequences.
struct TokenBatch {
  size_t count = 0;
  size_t len = 0;
  std::vector<int32_t> tokens;  // count x len, row-major
  std::vector<uint8_t> mask;    // true iff real token

  int32_t token(size_t b, size_t t) const { return tokens[b * len + t]; }
  bool real(size_t b, size_t t) const { return mask[b * len + t] != 0; }

  size_t real_len(size_t b) const {
    size_t n = 0;
    for (size_t t = 0; t < len; ++t)
      if (real(b, t)) ++n;
    return n;
  }
};

inline TokenBatch make_token_batch(const std::vector<const NewsArticle*>& articles,
                                   bool title_side) {
  TokenBatch batch;
  batch.count = articles.size();
  if (articles.empty()) return batch;
  batch.len = title_side ? articles[0]->title.size() : articles[0]->content.size();
  batch.tokens.reserve(batch.count * batch.len);
  batch.mask.reserve(batch.count * batch.len);
  for (const NewsArticle* a : articles) {
    const auto& ids = title_side ? a->title : a->content;
    const auto& mk = title_side ? a->title_mask : a->content_mask;
    if (ids.size() != batch.len)
      throw dim_error(cat("token batch: ragged lengths ", ids.size(), " vs ", batch.len));
    batch.tokens.insert(batch.tokens.end(), ids.begin(), ids.end());
    batch.mask.insert(batch.mask.end(), mk.begin(), mk.end());
  }
  return batch;
}

namespace detail {

// Column of the mask at one time step, as a constant [B x 1] tensor.
inline Tensor mask_column(const TokenBatch& toks, size_t t) {
  Tensor col({toks.count, 1});
  for (size_t b = 0; b < toks.count; ++b)
    col.at(b, 0) = toks.real(b, t) ? real(1) : real(0);
  return col;
}

// Indicator of "t is this sequence's final real token", [B x 1].
inline Tensor last_real_column(const TokenBatch& toks, size_t t) {
  Tensor col({toks.count, 1});
  for (size_t b = 0; b < toks.count; ++b) {
    size_t n = toks.real_len(b);
    col.at(b, 0) = (n > 0 && t == n - 1) ? real(1) : real(0);
  }
  return col;
}

struct LstmScan {
  std::vector<Tensor> hidden;  // per position, [B x H]
  Tensor cell_at_last_real;    // [B x H] (forward scans)
  Tensor cell_at_front;        // [B x H] (backward scans)
};

// One masked LSTM scan. Padded positions carry zero states, so state only
// propagates through real tokens and the reverse scan effectively starts
// at each sequence's last real token.
inline LstmScan lstm_scan(Tape* tape, const LstmParams& p,
                          const std::vector<Tensor>& inputs,
                          const TokenBatch& toks, bool reverse) {
  const size_t batch = toks.count;
  const size_t hidden = p.w_rec.rows();
  LstmScan scan;
  scan.hidden.resize(toks.len);
  Tensor h(std::vector<size_t>{batch, hidden});
  Tensor c(std::vector<size_t>{batch, hidden});
  Tensor mem(std::vector<size_t>{batch, hidden});
  for (size_t step = 0; step < toks.len; ++step) {
    const size_t t = reverse ? toks.len - 1 - step : step;
    Tensor gates = add_rowvec(
        tape,
        add(tape, matmul(tape, inputs[t], p.w_in), matmul(tape, h, p.w_rec)),
        p.bias);
    Tensor in_gate = sigmoid(tape, slice_cols(tape, gates, 0, hidden));
    Tensor forget_gate = sigmoid(tape, slice_cols(tape, gates, hidden, hidden));
    Tensor candidate = tanh(tape, slice_cols(tape, gates, 2 * hidden, hidden));
    Tensor out_gate = sigmoid(tape, slice_cols(tape, gates, 3 * hidden, hidden));
    Tensor c_next = add(tape, mul(tape, forget_gate, c), mul(tape, in_gate, candidate));
    Tensor h_next = mul(tape, out_gate, tanh(tape, c_next));
    Tensor mask_col = mask_column(toks, t);
    c = mul_colvec(tape, c_next, mask_col);
    h = mul_colvec(tape, h_next, mask_col);
    scan.hidden[t] = h;
    if (!reverse)
      mem = add(tape, mem, mul_colvec(tape, c, last_real_column(toks, t)));
  }
  if (reverse)
    scan.cell_at_front = c;  // position 0 is always real
  else
    scan.cell_at_last_real = mem;
  return scan;
}

}  // namespace detail

struct SideEncoding {
  std::vector<Tensor> states;  // per position, [B x 2H]
  Tensor memory;               // [B x 2H]
};

// Bidirectional LSTM over one text side. The memory vector concatenates the
// forward cell state at each sequence's last real token with the backward
// cell state at the first token.
inline SideEncoding bilstm_encode(Tape* tape, const CneSideParams& side,
                                  const Tensor& embeddings, const TokenBatch& toks,
                                  real emb_dropout = 0, bool training = false,
                                  Rng* rng = nullptr) {
  std::vector<Tensor> inputs(toks.len);
  for (size_t t = 0; t < toks.len; ++t) {
    std::vector<int> ids(toks.count);
    for (size_t b = 0; b < toks.count; ++b) ids[b] = toks.token(b, t);
    Tensor x = gather_rows(tape, embeddings, ids);
    inputs[t] = dropout(tape, x, emb_dropout, training, rng);
  }
  detail::LstmScan fw = detail::lstm_scan(tape, side.fw, inputs, toks, false);
  detail::LstmScan bw = detail::lstm_scan(tape, side.bw, inputs, toks, true);
  SideEncoding enc;
  enc.states.resize(toks.len);
  for (size_t t = 0; t < toks.len; ++t)
    enc.states[t] = concat(tape, {fw.hidden[t], bw.hidden[t]}, 1);
  enc.memory = concat(tape, {fw.cell_at_last_real, bw.cell_at_front}, 1);
  return enc;
}

// Sigmoid gate built from the other side's memory vector, rescaling each
// sequential feature.
inline std::vector<Tensor> cross_select(Tape* tape, const CneSideParams& side,
                                        const std::vector<Tensor>& states,
                                        const Tensor& other_memory) {
  Tensor memory_term = matmul(tape, other_memory, side.gate_memory_w);
  std::vector<Tensor> gated(states.size());
  for (size_t t = 0; t < states.size(); ++t) {
    Tensor pre = add_rowvec(
        tape, add(tape, matmul(tape, states[t], side.gate_state_w), memory_term),
        side.gate_b);
    gated[t] = mul(tape, sigmoid(tape, pre), states[t]);
  }
  return gated;
}

// Additive self-attention pooling over real positions.
// Returns (pooled [B x 2H], weights [B x len]).
inline std::pair<Tensor, Tensor> self_attend(Tape* tape, const CneSideParams& side,
                                             const std::vector<Tensor>& states,
                                             const TokenBatch& toks) {
  std::vector<Tensor> scores(states.size());
  for (size_t t = 0; t < states.size(); ++t) {
    Tensor hidden = tanh(
        tape, add_rowvec(tape, matmul(tape, states[t], side.attn_w), side.attn_b));
    scores[t] = matmul(tape, hidden, side.attn_v);
  }
  Tensor logits = concat(tape, scores, 1);
  Tensor alpha = softmax_masked_rows(tape, logits, toks.mask);
  Tensor pooled;
  for (size_t t = 0; t < states.size(); ++t) {
    Tensor term = mul_colvec(tape, states[t], slice_cols(tape, alpha, t, 1));
    pooled = t == 0 ? term : add(tape, pooled, term);
  }
  return {pooled, alpha};
}

// Scaled dot-product attention of a query over this side's states; values
// are the unprojected states. Returns (pooled [B x 2H], weights [B x len]).
inline std::pair<Tensor, Tensor> cross_attend(Tape* tape, const CneSideParams& key_side,
                                              const Tensor& query,
                                              const std::vector<Tensor>& keys,
                                              const TokenBatch& toks) {
  Tensor q = matmul(tape, query, key_side.cross_q);
  const real scale = real(1) / std::sqrt(static_cast<real>(key_side.cross_q.cols()));
  std::vector<Tensor> scores(keys.size());
  for (size_t t = 0; t < keys.size(); ++t) {
    Tensor k = matmul(tape, keys[t], key_side.cross_k);
    scores[t] = mul_scalar(tape, rowwise_dot(tape, q, k), scale);
  }
  Tensor logits = concat(tape, scores, 1);
  Tensor alpha = softmax_masked_rows(tape, logits, toks.mask);
  Tensor pooled;
  for (size_t t = 0; t < keys.size(); ++t) {
    Tensor term = mul_colvec(tape, keys[t], slice_cols(tape, alpha, t, 1));
    pooled = t == 0 ? term : add(tape, pooled, term);
  }
  return {pooled, alpha};
}

struct NewsEncoding {
  Tensor vecs;  // [B x 4H]
  // retained only when requested
  Tensor title_self_attn, title_cross_attn;      // [B x title_len]
  Tensor content_self_attn, content_cross_attn;  // [B x content_len]
};

// Full collaborative encoding of a batch of articles: twin BiLSTMs,
// cross-selective gating, self attention, cross attention, and the
// concatenated title/content representation.
inline NewsEncoding encode_news(Tape* tape, const CneParams& params,
                                const CneConfig& cfg, const Tensor& embeddings,
                                const TokenBatch& title, const TokenBatch& content,
                                bool training = false, Rng* rng = nullptr,
                                bool keep_attention = false) {
  SideEncoding title_enc =
      bilstm_encode(tape, params.title, embeddings, title, cfg.dropout, training, rng);
  SideEncoding content_enc =
      bilstm_encode(tape, params.content, embeddings, content, cfg.dropout, training, rng);

  std::vector<Tensor> title_states = title_enc.states;
  std::vector<Tensor> content_states = content_enc.states;
  if (cfg.cross_select) {
    title_states = cross_select(tape, params.title, title_enc.states, content_enc.memory);
    content_states = cross_select(tape, params.content, content_enc.states, title_enc.memory);
  }

  auto [title_self, title_self_attn] = self_attend(tape, params.title, title_states, title);
  auto [content_self, content_self_attn] =
      self_attend(tape, params.content, content_states, content);

  Tensor title_vec = title_self;
  Tensor content_vec = content_self;
  NewsEncoding out;
  if (cfg.cross_attention) {
    auto [title_cross, title_cross_attn] =
        cross_attend(tape, params.title, content_self, title_states, title);
    auto [content_cross, content_cross_attn] =
        cross_attend(tape, params.content, title_self, content_states, content);
    title_vec = add(tape, title_self, title_cross);
    content_vec = add(tape, content_self, content_cross);
    if (keep_attention) {
      out.title_cross_attn = title_cross_attn;
      out.content_cross_attn = content_cross_attn;
    }
  }
  if (keep_attention) {
    out.title_self_attn = title_self_attn;
    out.content_self_attn = content_self_attn;
  }
  Tensor news = concat(tape, {title_vec, content_vec}, 1);
  out.vecs = dropout(tape, news, cfg.dropout, training, rng);
  return out;
}

// Stacks per-position [1 x D] states of a single sequence into [len x D].
inline Tensor stack_states(Tape* tape, const std::vector<Tensor>& states) {
  return concat(tape, states, 0);
}

// ----------------------------- parameter setup -----------------------------

inline LstmParams init_lstm_params(ParamStore& store, const std::string& prefix,
                                   size_t embed_dim, size_t hidden, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  LstmParams p;
  p.w_in = store.add(prefix + ".w_in",
                     uniform_init({embed_dim, 4 * hidden}, -bound, bound, rng));
  p.w_rec = store.add(prefix + ".w_rec",
                      uniform_init({hidden, 4 * hidden}, -bound, bound, rng));
  Tensor bias({size_t(1), 4 * hidden});
  for (size_t j = hidden; j < 2 * hidden; ++j) bias.at(j) = real(1);  // forget gate
  p.bias = store.add(prefix + ".bias", std::move(bias));
  return p;
}

inline CneSideParams init_cne_side(ParamStore& store, const std::string& prefix,
                                   const CneConfig& cfg, Rng& rng) {
  const size_t sd = cfg.state_dim(), da = cfg.attn_dim;
  CneSideParams side;
  side.fw = init_lstm_params(store, prefix + ".lstm_fw", cfg.embed_dim, cfg.hidden, rng);
  side.bw = init_lstm_params(store, prefix + ".lstm_bw", cfg.embed_dim, cfg.hidden, rng);
  if (cfg.cross_select) {
    side.gate_state_w = store.add(prefix + ".gate_state_w", scaled_uniform_init(sd, sd, rng));
    side.gate_memory_w = store.add(prefix + ".gate_memory_w", scaled_uniform_init(sd, sd, rng));
    side.gate_b = store.add(prefix + ".gate_b", Tensor({size_t(1), sd}));
  }
  side.attn_w = store.add(prefix + ".attn_w", scaled_uniform_init(sd, da, rng));
  side.attn_b = store.add(prefix + ".attn_b", Tensor({size_t(1), da}));
  side.attn_v = store.add(prefix + ".attn_v", scaled_uniform_init(da, 1, rng));
  if (cfg.cross_attention) {
    side.cross_q = store.add(prefix + ".cross_q", scaled_uniform_init(sd, da, rng));
    side.cross_k = store.add(prefix + ".cross_k", scaled_uniform_init(sd, da, rng));
  }
  return side;
}

inline CneParams init_cne_params(ParamStore& store, const CneConfig& cfg, Rng& rng) {
  CneParams p;
  p.title = init_cne_side(store, "cne.title", cfg, rng);
  p.content = init_cne_side(store, "cne.content", cfg, rng);
  return p;
}

}  // namespace newsrec
