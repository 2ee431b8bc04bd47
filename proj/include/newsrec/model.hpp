#pragma once

#include <string>
#include <vector>

#include "newsrec/cne.hpp"
#include "newsrec/data.hpp"
#include "newsrec/graph.hpp"
#include "newsrec/params.hpp"
#include "newsrec/sue.hpp"

namespace newsrec {

enum class Ablation { full, cne_wo_cs, cne_wo_ca, sue_wo_gcn, sue_wo_hca };

inline std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::cne_wo_cs: return "cne-wo-cs";
    case Ablation::cne_wo_ca: return "cne-wo-ca";
    case Ablation::sue_wo_gcn: return "sue-wo-gcn";
    case Ablation::sue_wo_hca: return "sue-wo-hca";
    default: return "full";
  }
}

inline Ablation parse_ablation(const std::string& s) {
  if (s == "full") return Ablation::full;
  if (s == "cne-wo-cs") return Ablation::cne_wo_cs;
  if (s == "cne-wo-ca") return Ablation::cne_wo_ca;
  if (s == "sue-wo-gcn") return Ablation::sue_wo_gcn;
  if (s == "sue-wo-hca") return Ablation::sue_wo_hca;
  throw config_error(cat("unknown ablation '", s,
                         "' (expected full, cne-wo-cs, cne-wo-ca, sue-wo-gcn, sue-wo-hca)"));
}

struct ModelConfig {
  size_t embed_dim = 300;
  size_t hidden = 128;
  size_t attn_dim = 200;
  size_t gcn_layers = 4;
  size_t title_len = 32;
  size_t content_len = 128;
  size_t history_cap = 50;
  real dropout = 0.2f;
  Ablation ablation = Ablation::full;

  size_t news_dim() const { return 4 * hidden; }

  CneConfig cne() const {
    CneConfig c;
    c.embed_dim = embed_dim;
    c.hidden = hidden;
    c.attn_dim = attn_dim;
    c.dropout = dropout;
    c.cross_select = ablation != Ablation::cne_wo_cs;
    c.cross_attention = ablation != Ablation::cne_wo_ca;
    return c;
  }

  SueConfig sue() const {
    SueConfig s;
    s.dim = news_dim();
    s.attn_dim = attn_dim;
    s.gcn_layers = gcn_layers;
    s.gcn = ablation != Ablation::sue_wo_gcn;
    s.hierarchical = ablation != Ablation::sue_wo_hca;
    return s;
  }
};

// The full scoring model: word embeddings, collaborative news encoder,
// structural user encoder, dot-product click score.
class ScoringModel {
 public:
  ScoringModel(ModelConfig cfg, size_t vocab_size, Rng& init_rng,
               const Tensor* pretrained_embeddings = nullptr)
      : cfg_(cfg) {
    Tensor emb;
    if (pretrained_embeddings) {
      if (pretrained_embeddings->rows() != vocab_size ||
          pretrained_embeddings->cols() != cfg.embed_dim) {
        throw dim_error(cat("embedding table ",
                            shape_str(pretrained_embeddings->shape()),
                            " does not match vocab ", vocab_size, " x ",
                            cfg.embed_dim));
      }
      emb = pretrained_embeddings->clone();
    } else {
      emb = uniform_init({vocab_size, cfg.embed_dim}, -0.1, 0.1, init_rng);
      for (size_t j = 0; j < cfg.embed_dim; ++j)
        emb.at(static_cast<size_t>(kPadToken), j) = real(0);
    }
    embedding_ = store_.add("embedding.table", std::move(emb),
                            {static_cast<size_t>(kPadToken)});
    cne_params_ = init_cne_params(store_, cfg.cne(), init_rng);
    sue_params_ = init_sue_params(store_, cfg.sue(), init_rng);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const Tensor& embedding() const { return embedding_; }
  const CneParams& cne_params() const { return cne_params_; }
  const SueParams& sue_params() const { return sue_params_; }

  NewsEncoding encode_news_batch(Tape* tape, const TokenBatch& title,
                                 const TokenBatch& content, bool training = false,
                                 Rng* rng = nullptr, bool keep_attention = false) const {
    return encode_news(tape, cne_params_, cfg_.cne(), embedding_, title, content,
                       training, rng, keep_attention);
  }

  NewsEncoding encode_articles(Tape* tape,
                               const std::vector<const NewsArticle*>& articles,
                               bool training = false, Rng* rng = nullptr,
                               bool keep_attention = false) const {
    TokenBatch title = make_token_batch(articles, true);
    TokenBatch content = make_token_batch(articles, false);
    return encode_news_batch(tape, title, content, training, rng, keep_attention);
  }

  Tensor user_nodes(Tape* tape, const Tensor& history_vecs,
                    const ClusterGraph& graph) const {
    return user_history_nodes(tape, sue_params_, cfg_.sue(), history_vecs, graph);
  }

  UserEncoding user_from_nodes(Tape* tape, const Tensor& node_vecs,
                               const ClusterGraph& graph, const Tensor& candidate,
                               bool keep_attention = false) const {
    return attend_user(tape, sue_params_, cfg_.sue(), node_vecs, graph, candidate,
                       keep_attention);
  }

  UserEncoding encode_user_full(Tape* tape, const Tensor& history_vecs,
                                const ClusterGraph& graph, const Tensor& candidate,
                                bool keep_attention = false) const {
    return encode_user(tape, sue_params_, cfg_.sue(), history_vecs, graph, candidate,
                       keep_attention);
  }

  Tensor zero_user_vec() const { return Tensor({size_t(1), cfg_.news_dim()}); }

  // Unnormalized click score, the dot product of the two representations.
  static Tensor score(Tape* tape, const Tensor& news_vec, const Tensor& user_vec) {
    return rowwise_dot(tape, news_vec, user_vec);
  }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  Tensor embedding_;
  CneParams cne_params_;
  SueParams sue_params_;
};

inline std::vector<std::string> history_categories(const NewsTable& news,
                                                   const std::vector<int>& history) {
  std::vector<std::string> cats;
  cats.reserve(history.size());
  for (int idx : history) cats.push_back(news.articles[idx].category);
  return cats;
}

}  // namespace newsrec
