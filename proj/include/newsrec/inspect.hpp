#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "newsrec/data.hpp"
#include "newsrec/graph.hpp"
#include "newsrec/model.hpp"

namespace newsrec {

namespace detail {

inline std::string weight_band(double w) {
  // coarse magnitude buckets, darker band = more weight
  int level = std::min(8, static_cast<int>(w * 24.0));
  return std::string(static_cast<size_t>(std::max(level, 0)), '#');
}

inline void append_attention_table(std::string& out, const Vocabulary& vocab,
                                   const std::vector<int32_t>& tokens,
                                   const std::vector<uint8_t>& mask,
                                   const std::vector<double>& weights) {
  for (size_t t = 0; t < tokens.size(); ++t) {
    if (!mask[t]) continue;
    char line[160];
    std::snprintf(line, sizeof line, "  %-20s %.4f  %s\n",
                  vocab.token(tokens[t]).c_str(), weights[t],
                  weight_band(weights[t]).c_str());
    out += line;
  }
}

}  // namespace detail

// Per-token attention weights of one encoded article, combining the self
// and cross distributions: alpha = (alpha_self + alpha_cross) / 2. Without
// the cross branch the self distribution stands alone.
struct NewsAttention {
  std::vector<double> title;
  std::vector<double> content;
};

inline NewsAttention combined_attention(const NewsEncoding& enc) {
  NewsAttention out;
  auto combine = [](const Tensor& self_attn, const Tensor& cross_attn) {
    std::vector<double> w(self_attn.size());
    for (size_t t = 0; t < w.size(); ++t) {
      double a = self_attn.at(t);
      if (cross_attn.defined()) a = (a + cross_attn.at(t)) / 2.0;
      w[t] = a;
    }
    return w;
  };
  out.title = combine(enc.title_self_attn, enc.title_cross_attn);
  out.content = combine(enc.content_self_attn, enc.content_cross_attn);
  return out;
}

inline std::string render_news_attention(const NewsArticle& article,
                                         const Vocabulary& vocab,
                                         const NewsAttention& attn) {
  std::string out = cat("news ", article.id, " (", article.category, ")\n");
  out += "title attention\n";
  detail::append_attention_table(out, vocab, article.title, article.title_mask,
                                 attn.title);
  out += "content attention\n";
  detail::append_attention_table(out, vocab, article.content, article.content_mask,
                                 attn.content);
  return out;
}

// Text dump of a user's cluster graph: nodes with categories, the three
// edge groups, and (when a candidate is supplied) both attention levels.
inline std::string render_user_graph(const std::string& user_id,
                                     const NewsTable& news,
                                     const std::vector<int>& history,
                                     const ClusterGraph& graph,
                                     const UserEncoding* encoding = nullptr,
                                     const NewsArticle* candidate = nullptr) {
  std::string out = cat("user ", user_id, ": ", graph.news_count, " news, ",
                        graph.clusters.size(), " clusters, ", graph.node_count(),
                        " nodes, ", graph.undirected_edge_count(), " edges\n");
  for (size_t c = 0; c < graph.clusters.size(); ++c) {
    out += cat("cluster ", c, " (",
               news.articles[history[graph.clusters[c][0]]].category, "):");
    for (int member : graph.clusters[c])
      out += cat(" ", news.articles[history[member]].id);
    out += "\n";
  }
  auto node_name = [&](size_t node) {
    if (node < graph.news_count) return news.articles[history[node]].id;
    return cat("proxy", node - graph.news_count);
  };
  out += "news-news edges:";
  for (size_t i = 0; i < graph.news_count; ++i)
    for (size_t j = i + 1; j < graph.news_count; ++j)
      if (graph.edge(i, j)) out += cat(" (", node_name(i), ",", node_name(j), ")");
  out += "\nproxy-news edges:";
  for (size_t i = 0; i < graph.news_count; ++i)
    for (size_t p = graph.news_count; p < graph.node_count(); ++p)
      if (graph.edge(i, p)) out += cat(" (", node_name(i), ",", node_name(p), ")");
  out += "\nproxy-proxy edges:";
  for (size_t p = graph.news_count; p < graph.node_count(); ++p)
    for (size_t q = p + 1; q < graph.node_count(); ++q)
      if (graph.edge(p, q)) out += cat(" (", node_name(p), ",", node_name(q), ")");
  out += "\n";
  if (encoding && candidate) {
    out += cat("candidate ", candidate->id, " (", candidate->category, ")\n");
    for (size_t c = 0; c < encoding->intra_attn.size(); ++c) {
      out += cat("intra-cluster attention ", c, ":");
      for (size_t j = 0; j < encoding->intra_attn[c].size(); ++j) {
        char buf[24];
        std::snprintf(buf, sizeof buf, " %.4f",
                      static_cast<double>(encoding->intra_attn[c].at(j)));
        out += buf;
      }
      out += "\n";
    }
    if (encoding->inter_attn.defined()) {
      out += "inter-cluster attention:";
      for (size_t c = 0; c < encoding->inter_attn.size(); ++c) {
        char buf[24];
        std::snprintf(buf, sizeof buf, " %.4f",
                      static_cast<double>(encoding->inter_attn.at(c)));
        out += buf;
      }
      out += "\n";
    }
    if (encoding->flat_attn.defined()) {
      out += "node attention:";
      for (size_t j = 0; j < encoding->flat_attn.size(); ++j) {
        char buf[24];
        std::snprintf(buf, sizeof buf, " %.4f",
                      static_cast<double>(encoding->flat_attn.at(j)));
        out += buf;
      }
      out += "\n";
    }
  }
  return out;
}

}  // namespace newsrec
