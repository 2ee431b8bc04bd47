#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "newsrec/common.hpp"
#include "newsrec/tensor.hpp"

namespace newsrec {

// Hierarchical cluster graph over one user's history. News nodes come
// first in history order, then one proxy node per cluster in category
// discovery order. Edges: same-category news pairs form cliques, each
// proxy connects to its own cluster's news nodes, and proxies are fully
// interconnected.
struct ClusterGraph {
  size_t news_count = 0;
  size_t proxy_count = 0;
  std::vector<int> cluster_of;             // per news node
  std::vector<std::vector<int>> clusters;  // member news-node indices
  std::vector<uint8_t> adj;                // dense 0/1, zero diagonal

  size_t node_count() const { return news_count + proxy_count; }
  bool edge(size_t a, size_t b) const { return adj[a * node_count() + b] != 0; }
  size_t proxy_node(size_t cluster) const { return news_count + cluster; }

  size_t undirected_edge_count() const {
    size_t n = node_count(), total = 0;
    for (size_t i = 0; i < n; ++i)
      for (size_t j = i + 1; j < n; ++j)
        if (adj[i * n + j]) ++total;
    return total;
  }
};

inline ClusterGraph build_cluster_graph(const std::vector<std::string>& categories) {
  if (categories.empty())
    throw config_error("build_cluster_graph: empty history");
  ClusterGraph g;
  g.news_count = categories.size();
  std::vector<std::string> names;  // discovery order
  g.cluster_of.resize(g.news_count);
  for (size_t i = 0; i < categories.size(); ++i) {
    int cluster = -1;
    for (size_t c = 0; c < names.size(); ++c)
      if (names[c] == categories[i]) {
        cluster = static_cast<int>(c);
        break;
      }
    if (cluster < 0) {
      cluster = static_cast<int>(names.size());
      names.push_back(categories[i]);
      g.clusters.emplace_back();
    }
    g.cluster_of[i] = cluster;
    g.clusters[cluster].push_back(static_cast<int>(i));
  }
  g.proxy_count = g.clusters.size();

  const size_t n = g.node_count();
  g.adj.assign(n * n, 0);
  auto connect = [&](size_t a, size_t b) {
    g.adj[a * n + b] = 1;
    g.adj[b * n + a] = 1;
  };
  // news-news cliques within each cluster
  for (size_t i = 0; i < g.news_count; ++i)
    for (size_t j = i + 1; j < g.news_count; ++j)
      if (g.cluster_of[i] == g.cluster_of[j]) connect(i, j);
  // proxy-news stars
  for (size_t c = 0; c < g.proxy_count; ++c)
    for (int member : g.clusters[c]) connect(g.proxy_node(c), member);
  // proxy-proxy complete graph
  for (size_t a = 0; a < g.proxy_count; ++a)
    for (size_t b = a + 1; b < g.proxy_count; ++b)
      connect(g.proxy_node(a), g.proxy_node(b));
  return g;
}

// Symmetric renormalized adjacency: self-loops added, then scaled on both
// sides by inverse sqrt degree. Computed in double, emitted as model reals.
inline std::vector<real> normalize_adjacency(const std::vector<uint8_t>& adj, size_t n) {
  if (adj.size() != n * n)
    throw dim_error(cat("normalize_adjacency: ", adj.size(), " entries for n=", n));
  std::vector<double> degree(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j)
      if (adj[i * n + j]) degree[i] += 1.0;
    degree[i] += 1.0;  // self-loop
  }
  std::vector<real> out(n * n, real(0));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      double a = (i == j) ? 1.0 : (adj[i * n + j] ? 1.0 : 0.0);
      if (a != 0.0)
        out[i * n + j] = static_cast<real>(a / std::sqrt(degree[i] * degree[j]));
    }
  }
  return out;
}

inline Tensor normalized_adjacency_tensor(const ClusterGraph& g) {
  size_t n = g.node_count();
  return Tensor::from({n, n}, normalize_adjacency(g.adj, n));
}

}  // namespace newsrec
