#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "newsrec/common.hpp"

namespace newsrec {

// One scored impression: parallel candidate scores and 0/1 click labels.
// Metric math runs in double regardless of the model's scalar width.
struct ScoredImpression {
  std::vector<double> scores;
  std::vector<uint8_t> labels;

  size_t positives() const {
    size_t n = 0;
    for (uint8_t l : labels) n += l != 0;
    return n;
  }
  size_t negatives() const { return labels.size() - positives(); }

  bool has_ties() const {
    for (size_t i = 0; i < scores.size(); ++i)
      for (size_t j = i + 1; j < scores.size(); ++j)
        if (scores[i] == scores[j]) return true;
    return false;
  }
};

// Candidate order ranked by descending score, ties keeping input order.
inline std::vector<size_t> ranked_order(const ScoredImpression& imp) {
  std::vector<size_t> order(imp.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return imp.scores[a] > imp.scores[b];
  });
  return order;
}

// Probability that a random positive outranks a random negative, ties
// counting one half. Computed with the rank-sum statistic over average
// ranks. Impressions without both classes are excluded.
inline std::optional<double> impression_auc(const ScoredImpression& imp) {
  const size_t pos = imp.positives(), neg = imp.negatives();
  if (pos == 0 || neg == 0) return std::nullopt;
  std::vector<size_t> order(imp.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return imp.scores[a] < imp.scores[b];
  });
  std::vector<double> rank(imp.scores.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && imp.scores[order[j + 1]] == imp.scores[order[i]]) ++j;
    double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double pos_rank_sum = 0;
  for (size_t k = 0; k < imp.labels.size(); ++k)
    if (imp.labels[k]) pos_rank_sum += rank[k];
  double p = static_cast<double>(pos);
  return (pos_rank_sum - p * (p + 1) / 2.0) / (p * static_cast<double>(neg));
}

// Mean over positives of the reciprocal rank in the score-descending list.
inline std::optional<double> impression_mrr(const ScoredImpression& imp) {
  if (imp.positives() == 0) return std::nullopt;
  std::vector<size_t> order = ranked_order(imp);
  double total = 0;
  size_t pos = 0;
  for (size_t r = 0; r < order.size(); ++r) {
    if (imp.labels[order[r]]) {
      total += 1.0 / static_cast<double>(r + 1);
      ++pos;
    }
  }
  return total / static_cast<double>(pos);
}

inline std::optional<double> impression_ndcg(const ScoredImpression& imp, size_t k) {
  const size_t pos = imp.positives();
  if (pos == 0) return std::nullopt;
  std::vector<size_t> order = ranked_order(imp);
  const size_t depth = std::min(k, order.size());
  double dcg = 0;
  for (size_t r = 0; r < depth; ++r)
    if (imp.labels[order[r]]) dcg += 1.0 / std::log2(static_cast<double>(r + 2));
  double ideal = 0;
  for (size_t r = 0; r < std::min(pos, depth); ++r)
    ideal += 1.0 / std::log2(static_cast<double>(r + 2));
  return dcg / ideal;
}

struct MetricReport {
  double auc = 0, mrr = 0, ndcg5 = 0, ndcg10 = 0;
  size_t impressions = 0;
  size_t auc_excluded = 0;   // single-class impressions
  size_t rank_excluded = 0;  // impressions without positives (MRR/nDCG)
  size_t tied_impressions = 0;

  bool near(const MetricReport& other, double tol) const {
    return std::fabs(auc - other.auc) <= tol && std::fabs(mrr - other.mrr) <= tol &&
           std::fabs(ndcg5 - other.ndcg5) <= tol &&
           std::fabs(ndcg10 - other.ndcg10) <= tol;
  }

  std::string text() const {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "impressions %8zu\n"
                  "AUC        %8.4f   (excluded %zu single-class)\n"
                  "MRR        %8.4f   (excluded %zu without positives)\n"
                  "nDCG@5     %8.4f\n"
                  "nDCG@10    %8.4f\n"
                  "score ties in %zu impressions (broken by input order)\n",
                  impressions, auc, auc_excluded, mrr, rank_excluded, ndcg5,
                  ndcg10, tied_impressions);
    return buf;
  }

  std::string kv() const {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "impressions=%zu\nauc=%.6f\nmrr=%.6f\nndcg@5=%.6f\nndcg@10=%.6f\n"
                  "auc_excluded=%zu\nrank_excluded=%zu\ntied_impressions=%zu\n",
                  impressions, auc, mrr, ndcg5, ndcg10, auc_excluded,
                  rank_excluded, tied_impressions);
    return buf;
  }
};

// Macro average over impressions; each metric averages over the impressions
// eligible for it and reports how many were excluded.
inline MetricReport evaluate_scored(const std::vector<ScoredImpression>& scored) {
  if (scored.empty()) throw config_error("evaluate: empty evaluation set");
  MetricReport rep;
  rep.impressions = scored.size();
  double auc_sum = 0, mrr_sum = 0, n5_sum = 0, n10_sum = 0;
  size_t auc_n = 0, rank_n = 0;
  for (const ScoredImpression& imp : scored) {
    if (imp.has_ties()) ++rep.tied_impressions;
    if (auto a = impression_auc(imp)) {
      auc_sum += *a;
      ++auc_n;
    } else {
      ++rep.auc_excluded;
    }
    auto m = impression_mrr(imp);
    if (m) {
      mrr_sum += *m;
      n5_sum += *impression_ndcg(imp, 5);
      n10_sum += *impression_ndcg(imp, 10);
      ++rank_n;
    } else {
      ++rep.rank_excluded;
    }
  }
  if (auc_n) rep.auc = auc_sum / static_cast<double>(auc_n);
  if (rank_n) {
    rep.mrr = mrr_sum / static_cast<double>(rank_n);
    rep.ndcg5 = n5_sum / static_cast<double>(rank_n);
    rep.ndcg10 = n10_sum / static_cast<double>(rank_n);
  }
  return rep;
}

}  // namespace newsrec
