#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "newsrec/common.hpp"
#include "newsrec/rng.hpp"
#include "newsrec/tensor.hpp"

namespace newsrec {

constexpr int32_t kPadToken = 0;
constexpr int32_t kUnkToken = 1;

// Token ids for the news corpus. Id 0 is padding, id 1 the unknown token.
class Vocabulary {
 public:
  Vocabulary() {
    add("<pad>");
    add("<unk>");
  }

  int32_t add(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    int32_t id = static_cast<int32_t>(tokens_.size());
    index_.emplace(token, id);
    tokens_.push_back(token);
    return id;
  }

  int32_t lookup(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkToken : it->second;
  }

  const std::string& token(int32_t id) const { return tokens_[id]; }
  size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Rebuild from an ordered token list (checkpoint restore).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    v.tokens_.clear();
    v.index_.clear();
    for (const std::string& t : tokens) {
      v.index_.emplace(t, static_cast<int32_t>(v.tokens_.size()));
      v.tokens_.push_back(t);
    }
    return v;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int32_t> index_;
};

// Lowercase and split on runs of non-alphanumeric characters.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

struct NewsArticle {
  std::string id;
  std::string category;
  std::vector<int32_t> title;        // length == title_len, left-aligned
  std::vector<int32_t> content;      // length == content_len
  std::vector<uint8_t> title_mask;   // true iff token != pad
  std::vector<uint8_t> content_mask;
  size_t title_words = 0;   // pre-truncation counts, for corpus stats
  size_t content_words = 0;
};

struct NewsTable {
  std::vector<NewsArticle> articles;
  std::unordered_map<std::string, int> by_id;

  const NewsArticle* find(const std::string& id) const {
    auto it = by_id.find(id);
    return it == by_id.end() ? nullptr : &articles[it->second];
  }
  int index_of(const std::string& id) const {
    auto it = by_id.find(id);
    return it == by_id.end() ? -1 : it->second;
  }
};

struct UserHistory {
  std::string user_id;
  std::vector<int> clicked;  // article indices, oldest first, capped
};

// One training unit: history plus a positive and K sampled negatives,
// all as indices into the news table.
struct TrainSample {
  std::string impression_id;
  std::string user_id;
  std::vector<int> history;
  int positive = -1;
  std::vector<int> negatives;
};

// One evaluation unit: the full labeled candidate list of an impression.
struct EvalImpression {
  std::string impression_id;
  std::string user_id;
  std::vector<int> history;
  std::vector<int> candidates;
  std::vector<uint8_t> labels;
};

struct DataConfig {
  size_t title_len = 32;
  size_t content_len = 128;
  size_t history_cap = 50;
  int negatives_per_positive = 4;  // K
};

namespace detail {

inline std::vector<std::string> split_tab(const std::string& line) {
  std::vector<std::string> cols;
  size_t start = 0;
  while (true) {
    size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cols;
}

inline std::vector<std::string> split_space(const std::string& s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    size_t j = i;
    while (j < s.size() && s[j] != ' ') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline void pad_tokens(std::vector<int32_t>& ids, std::vector<uint8_t>& mask,
                       size_t len) {
  if (ids.size() > len) ids.resize(len);
  mask.assign(len, 0);
  for (size_t i = 0; i < ids.size(); ++i) mask[i] = 1;
  ids.resize(len, kPadToken);
}

}  // namespace detail

// Parses a MIND news.tsv: id, category, subcategory, title, abstract, url,
// entity columns. The abstract column is the content text. When grow_vocab
// is false unseen words map to the unknown token.
inline NewsTable parse_news_tsv(const std::string& path, Vocabulary& vocab,
                                const DataConfig& cfg, bool grow_vocab) {
  std::ifstream in(path);
  if (!in) throw config_error(cat("cannot open news file: ", path));
  NewsTable table;
  std::string line;
  size_t line_no = 0;
  auto to_ids = [&](const std::vector<std::string>& words) {
    std::vector<int32_t> ids;
    ids.reserve(words.size());
    for (const std::string& w : words)
      ids.push_back(grow_vocab ? vocab.add(w) : vocab.lookup(w));
    return ids;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols = detail::split_tab(line);
    if (cols.size() < 5) {
      throw data_error(cat(path, ":", line_no, ": expected >=5 tab-separated columns, got ",
                           cols.size()));
    }
    NewsArticle art;
    art.id = cols[0];
    art.category = cols[1];
    std::vector<std::string> title_words = tokenize(cols[3]);
    std::vector<std::string> content_words = tokenize(cols[4]);
    art.title_words = title_words.size();
    art.content_words = content_words.size();
    art.title = to_ids(title_words);
    art.content = to_ids(content_words);
    // empty texts get a single unknown token so masks stay non-empty
    if (art.title.empty()) art.title.push_back(kUnkToken);
    if (art.content.empty()) art.content.push_back(kUnkToken);
    detail::pad_tokens(art.title, art.title_mask, cfg.title_len);
    detail::pad_tokens(art.content, art.content_mask, cfg.content_len);
    if (table.by_id.count(art.id)) continue;  // keep first occurrence
    table.by_id.emplace(art.id, static_cast<int>(table.articles.size()));
    table.articles.push_back(std::move(art));
  }
  return table;
}

struct BehaviorStats {
  size_t impressions = 0;
  size_t unknown_candidates = 0;   // candidate ids absent from the news table
  size_t unknown_history_ids = 0;  // history ids absent from the news table
  size_t no_positive = 0;          // impressions without a click
  size_t no_negative_pool = 0;     // positives skipped for lack of negatives
};

struct BehaviorData {
  std::vector<TrainSample> train;
  std::vector<EvalImpression> impressions;
  BehaviorStats stats;
};

// Parses a MIND behaviors.tsv: impression id, user id, time, history,
// labeled candidate list. Emits one eval impression per row plus one train
// sample per clicked candidate with K negatives drawn from the same
// impression's non-clicked candidates (without replacement while the pool
// lasts, with replacement below K).
inline BehaviorData parse_behaviors_tsv(const std::string& path,
                                        const NewsTable& news,
                                        const DataConfig& cfg, Rng& rng) {
  std::ifstream in(path);
  if (!in) throw config_error(cat("cannot open behaviors file: ", path));
  BehaviorData out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols = detail::split_tab(line);
    if (cols.size() < 5) {
      throw data_error(cat(path, ":", line_no,
                           ": expected 5 tab-separated columns, got ", cols.size()));
    }
    ++out.stats.impressions;

    std::vector<int> history;
    for (const std::string& id : detail::split_space(cols[3])) {
      int idx = news.index_of(id);
      if (idx < 0) {
        ++out.stats.unknown_history_ids;
        continue;
      }
      history.push_back(idx);
    }
    if (history.size() > cfg.history_cap) {
      // most recent entries are last in MIND history strings
      history.erase(history.begin(),
                    history.end() - static_cast<long>(cfg.history_cap));
    }

    std::vector<int> positives, negatives;
    std::vector<int> candidates;
    std::vector<uint8_t> labels;
    for (const std::string& tok : detail::split_space(cols[4])) {
      size_t dash = tok.rfind('-');
      if (dash == std::string::npos || dash + 1 >= tok.size()) {
        throw data_error(cat(path, ":", line_no, ": malformed candidate '", tok, "'"));
      }
      std::string id = tok.substr(0, dash);
      char label = tok[dash + 1];
      if (label != '0' && label != '1') {
        throw data_error(cat(path, ":", line_no, ": bad label in '", tok, "'"));
      }
      int idx = news.index_of(id);
      if (idx < 0) {
        ++out.stats.unknown_candidates;
        continue;
      }
      candidates.push_back(idx);
      labels.push_back(label == '1');
      (label == '1' ? positives : negatives).push_back(idx);
    }
    if (candidates.empty()) continue;

    EvalImpression imp;
    imp.impression_id = cols[0];
    imp.user_id = cols[1];
    imp.history = history;
    imp.candidates = candidates;
    imp.labels = labels;
    out.impressions.push_back(std::move(imp));

    if (positives.empty()) {
      ++out.stats.no_positive;
      continue;
    }
    const size_t k = static_cast<size_t>(cfg.negatives_per_positive);
    for (int pos : positives) {
      if (negatives.empty()) {
        ++out.stats.no_negative_pool;
        continue;
      }
      TrainSample sample;
      sample.impression_id = cols[0];
      sample.user_id = cols[1];
      sample.history = history;
      sample.positive = pos;
      if (negatives.size() >= k) {
        for (size_t pick : rng.sample_without_replacement(negatives.size(), k))
          sample.negatives.push_back(negatives[pick]);
      } else {
        for (size_t j = 0; j < k; ++j)
          sample.negatives.push_back(negatives[rng.index(negatives.size())]);
      }
      out.train.push_back(std::move(sample));
    }
  }
  return out;
}

// ----------------------------- embeddings -----------------------------

struct EmbeddingLoadReport {
  size_t matched = 0;
  size_t missing = 0;
  double coverage() const {
    size_t total = matched + missing;
    return total == 0 ? 0.0 : static_cast<double>(matched) / total;
  }
};

// Loads text-format word vectors ("word v1 ... vD"). Matched vocabulary
// rows copy the file values; unmatched rows draw from uniform(-0.1, 0.1).
// The padding row is all-zero (and is kept frozen by the model).
inline Tensor load_embeddings(const std::string& path, const Vocabulary& vocab,
                              size_t dim, Rng& rng,
                              EmbeddingLoadReport* report = nullptr) {
  std::ifstream in(path);
  if (!in) throw config_error(cat("cannot open embeddings file: ", path));
  Tensor table({vocab.size(), dim});
  std::vector<uint8_t> matched(vocab.size(), 0);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> parts = detail::split_space(line);
    if (parts.size() != dim + 1) {
      throw config_error(cat(path, ":", line_no, ": expected word + ", dim,
                             " values, got ", parts.size() - 1));
    }
    int32_t id = vocab.lookup(parts[0]);
    if (id == kUnkToken && parts[0] != vocab.token(kUnkToken)) continue;
    if (matched[id]) continue;
    matched[id] = 1;
    for (size_t j = 0; j < dim; ++j)
      table.at(static_cast<size_t>(id), j) = static_cast<real>(std::stod(parts[1 + j]));
  }
  EmbeddingLoadReport rep;
  for (size_t i = 0; i < vocab.size(); ++i) {
    if (i == static_cast<size_t>(kPadToken)) {
      for (size_t j = 0; j < dim; ++j) table.at(i, j) = real(0);
      continue;
    }
    if (matched[i]) {
      ++rep.matched;
    } else {
      ++rep.missing;
      for (size_t j = 0; j < dim; ++j)
        table.at(i, j) = static_cast<real>(rng.uniform(-0.1, 0.1));
    }
  }
  if (report) *report = rep;
  return table;
}

// ----------------------------- sample serialization -----------------------------

inline std::string serialize_sample(const TrainSample& s, const NewsTable& news) {
  std::string out = s.impression_id + "\t" + s.user_id + "\t";
  for (size_t i = 0; i < s.history.size(); ++i) {
    if (i) out += ' ';
    out += news.articles[s.history[i]].id;
  }
  out += '\t';
  out += news.articles[s.positive].id;
  out += '\t';
  for (size_t i = 0; i < s.negatives.size(); ++i) {
    if (i) out += ' ';
    out += news.articles[s.negatives[i]].id;
  }
  return out;
}

inline TrainSample parse_sample(const std::string& line, const NewsTable& news) {
  std::vector<std::string> cols = detail::split_tab(line);
  if (cols.size() != 5) throw data_error(cat("sample line: expected 5 columns, got ", cols.size()));
  TrainSample s;
  s.impression_id = cols[0];
  s.user_id = cols[1];
  for (const std::string& id : detail::split_space(cols[2])) {
    int idx = news.index_of(id);
    if (idx < 0) throw data_error(cat("sample line: unknown history id ", id));
    s.history.push_back(idx);
  }
  s.positive = news.index_of(cols[3]);
  if (s.positive < 0) throw data_error(cat("sample line: unknown positive id ", cols[3]));
  for (const std::string& id : detail::split_space(cols[4])) {
    int idx = news.index_of(id);
    if (idx < 0) throw data_error(cat("sample line: unknown negative id ", id));
    s.negatives.push_back(idx);
  }
  return s;
}

inline bool operator==(const TrainSample& a, const TrainSample& b) {
  return a.impression_id == b.impression_id && a.user_id == b.user_id &&
         a.history == b.history && a.positive == b.positive &&
         a.negatives == b.negatives;
}

}  // namespace newsrec
