#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "newsrec/common.hpp"
#include "newsrec/rng.hpp"

namespace newsrec {

// Generator for a small MIND-format corpus whose clicks are decided by
// category affinity: every user prefers two categories and clicks
// candidates from them. Word choice, embeddings and click labels carry a
// category signal, so a working model separates the data quickly.
struct SyntheticSpec {
  size_t users = 50;
  size_t news = 200;
  size_t categories = 6;
  size_t train_impressions_per_user = 8;
  size_t val_impressions_per_user = 3;
  size_t candidates_per_impression = 10;
  size_t history_min = 4;
  size_t history_max = 10;
  size_t embed_dim = 300;
  double label_noise = 0.0;  // probability of flipping a click label
  uint64_t seed = 1;
};

struct SyntheticPaths {
  std::string news_tsv;
  std::string train_behaviors_tsv;
  std::string val_behaviors_tsv;
  std::string embeddings_txt;
};

namespace detail {

struct SyntheticCorpus {
  std::vector<std::string> words;             // all vocabulary words
  std::vector<std::vector<size_t>> by_category;  // word indices per category
  std::vector<size_t> shared;                 // category-neutral word indices
};

inline SyntheticCorpus make_corpus(const SyntheticSpec& spec) {
  SyntheticCorpus c;
  c.by_category.resize(spec.categories);
  for (size_t cat_id = 0; cat_id < spec.categories; ++cat_id) {
    for (size_t w = 0; w < 40; ++w) {
      c.by_category[cat_id].push_back(c.words.size());
      c.words.push_back(newsrec::cat("cat", cat_id, "word", w));
    }
  }
  for (size_t w = 0; w < 30; ++w) {
    c.shared.push_back(c.words.size());
    c.words.push_back(newsrec::cat("common", w));
  }
  return c;
}

}  // namespace detail

inline SyntheticPaths write_synthetic_mind(const SyntheticSpec& spec,
                                           const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  Rng rng(spec.seed, 17);
  detail::SyntheticCorpus corpus = detail::make_corpus(spec);

  auto category_name = [](size_t cat_id) { return newsrec::cat("category", cat_id); };
  auto news_id = [](size_t n) { return newsrec::cat("S", n); };

  // category of each news item, round-robin so every category is populated
  std::vector<size_t> news_cat(spec.news);
  std::vector<std::vector<size_t>> news_by_cat(spec.categories);
  for (size_t n = 0; n < spec.news; ++n) {
    news_cat[n] = n % spec.categories;
    news_by_cat[news_cat[n]].push_back(n);
  }

  SyntheticPaths paths;
  paths.news_tsv = (fs::path(dir) / "news.tsv").string();
  paths.train_behaviors_tsv = (fs::path(dir) / "behaviors_train.tsv").string();
  paths.val_behaviors_tsv = (fs::path(dir) / "behaviors_val.tsv").string();
  paths.embeddings_txt = (fs::path(dir) / "embeddings.txt").string();

  {
    std::ofstream out(paths.news_tsv);
    for (size_t n = 0; n < spec.news; ++n) {
      size_t cat_id = news_cat[n];
      auto pick_words = [&](size_t count) {
        std::string text;
        for (size_t w = 0; w < count; ++w) {
          if (w) text += ' ';
          // mostly categorical words with some shared filler
          if (rng.uniform() < 0.75) {
            const auto& pool = corpus.by_category[cat_id];
            text += corpus.words[pool[rng.index(pool.size())]];
          } else {
            text += corpus.words[corpus.shared[rng.index(corpus.shared.size())]];
          }
        }
        return text;
      };
      std::string title = pick_words(4 + rng.index(5));
      std::string abstract = pick_words(8 + rng.index(9));
      out << news_id(n) << '\t' << category_name(cat_id) << '\t'
          << category_name(cat_id) << "-sub\t" << title << '\t' << abstract
          << "\thttps://example.invalid/" << n << "\t[]\t[]\n";
    }
  }

  // two preferred categories per user
  std::vector<std::pair<size_t, size_t>> prefs(spec.users);
  for (size_t u = 0; u < spec.users; ++u) {
    size_t first = rng.index(spec.categories);
    size_t second = (first + 1 + rng.index(spec.categories - 1)) % spec.categories;
    prefs[u] = {first, second};
  }

  auto preferred_news = [&](size_t u) -> size_t {
    const auto& pool =
        news_by_cat[rng.uniform() < 0.5 ? prefs[u].first : prefs[u].second];
    return pool[rng.index(pool.size())];
  };
  auto other_news = [&](size_t u) -> size_t {
    while (true) {
      size_t cat_id = rng.index(spec.categories);
      if (cat_id == prefs[u].first || cat_id == prefs[u].second) continue;
      const auto& pool = news_by_cat[cat_id];
      return pool[rng.index(pool.size())];
    }
  };

  size_t impression_counter = 0;
  auto write_behaviors = [&](const std::string& path, size_t per_user) {
    std::ofstream out(path);
    for (size_t u = 0; u < spec.users; ++u) {
      size_t hist_len =
          spec.history_min + rng.index(spec.history_max - spec.history_min + 1);
      std::string history;
      for (size_t h = 0; h < hist_len; ++h) {
        if (h) history += ' ';
        history += news_id(preferred_news(u));
      }
      for (size_t i = 0; i < per_user; ++i) {
        std::string cands;
        for (size_t c = 0; c < spec.candidates_per_impression; ++c) {
          bool clicked = rng.uniform() < 0.4;
          size_t n = clicked ? preferred_news(u) : other_news(u);
          if (spec.label_noise > 0 && rng.uniform() < spec.label_noise)
            clicked = !clicked;
          if (c) cands += ' ';
          cands += news_id(n) + (clicked ? "-1" : "-0");
        }
        out << "imp" << impression_counter++ << "\tuser" << u
            << "\t11/11/2019 11:11:11 AM\t" << history << '\t' << cands << '\n';
      }
    }
  };
  write_behaviors(paths.train_behaviors_tsv, spec.train_impressions_per_user);
  write_behaviors(paths.val_behaviors_tsv, spec.val_impressions_per_user);

  {
    // category-clustered embeddings: centroid per category plus jitter
    std::ofstream out(paths.embeddings_txt);
    std::vector<std::vector<double>> centroids(spec.categories,
                                               std::vector<double>(spec.embed_dim));
    for (auto& c : centroids)
      for (double& v : c) v = rng.uniform(-0.4, 0.4);
    auto write_vec = [&](const std::string& word, const std::vector<double>* centroid) {
      out << word;
      for (size_t j = 0; j < spec.embed_dim; ++j) {
        double v = (centroid ? (*centroid)[j] : 0.0) + rng.uniform(-0.1, 0.1);
        char buf[32];
        std::snprintf(buf, sizeof buf, " %.4f", v);
        out << buf;
      }
      out << '\n';
    };
    for (size_t cat_id = 0; cat_id < spec.categories; ++cat_id)
      for (size_t w : corpus.by_category[cat_id])
        write_vec(corpus.words[w], &centroids[cat_id]);
    for (size_t w : corpus.shared) write_vec(corpus.words[w], nullptr);
  }
  return paths;
}

}  // namespace newsrec
