#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "newsrec/checkpoint.hpp"
#include "newsrec/data.hpp"
#include "newsrec/evaluation.hpp"
#include "newsrec/model.hpp"
#include "newsrec/optim.hpp"

namespace newsrec {

// Negative log-likelihood of the first score against the rest, the
// (K+1)-way softmax objective. scores is [n x 1] with the positive at row
// 0. Stabilized by constant max subtraction, which leaves the gradient
// exact.
inline Tensor nll_from_scores(Tape* tape, const Tensor& scores) {
  if (scores.cols() != 1 || scores.rows() < 1)
    throw dim_error(cat("nll: expected [n x 1] scores, got ", shape_str(scores.shape())));
  real shift = scores.at(0);
  for (size_t i = 0; i < scores.size(); ++i) shift = std::max(shift, scores.at(i));
  Tensor exps = exp(tape, add_scalar(tape, scores, -shift));
  Tensor lse = add_scalar(tape, log(tape, sum_all(tape, exps)), shift);
  Tensor positive = reshape(tape, slice_rows(tape, scores, 0, 1), {size_t(1)});
  return sub(tape, lse, positive);
}

inline Tensor nll_loss(Tape* tape, const Tensor& positive_score,
                       const std::vector<Tensor>& negative_scores) {
  std::vector<Tensor> rows;
  rows.push_back(positive_score);
  for (const Tensor& n : negative_scores) rows.push_back(n);
  return nll_from_scores(tape, concat(tape, rows, 0));
}

struct TrainConfig {
  size_t batch_size = 64;
  double lr = 1e-4;
  int patience = 5;
  int max_epochs = 100;
  double clip_norm = 5.0;
  uint64_t seed = 0;
  std::string out_dir;  // empty: keep the best model in memory only
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0;
  MetricReport validation;
  double seconds = 0;
};

struct TrainResult {
  int best_epoch = -1;
  double best_auc = 0;
  MetricReport best_validation;
  std::vector<EpochStats> epochs;
  std::string checkpoint_path;
};

// Strict-improvement early stopping: stops after `patience` consecutive
// epochs without a new best value.
struct EarlyStopping {
  int patience = 5;
  int best_epoch = -1;
  double best_value = 0;
  int stale = 0;

  bool offer(int epoch, double value) {
    if (best_epoch < 0 || value > best_value) {
      best_epoch = epoch;
      best_value = value;
      stale = 0;
      return true;
    }
    ++stale;
    return false;
  }
  bool should_stop() const { return stale >= patience; }
};

namespace detail {

// Deduplicated article set of one batch, in first-appearance order.
struct BatchArticles {
  std::vector<int> article_indices;
  std::unordered_map<int, int> row_of;

  int row(int article) const { return row_of.at(article); }

  void collect(const TrainSample& s) {
    auto touch = [&](int idx) {
      if (row_of.emplace(idx, static_cast<int>(article_indices.size())).second)
        article_indices.push_back(idx);
    };
    for (int h : s.history) touch(h);
    touch(s.positive);
    for (int n : s.negatives) touch(n);
  }
};

}  // namespace detail

// Scores every impression with the current parameters (eval mode: no
// dropout, no gradients). News vectors are computed once per unique
// article in fixed-size chunks and cached for the whole pass.
inline std::vector<ScoredImpression> score_impressions(
    const ScoringModel& model, const NewsTable& news,
    const std::vector<EvalImpression>& impressions, size_t chunk = 256) {
  std::vector<int> needed;
  std::unordered_map<int, size_t> slot;
  for (const EvalImpression& imp : impressions) {
    auto touch = [&](int idx) {
      if (slot.emplace(idx, needed.size()).second) needed.push_back(idx);
    };
    for (int h : imp.history) touch(h);
    for (int c : imp.candidates) touch(c);
  }
  const size_t dim = model.config().news_dim();
  std::vector<real> vec_cache(needed.size() * dim);
  for (size_t start = 0; start < needed.size(); start += chunk) {
    size_t n = std::min(chunk, needed.size() - start);
    std::vector<const NewsArticle*> articles(n);
    for (size_t i = 0; i < n; ++i)
      articles[i] = &news.articles[needed[start + i]];
    NewsEncoding enc = model.encode_articles(nullptr, articles);
    std::copy(enc.vecs.data().begin(), enc.vecs.data().end(),
              vec_cache.begin() + start * dim);
  }
  auto cached_rows = [&](const std::vector<int>& idx) {
    Tensor rows({idx.size(), dim});
    for (size_t i = 0; i < idx.size(); ++i)
      std::copy(vec_cache.begin() + slot.at(idx[i]) * dim,
                vec_cache.begin() + (slot.at(idx[i]) + 1) * dim,
                rows.data().begin() + i * dim);
    return rows;
  };

  std::vector<ScoredImpression> scored;
  scored.reserve(impressions.size());
  for (const EvalImpression& imp : impressions) {
    ScoredImpression si;
    si.labels = imp.labels;
    si.scores.reserve(imp.candidates.size());
    if (imp.history.empty()) {
      si.scores.assign(imp.candidates.size(), 0.0);
      scored.push_back(std::move(si));
      continue;
    }
    Tensor history_vecs = cached_rows(imp.history);
    ClusterGraph graph = build_cluster_graph(history_categories(news, imp.history));
    Tensor nodes = model.user_nodes(nullptr, history_vecs, graph);
    for (int cand : imp.candidates) {
      Tensor cand_vec = cached_rows({cand});
      UserEncoding user = model.user_from_nodes(nullptr, nodes, graph, cand_vec);
      si.scores.push_back(
          static_cast<double>(ScoringModel::score(nullptr, cand_vec, user.vec).at(0)));
    }
    scored.push_back(std::move(si));
  }
  return scored;
}

inline MetricReport evaluate_model(const ScoringModel& model, const NewsTable& news,
                                   const std::vector<EvalImpression>& impressions) {
  return evaluate_scored(score_impressions(model, news, impressions));
}

// Optimization loop: seeded shuffling, deduplicated batch encoding,
// (K+1)-way softmax loss, gradient clipping, Adam, per-epoch validation
// with early stopping on AUC.
class Trainer {
 public:
  Trainer(ScoringModel& model, const NewsTable& news, TrainConfig cfg,
          const std::vector<std::string>* vocab_tokens = nullptr)
      : model_(&model),
        news_(&news),
        cfg_(cfg),
        adam_(model.params(), AdamConfig{.lr = cfg.lr}),
        order_rng_(cfg.seed, 2),
        dropout_rng_(cfg.seed, 3),
        vocab_tokens_(vocab_tokens) {}

  // Mean loss over one batch; tape non-null during training.
  Tensor batch_loss(Tape* tape, const std::vector<const TrainSample*>& batch,
                    bool training) {
    detail::BatchArticles arts;
    for (const TrainSample* s : batch) arts.collect(*s);
    std::vector<const NewsArticle*> articles;
    articles.reserve(arts.article_indices.size());
    for (int idx : arts.article_indices) articles.push_back(&news_->articles[idx]);
    Rng* rng = training ? &dropout_rng_ : nullptr;
    NewsEncoding enc = model_->encode_articles(tape, articles, training, rng);

    std::vector<Tensor> losses;
    losses.reserve(batch.size());
    for (const TrainSample* s : batch) {
      std::vector<int> candidate_rows;
      candidate_rows.push_back(arts.row(s->positive));
      for (int n : s->negatives) candidate_rows.push_back(arts.row(n));

      Tensor nodes;
      ClusterGraph graph;
      if (!s->history.empty()) {
        std::vector<int> hist_rows;
        hist_rows.reserve(s->history.size());
        for (int h : s->history) hist_rows.push_back(arts.row(h));
        Tensor history_vecs = gather_rows(tape, enc.vecs, hist_rows);
        graph = build_cluster_graph(history_categories(*news_, s->history));
        nodes = model_->user_nodes(tape, history_vecs, graph);
      }
      std::vector<Tensor> scores;
      scores.reserve(candidate_rows.size());
      for (int row : candidate_rows) {
        Tensor cand = gather_rows(tape, enc.vecs, {row});
        Tensor user = s->history.empty()
                          ? model_->zero_user_vec()
                          : model_->user_from_nodes(tape, nodes, graph, cand).vec;
        scores.push_back(ScoringModel::score(tape, cand, user));
      }
      losses.push_back(nll_from_scores(tape, concat(tape, scores, 0)));
    }
    Tensor total = sum_all(tape, concat(tape, losses, 0));
    return mul_scalar(tape, total, real(1) / static_cast<real>(batch.size()));
  }

  // One optimization pass over the training set. Returns mean sample loss.
  double train_epoch(const std::vector<TrainSample>& samples, int epoch) {
    std::vector<size_t> order(samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng_.shuffle(order);
    double loss_sum = 0;
    size_t batches = 0;
    for (size_t start = 0; start < order.size(); start += cfg_.batch_size) {
      size_t n = std::min(cfg_.batch_size, order.size() - start);
      std::vector<const TrainSample*> batch(n);
      for (size_t i = 0; i < n; ++i) batch[i] = &samples[order[start + i]];
      model_->params().zero_grads();
      Tape tape;
      Tensor loss = batch_loss(&tape, batch, true);
      double loss_value = static_cast<double>(loss.at(0));
      if (!std::isfinite(loss_value)) {
        throw train_abort(cat("non-finite loss ", loss_value, " at epoch ", epoch,
                              ", batch ", batches, ", first sample ",
                              batch[0]->impression_id));
      }
      run_backward(tape, loss);
      clip_global_norm(model_->params(), cfg_.clip_norm);
      adam_.step();
      loss_sum += loss_value;
      ++batches;
    }
    return batches ? loss_sum / static_cast<double>(batches) : 0.0;
  }

  TrainResult run(const std::vector<TrainSample>& train,
                  const std::vector<EvalImpression>& validation,
                  std::ostream* log = nullptr) {
    if (train.empty()) throw config_error("training set is empty");
    TrainResult result;
    std::ofstream metrics_log;
    if (!cfg_.out_dir.empty()) {
      metrics_log.open(cfg_.out_dir + "/metrics.log");
      if (!metrics_log)
        throw train_abort(cat("cannot write metrics log in ", cfg_.out_dir));
      metrics_log << "epoch\ttrain_loss\tval_auc\tval_mrr\tval_ndcg5\tval_ndcg10\tseconds\n";
    }
    EarlyStopping stopper{.patience = cfg_.patience};
    for (int epoch = 0; epoch < cfg_.max_epochs; ++epoch) {
      auto t0 = std::chrono::steady_clock::now();
      EpochStats stats;
      stats.epoch = epoch;
      stats.train_loss = train_epoch(train, epoch);
      if (!validation.empty())
        stats.validation = evaluate_model(*model_, *news_, validation);
      stats.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      char line[256];
      std::snprintf(line, sizeof line, "%d\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.2f",
                    epoch, stats.train_loss, stats.validation.auc,
                    stats.validation.mrr, stats.validation.ndcg5,
                    stats.validation.ndcg10, stats.seconds);
      if (metrics_log.is_open()) metrics_log << line << "\n" << std::flush;
      if (log) *log << line << "\n" << std::flush;
      result.epochs.push_back(stats);

      if (stopper.offer(epoch, stats.validation.auc)) {
        result.best_epoch = epoch;
        result.best_auc = stats.validation.auc;
        result.best_validation = stats.validation;
        if (!cfg_.out_dir.empty()) {
          result.checkpoint_path = cfg_.out_dir + "/model.ckpt";
          static const std::vector<std::string> kNoVocab;
          save_model(result.checkpoint_path, *model_,
                     vocab_tokens_ ? *vocab_tokens_ : kNoVocab);
        }
      }
      if (stopper.should_stop()) break;
    }
    if (metrics_log.is_open()) {
      metrics_log << "best_epoch=" << result.best_epoch
                  << "\tbest_auc=" << result.best_auc << "\n";
    }
    return result;
  }

  Adam& optimizer() { return adam_; }

 private:
  ScoringModel* model_;
  const NewsTable* news_;
  TrainConfig cfg_;
  Adam adam_;
  Rng order_rng_;
  Rng dropout_rng_;
  const std::vector<std::string>* vocab_tokens_;
};

}  // namespace newsrec
