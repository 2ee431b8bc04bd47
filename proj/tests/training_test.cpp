#include "newsrec/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "newsrec/synthetic.hpp"
#include "testutil.hpp"

using namespace newsrec;

namespace {

constexpr double kLn5 = 1.6094379124341003;

struct PipelineFixture {
  testutil::TempDir dir{"train"};
  DataConfig data_cfg;
  ModelConfig model_cfg;
  Vocabulary vocab;
  NewsTable news;
  BehaviorData train_data;
  BehaviorData val_data;

  explicit PipelineFixture(uint64_t seed = 1, size_t users = 10, size_t items = 40) {
    SyntheticSpec spec;
    spec.users = users;
    spec.news = items;
    spec.categories = 4;
    spec.train_impressions_per_user = 3;
    spec.val_impressions_per_user = 2;
    spec.history_min = 3;
    spec.history_max = 6;
    spec.seed = seed;
    SyntheticPaths paths = write_synthetic_mind(spec, dir.path().string());
    data_cfg.title_len = 8;
    data_cfg.content_len = 12;
    data_cfg.history_cap = 6;
    model_cfg.embed_dim = 16;
    model_cfg.hidden = 6;
    model_cfg.attn_dim = 6;
    model_cfg.gcn_layers = 2;
    model_cfg.title_len = data_cfg.title_len;
    model_cfg.content_len = data_cfg.content_len;
    model_cfg.history_cap = data_cfg.history_cap;
    model_cfg.dropout = 0.1f;
    news = parse_news_tsv(paths.news_tsv, vocab, data_cfg, true);
    Rng neg_rng(seed, 1);
    train_data = parse_behaviors_tsv(paths.train_behaviors_tsv, news, data_cfg, neg_rng);
    val_data = parse_behaviors_tsv(paths.val_behaviors_tsv, news, data_cfg, neg_rng);
  }

  ScoringModel make_model(uint64_t seed = 1) const {
    Rng rng(seed, 0);
    return ScoringModel(model_cfg, vocab.size(), rng);
  }
};

}  // namespace

TEST(NllLoss, UniformScoresGiveLnFive) {
  Tensor scores = Tensor::from({5, 1}, {2, 2, 2, 2, 2});
  Tensor loss = nll_from_scores(nullptr, scores);
  EXPECT_NEAR(loss.at(0), kLn5, 1e-6);
  // the spec-shaped wrapper
  std::vector<Tensor> negs(4, Tensor::from({1, 1}, {2}));
  Tensor loss2 = nll_loss(nullptr, Tensor::from({1, 1}, {2}), negs);
  EXPECT_NEAR(loss2.at(0), kLn5, 1e-6);
}

TEST(NllLoss, DominantPositiveDrivesLossToZero) {
  Tensor scores = Tensor::from({5, 1}, {40, 0, 0, 0, 0});
  EXPECT_NEAR(nll_from_scores(nullptr, scores).at(0), 0.0, 1e-6);
}

TEST(NllLoss, GradientIsSoftmaxMinusOneHot) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor scores = testutil::random_tensor({5, 1}, rng, -2, 2);
    scores.set_requires_grad(true);
    Tape tape;
    Tensor loss = nll_from_scores(&tape, scores);
    run_backward(tape, loss);
    double denom = 0;
    for (size_t i = 0; i < 5; ++i) denom += std::exp(static_cast<double>(scores.at(i)));
    for (size_t i = 0; i < 5; ++i) {
      double p = std::exp(static_cast<double>(scores.at(i))) / denom;
      double expected = i == 0 ? p - 1.0 : p;
      EXPECT_NEAR(scores.grad()[i], expected, 1e-5);
    }
  }
}

TEST(NllLoss, NonNegativeOnRandomScores) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor scores = testutil::random_tensor({5, 1}, rng, -10, 10);
    EXPECT_GE(nll_from_scores(nullptr, scores).at(0), 0.0f);
  }
}

TEST(Score, TrivialCases) {
  const size_t d = 8;
  Tensor zero_user({size_t(1), d});
  Rng rng(5);
  Tensor cand = testutil::random_tensor({1, d}, rng);
  EXPECT_EQ(ScoringModel::score(nullptr, cand, zero_user).at(0), 0.0f);

  Tensor e1({size_t(1), d});
  e1.at(0) = 1.0f;
  EXPECT_FLOAT_EQ(ScoringModel::score(nullptr, e1, e1).at(0), 1.0f);

  Tensor user = testutil::random_tensor({1, d}, rng);
  real once = ScoringModel::score(nullptr, cand, user).at(0);
  Tensor doubled = mul_scalar(nullptr, cand, 2.0f);
  EXPECT_NEAR(ScoringModel::score(nullptr, doubled, user).at(0), 2.0f * once, 1e-5);
}

TEST(Score, DimMismatchThrows) {
  Tensor a({size_t(1), size_t(4)});
  Tensor b({size_t(1), size_t(6)});
  EXPECT_THROW(ScoringModel::score(nullptr, a, b), dim_error);
}

TEST(EarlyStopping, CounterSemantics) {
  EarlyStopping stop{.patience = 3};
  EXPECT_TRUE(stop.offer(0, 0.5));
  EXPECT_FALSE(stop.offer(1, 0.5));  // ties do not count as improvement
  EXPECT_FALSE(stop.should_stop());
  EXPECT_TRUE(stop.offer(2, 0.55));
  EXPECT_EQ(stop.best_epoch, 2);
  EXPECT_FALSE(stop.offer(3, 0.54));
  EXPECT_FALSE(stop.offer(4, 0.53));
  EXPECT_FALSE(stop.should_stop());
  EXPECT_FALSE(stop.offer(5, 0.52));
  EXPECT_TRUE(stop.should_stop());  // stops exactly patience epochs past best
}

TEST(Trainer, OneSmallStepDecreasesBatchLoss) {
  PipelineFixture fx;
  ScoringModel model = fx.make_model();
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.lr = 1e-5;
  cfg.seed = 9;
  Trainer trainer(model, fx.news, cfg);
  ASSERT_GE(fx.train_data.train.size(), 4u);
  std::vector<const TrainSample*> batch;
  for (size_t i = 0; i < 4; ++i) batch.push_back(&fx.train_data.train[i]);

  Tape tape;
  model.params().zero_grads();
  Tensor loss = trainer.batch_loss(&tape, batch, false);  // no dropout: deterministic
  double before = loss.at(0);
  run_backward(tape, loss);
  clip_global_norm(model.params(), 5.0);
  trainer.optimizer().step();
  Tape tape2;
  double after = trainer.batch_loss(&tape2, batch, false).at(0);
  tape2.clear();
  EXPECT_LT(after, before);
}

TEST(Trainer, SameSeedGivesIdenticalLossSequence) {
  PipelineFixture fx;
  auto run = [&](uint64_t seed) {
    ScoringModel model = fx.make_model(seed);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.lr = 1e-3;
    cfg.seed = seed;
    Trainer trainer(model, fx.news, cfg);
    std::vector<double> losses;
    for (int epoch = 0; epoch < 2; ++epoch)
      losses.push_back(trainer.train_epoch(fx.train_data.train, epoch));
    return losses;
  };
  std::vector<double> a = run(7), b = run(7), c = run(8);
  EXPECT_EQ(a, b);  // bit-identical
  EXPECT_NE(a, c);
}

TEST(Trainer, RunWritesLogsAndStopsOnPatience) {
  PipelineFixture fx;
  ScoringModel model = fx.make_model();
  testutil::TempDir out("trainer_out");
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.lr = 2e-3;
  cfg.max_epochs = 30;
  cfg.patience = 2;
  cfg.seed = 3;
  cfg.out_dir = out.path().string();
  Trainer trainer(model, fx.news, cfg);
  std::vector<std::string> vocab_tokens = fx.vocab.tokens();
  Trainer trainer2(model, fx.news, cfg, &vocab_tokens);
  TrainResult result = trainer2.run(fx.train_data.train, fx.val_data.impressions);
  ASSERT_GE(result.best_epoch, 0);
  int last_epoch = result.epochs.back().epoch;
  if (last_epoch < cfg.max_epochs - 1) {
    // stopped early: exactly patience epochs past the best
    EXPECT_EQ(last_epoch, result.best_epoch + cfg.patience);
  }
  EXPECT_TRUE(std::filesystem::exists(out.file("metrics.log")));
  EXPECT_TRUE(std::filesystem::exists(out.file("model.ckpt")));
  std::string log = testutil::read_file(out.file("metrics.log"));
  EXPECT_NE(log.find("epoch\ttrain_loss"), std::string::npos);
  EXPECT_NE(log.find("best_epoch="), std::string::npos);
}

TEST(Trainer, NonFiniteLossAborts) {
  PipelineFixture fx;
  ScoringModel model = fx.make_model();
  // poison a parameter so the forward pass yields NaN
  Tensor& w = model.params().get("cne.title.lstm_fw.w_in");
  w.at(0) = std::numeric_limits<real>::quiet_NaN();
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.seed = 1;
  Trainer trainer(model, fx.news, cfg);
  EXPECT_THROW(trainer.train_epoch(fx.train_data.train, 0), train_abort);
}

TEST(Checkpoint, RoundTripPreservesEvaluation) {
  PipelineFixture fx;
  ScoringModel model = fx.make_model();
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.lr = 2e-3;
  cfg.seed = 4;
  Trainer trainer(model, fx.news, cfg);
  trainer.train_epoch(fx.train_data.train, 0);
  MetricReport before = evaluate_model(model, fx.news, fx.val_data.impressions);

  testutil::TempDir out("ckpt");
  save_model(out.file("m.ckpt"), model, fx.vocab.tokens());
  Checkpoint ckpt = load_checkpoint(out.file("m.ckpt"));
  EXPECT_EQ(ckpt.vocab_tokens.size(), fx.vocab.size());
  EXPECT_EQ(ckpt.meta.at("ablation"), "full");

  ModelConfig restored_cfg = config_from_meta(ckpt);
  EXPECT_EQ(restored_cfg.hidden, fx.model_cfg.hidden);
  Rng rng(99);
  ScoringModel restored(restored_cfg, ckpt.vocab_tokens.size(), rng);
  load_into_store(ckpt, restored.params());
  MetricReport after = evaluate_model(restored, fx.news, fx.val_data.impressions);
  EXPECT_TRUE(before.near(after, 1e-6));
}

TEST(Checkpoint, AblatedModelOmitsUnusedParams) {
  PipelineFixture fx;
  ModelConfig cfg = fx.model_cfg;
  cfg.ablation = Ablation::sue_wo_gcn;
  Rng rng(1);
  ScoringModel model(cfg, fx.vocab.size(), rng);
  testutil::TempDir out("ckpt2");
  save_model(out.file("m.ckpt"), model, {});
  Checkpoint ckpt = load_checkpoint(out.file("m.ckpt"));
  for (const auto& [name, tensor] : ckpt.tensors)
    EXPECT_EQ(name.find("sue.gcn."), std::string::npos) << name;
  EXPECT_EQ(ckpt.meta.at("ablation"), "sue-wo-gcn");
}

TEST(Checkpoint, MismatchedArchitectureRejected) {
  PipelineFixture fx;
  ScoringModel full = fx.make_model();
  testutil::TempDir out("ckpt3");
  save_model(out.file("m.ckpt"), full, {});
  Checkpoint ckpt = load_checkpoint(out.file("m.ckpt"));

  ModelConfig ablated_cfg = fx.model_cfg;
  ablated_cfg.ablation = Ablation::cne_wo_cs;
  Rng rng(2);
  ScoringModel ablated(ablated_cfg, fx.vocab.size(), rng);
  EXPECT_THROW(load_into_store(ckpt, ablated.params()), config_error);

  ModelConfig wider = fx.model_cfg;
  wider.hidden = fx.model_cfg.hidden * 2;
  ScoringModel wide_model(wider, fx.vocab.size(), rng);
  try {
    load_into_store(ckpt, wide_model.params());
    FAIL() << "expected config_error";
  } catch (const config_error& e) {
    // names both shapes
    EXPECT_NE(std::string(e.what()).find("shape"), std::string::npos);
  }
}

TEST(ScoreImpressions, EmptyHistoryScoresZero) {
  PipelineFixture fx;
  ScoringModel model = fx.make_model();
  EvalImpression imp;
  imp.impression_id = "i";
  imp.user_id = "u";
  imp.candidates = {0, 1};
  imp.labels = {1, 0};
  std::vector<ScoredImpression> scored = score_impressions(model, fx.news, {imp});
  ASSERT_EQ(scored.size(), 1u);
  EXPECT_EQ(scored[0].scores[0], 0.0);
  EXPECT_EQ(scored[0].scores[1], 0.0);
}

TEST(ScoreImpressions, EvaluationIsDeterministic) {
  PipelineFixture fx;
  ScoringModel model = fx.make_model();
  MetricReport a = evaluate_model(model, fx.news, fx.val_data.impressions);
  MetricReport b = evaluate_model(model, fx.news, fx.val_data.impressions);
  EXPECT_TRUE(a.near(b, 0.0));
}
