// Command-line front end: train, evaluate, inspect-attention, synth.
// Exit codes: 0 ok, 2 configuration or path problems, 3 runtime aborts.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include "newsrec/checkpoint.hpp"
#include "newsrec/config.hpp"
#include "newsrec/inspect.hpp"
#include "newsrec/synthetic.hpp"
#include "newsrec/training.hpp"

namespace fs = std::filesystem;
using namespace newsrec;

namespace {

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw train_abort(cat("cannot write ", path));
  out << content;
}

void write_snapshot(const RunConfig& cfg, const std::string& command) {
  if (cfg.out.empty()) return;
  fs::create_directories(cfg.out);
  write_text((fs::path(cfg.out) / "config.snapshot").string(),
             config_snapshot(cfg, command));
}

struct LoadedCheckpoint {
  Checkpoint ckpt;
  ModelConfig model_cfg;
  Vocabulary vocab;
};

LoadedCheckpoint open_checkpoint(const RunConfig& cfg) {
  require_file(cfg.checkpoint, "checkpoint");
  LoadedCheckpoint loaded{load_checkpoint(cfg.checkpoint), {}, {}};
  loaded.model_cfg = config_from_meta(loaded.ckpt);
  if (loaded.ckpt.vocab_tokens.empty())
    throw config_error(cat("checkpoint ", cfg.checkpoint,
                           " carries no vocabulary; cannot tokenize news"));
  loaded.vocab = Vocabulary::from_tokens(loaded.ckpt.vocab_tokens);
  return loaded;
}

// architecture flags the user passed explicitly must agree with the
// checkpoint metadata
void check_compat(const LoadedCheckpoint& loaded, const RunConfig& cfg,
                  const std::set<std::string>& explicit_flags) {
  const ModelConfig& meta = loaded.model_cfg;
  auto reject = [](const std::string& what, const std::string& requested,
                   const std::string& stored) {
    throw config_error(cat("checkpoint mismatch: requested ", what, "=", requested,
                           " but checkpoint holds ", what, "=", stored));
  };
  if (explicit_flags.count("--ablation") && parse_ablation(cfg.ablation) != meta.ablation)
    reject("ablation", cfg.ablation, to_string(meta.ablation));
  auto check_dim = [&](const char* flag, size_t requested, size_t stored,
                       const char* name) {
    if (explicit_flags.count(flag) && requested != stored)
      reject(name, std::to_string(requested), std::to_string(stored));
  };
  check_dim("--hidden", cfg.hidden, meta.hidden, "hidden");
  check_dim("--attn-dim", cfg.attn_dim, meta.attn_dim, "attn-dim");
  check_dim("--embed-dim", cfg.embed_dim, meta.embed_dim, "embed-dim");
  check_dim("--gcn-layers", cfg.gcn_layers, meta.gcn_layers, "gcn-layers");
  check_dim("--title-len", cfg.title_len, meta.title_len, "title-len");
  check_dim("--content-len", cfg.content_len, meta.content_len, "content-len");
  check_dim("--history-cap", cfg.history_cap, meta.history_cap, "history-cap");
}

ScoringModel restore_model(const LoadedCheckpoint& loaded) {
  Rng rng(0);
  ScoringModel model(loaded.model_cfg, loaded.vocab.size(), rng);
  load_into_store(loaded.ckpt, model.params());
  return model;
}

int run_train(const RunConfig& cfg) {
  require_file(cfg.news, "news");
  require_file(cfg.behaviors, "behaviors");
  require_file(cfg.val_behaviors, "validation behaviors");
  require_file(cfg.embeddings, "embeddings");
  if (cfg.out.empty()) throw config_error("train needs --out");
  write_snapshot(cfg, "train");

  Vocabulary vocab;
  DataConfig data_cfg = cfg.data_config();
  NewsTable news = parse_news_tsv(cfg.news, vocab, data_cfg, true);
  log_info(cat("parsed ", news.articles.size(), " news, vocabulary ", vocab.size()));

  Rng emb_rng(cfg.seed, 4);
  EmbeddingLoadReport emb_report;
  Tensor embeddings =
      load_embeddings(cfg.embeddings, vocab, cfg.embed_dim, emb_rng, &emb_report);
  log_info(cat("embedding coverage ", emb_report.matched, "/",
               emb_report.matched + emb_report.missing));

  Rng neg_rng(cfg.seed, 1);
  BehaviorData train_data = parse_behaviors_tsv(cfg.behaviors, news, data_cfg, neg_rng);
  BehaviorData val_data = parse_behaviors_tsv(cfg.val_behaviors, news, data_cfg, neg_rng);
  log_info(cat("train samples ", train_data.train.size(), ", validation impressions ",
               val_data.impressions.size()));
  if (train_data.stats.unknown_candidates || train_data.stats.unknown_history_ids)
    log_warn(cat("skipped ", train_data.stats.unknown_candidates,
                 " unknown candidates, ", train_data.stats.unknown_history_ids,
                 " unknown history ids"));

  Rng init_rng(cfg.seed, 0);
  ScoringModel model(cfg.model_config(), vocab.size(), init_rng, &embeddings);
  log_info(cat("model parameters ", model.params().total_elements()));

  std::vector<std::string> vocab_tokens = vocab.tokens();
  Trainer trainer(model, news, cfg.train_config(), &vocab_tokens);
  std::cout << "epoch\ttrain_loss\tval_auc\tval_mrr\tval_ndcg5\tval_ndcg10\tseconds\n";
  TrainResult result = trainer.run(train_data.train, val_data.impressions, &std::cout);
  std::cout << "best_epoch=" << result.best_epoch << "\nbest_val_auc=" << result.best_auc
            << "\ncheckpoint=" << result.checkpoint_path << "\n";
  return 0;
}

int run_evaluate(const RunConfig& cfg, const std::set<std::string>& explicit_flags) {
  require_file(cfg.news, "news");
  require_file(cfg.behaviors, "behaviors");
  LoadedCheckpoint loaded = open_checkpoint(cfg);
  check_compat(loaded, cfg, explicit_flags);
  ScoringModel model = restore_model(loaded);

  DataConfig data_cfg;
  data_cfg.title_len = loaded.model_cfg.title_len;
  data_cfg.content_len = loaded.model_cfg.content_len;
  data_cfg.history_cap = loaded.model_cfg.history_cap;
  NewsTable news = parse_news_tsv(cfg.news, loaded.vocab, data_cfg, false);
  Rng rng(cfg.seed, 1);
  BehaviorData data = parse_behaviors_tsv(cfg.behaviors, news, data_cfg, rng);
  if (data.impressions.empty()) throw config_error("no usable impressions to evaluate");

  MetricReport report = evaluate_model(model, news, data.impressions);
  std::cout << report.text() << "\n" << report.kv();
  if (!cfg.out.empty()) {
    write_snapshot(cfg, "evaluate");
    write_text((fs::path(cfg.out) / "report.txt").string(), report.text());
    write_text((fs::path(cfg.out) / "report.kv").string(), report.kv());
  }
  return 0;
}

int run_inspect(const RunConfig& cfg, const std::string& news_id,
                const std::string& user_id, const std::string& candidate_id) {
  if (news_id.empty() == user_id.empty())
    throw config_error("inspect-attention needs exactly one of --news-id or --user-id");
  require_file(cfg.news, "news");
  LoadedCheckpoint loaded = open_checkpoint(cfg);
  ScoringModel model = restore_model(loaded);
  DataConfig data_cfg;
  data_cfg.title_len = loaded.model_cfg.title_len;
  data_cfg.content_len = loaded.model_cfg.content_len;
  data_cfg.history_cap = loaded.model_cfg.history_cap;
  NewsTable news = parse_news_tsv(cfg.news, loaded.vocab, data_cfg, false);

  if (!news_id.empty()) {
    const NewsArticle* article = news.find(news_id);
    if (!article) throw config_error(cat("news id not found: ", news_id));
    NewsEncoding enc = model.encode_articles(nullptr, {article}, false, nullptr, true);
    std::cout << render_news_attention(*article, loaded.vocab, combined_attention(enc));
    return 0;
  }

  require_file(cfg.behaviors, "behaviors");
  Rng rng(cfg.seed, 1);
  BehaviorData data = parse_behaviors_tsv(cfg.behaviors, news, data_cfg, rng);
  const EvalImpression* found = nullptr;
  for (const EvalImpression& imp : data.impressions)
    if (imp.user_id == user_id) {
      found = &imp;
      break;
    }
  if (!found) throw config_error(cat("user id not found: ", user_id));
  if (found->history.empty())
    throw config_error(cat("user ", user_id, " has no usable history"));
  ClusterGraph graph = build_cluster_graph(history_categories(news, found->history));

  if (candidate_id.empty()) {
    std::cout << render_user_graph(user_id, news, found->history, graph);
    return 0;
  }
  const NewsArticle* candidate = news.find(candidate_id);
  if (!candidate) throw config_error(cat("candidate id not found: ", candidate_id));
  std::vector<const NewsArticle*> articles;
  for (int h : found->history) articles.push_back(&news.articles[h]);
  articles.push_back(candidate);
  NewsEncoding enc = model.encode_articles(nullptr, articles);
  Tensor history_vecs = slice_rows(nullptr, enc.vecs, 0, found->history.size());
  Tensor cand_vec = slice_rows(nullptr, enc.vecs, found->history.size(), 1);
  Tensor nodes = model.user_nodes(nullptr, history_vecs, graph);
  UserEncoding user = model.user_from_nodes(nullptr, nodes, graph, cand_vec, true);
  std::cout << render_user_graph(user_id, news, found->history, graph, &user, candidate);
  std::cout << "score " << ScoringModel::score(nullptr, cand_vec, user.vec).at(0) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"collaborative news encoding / structural user encoding trainer"};
  app.require_subcommand(1);

  RunConfig cfg;
  // the config file loads first so command-line flags override it
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    try {
      if (arg == "--config" && i + 1 < argc) {
        apply_config_file(cfg, argv[i + 1]);
      } else if (arg.rfind("--config=", 0) == 0) {
        apply_config_file(cfg, arg.substr(9));
      }
    } catch (const config_error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
  }

  std::string config_path, news_id, user_id, candidate_id;
  SyntheticSpec synth_spec;
  std::string synth_out;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--news", cfg.news, "news TSV path");
    sub->add_option("--behaviors", cfg.behaviors, "behaviors TSV path");
    sub->add_option("--out", cfg.out, "output directory");
    sub->add_option("--seed", cfg.seed, "RNG seed");
    sub->add_option("--ablation", cfg.ablation,
                    "full|cne-wo-cs|cne-wo-ca|sue-wo-gcn|sue-wo-hca");
    sub->add_option("--hidden", cfg.hidden, "LSTM hidden size per direction");
    sub->add_option("--attn-dim", cfg.attn_dim, "attention projection size");
    sub->add_option("--embed-dim", cfg.embed_dim, "word embedding size");
    sub->add_option("--gcn-layers", cfg.gcn_layers, "graph conv layers");
    sub->add_option("--history-cap", cfg.history_cap, "max history length");
    sub->add_option("--title-len", cfg.title_len, "title tokens after padding");
    sub->add_option("--content-len", cfg.content_len, "content tokens after padding");
  };

  CLI::App* train = app.add_subcommand("train", "train a model");
  add_common(train);
  train->add_option("--val-behaviors", cfg.val_behaviors, "validation behaviors TSV");
  train->add_option("--embeddings", cfg.embeddings, "pretrained word vectors");
  train->add_option("--k", cfg.k, "negatives per positive");
  train->add_option("--batch", cfg.batch, "batch size");
  train->add_option("--lr", cfg.lr, "learning rate");
  train->add_option("--dropout", cfg.dropout, "dropout rate");
  train->add_option("--max-epochs", cfg.max_epochs, "epoch cap");
  train->add_option("--patience", cfg.patience, "early stopping patience");
  train->add_option("--clip-norm", cfg.clip_norm, "gradient clipping norm");

  CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint");
  add_common(evaluate);
  evaluate->add_option("--checkpoint", cfg.checkpoint, "checkpoint path");

  CLI::App* inspect = app.add_subcommand("inspect-attention",
                                         "dump attention weights or a user graph");
  add_common(inspect);
  inspect->add_option("--checkpoint", cfg.checkpoint, "checkpoint path");
  inspect->add_option("--news-id", news_id, "article to inspect");
  inspect->add_option("--user-id", user_id, "user whose cluster graph to dump");
  inspect->add_option("--candidate-id", candidate_id,
                      "candidate news for the attention query");

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--users", synth_spec.users, "user count");
  synth->add_option("--articles", synth_spec.news, "news count");
  synth->add_option("--categories", synth_spec.categories, "category count");
  synth->add_option("--train-impressions", synth_spec.train_impressions_per_user,
                    "train impressions per user");
  synth->add_option("--val-impressions", synth_spec.val_impressions_per_user,
                    "validation impressions per user");
  synth->add_option("--candidates", synth_spec.candidates_per_impression,
                    "candidates per impression");
  synth->add_option("--history-min", synth_spec.history_min, "min history length");
  synth->add_option("--history-max", synth_spec.history_max, "max history length");
  synth->add_option("--noise", synth_spec.label_noise, "label flip probability");
  synth->add_option("--embed-dim", synth_spec.embed_dim, "embedding size");
  synth->add_option("--seed", synth_spec.seed, "generator seed");

  try {
    app.parse(argc, argv);
    if (train->parsed()) return run_train(cfg);
    if (evaluate->parsed() || inspect->parsed()) {
      std::set<std::string> explicit_flags;
      CLI::App* sub = evaluate->parsed() ? evaluate : inspect;
      for (const CLI::Option* opt : sub->get_options())
        if (opt->count() > 0) explicit_flags.insert(opt->get_name());
      if (evaluate->parsed()) return run_evaluate(cfg, explicit_flags);
      return run_inspect(cfg, news_id, user_id, candidate_id);
    }
    if (synth->parsed()) {
      SyntheticPaths paths = write_synthetic_mind(synth_spec, synth_out);
      std::cout << "news=" << paths.news_tsv << "\nbehaviors=" << paths.train_behaviors_tsv
                << "\nval-behaviors=" << paths.val_behaviors_tsv
                << "\nembeddings=" << paths.embeddings_txt << "\n";
      return 0;
    }
    return 2;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const data_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const train_abort& e) {
    std::cerr << "aborted: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "aborted: " << e.what() << "\n";
    return 3;
  }
}
