#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "newsrec/data.hpp"
#include "newsrec/model.hpp"
#include "newsrec/training.hpp"

namespace newsrec {

// Resolved run settings: config-file values overridden by command-line
// flags. The snapshot written next to every run's outputs reproduces the
// run when fed back via --config.
struct RunConfig {
  // paths
  std::string news;
  std::string behaviors;
  std::string val_behaviors;
  std::string embeddings;
  std::string checkpoint;
  std::string out;
  // data
  int k = 4;
  size_t history_cap = 50;
  size_t title_len = 32;
  size_t content_len = 128;
  // model
  size_t embed_dim = 300;
  size_t hidden = 128;
  size_t attn_dim = 200;
  size_t gcn_layers = 4;
  double dropout = 0.2;
  std::string ablation = "full";
  // optimization
  uint64_t seed = 0;
  size_t batch = 64;
  double lr = 1e-4;
  int max_epochs = 100;
  int patience = 5;
  double clip_norm = 5.0;

  DataConfig data_config() const {
    DataConfig d;
    d.title_len = title_len;
    d.content_len = content_len;
    d.history_cap = history_cap;
    d.negatives_per_positive = k;
    return d;
  }

  ModelConfig model_config() const {
    ModelConfig m;
    m.embed_dim = embed_dim;
    m.hidden = hidden;
    m.attn_dim = attn_dim;
    m.gcn_layers = gcn_layers;
    m.title_len = title_len;
    m.content_len = content_len;
    m.history_cap = history_cap;
    m.dropout = static_cast<real>(dropout);
    m.ablation = parse_ablation(ablation);
    return m;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.batch_size = batch;
    t.lr = lr;
    t.patience = patience;
    t.max_epochs = max_epochs;
    t.clip_norm = clip_norm;
    t.seed = seed;
    t.out_dir = out;
    return t;
  }
};

namespace detail {

inline bool assign_config_key(RunConfig& cfg, const std::string& key,
                              const std::string& value) {
  auto to_size = [&] { return static_cast<size_t>(std::stoull(value)); };
  if (key == "news") cfg.news = value;
  else if (key == "behaviors") cfg.behaviors = value;
  else if (key == "val-behaviors") cfg.val_behaviors = value;
  else if (key == "embeddings") cfg.embeddings = value;
  else if (key == "checkpoint") cfg.checkpoint = value;
  else if (key == "out") cfg.out = value;
  else if (key == "k") cfg.k = std::stoi(value);
  else if (key == "history-cap") cfg.history_cap = to_size();
  else if (key == "title-len") cfg.title_len = to_size();
  else if (key == "content-len") cfg.content_len = to_size();
  else if (key == "embed-dim") cfg.embed_dim = to_size();
  else if (key == "hidden") cfg.hidden = to_size();
  else if (key == "attn-dim") cfg.attn_dim = to_size();
  else if (key == "gcn-layers") cfg.gcn_layers = to_size();
  else if (key == "dropout") cfg.dropout = std::stod(value);
  else if (key == "ablation") cfg.ablation = value;
  else if (key == "seed") cfg.seed = std::stoull(value);
  else if (key == "batch") cfg.batch = to_size();
  else if (key == "lr") cfg.lr = std::stod(value);
  else if (key == "max-epochs") cfg.max_epochs = std::stoi(value);
  else if (key == "patience") cfg.patience = std::stoi(value);
  else if (key == "clip-norm") cfg.clip_norm = std::stod(value);
  else return false;
  return true;
}

}  // namespace detail

// key=value lines, '#' comments, blank lines ignored.
inline void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error(cat("cannot open config file: ", path));
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    size_t begin = line.find_first_not_of(" \t");
    if (begin == std::string::npos) continue;
    size_t end = line.find_last_not_of(" \t");
    line = line.substr(begin, end - begin + 1);
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error(cat(path, ":", line_no, ": expected key=value"));
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    try {
      if (!detail::assign_config_key(cfg, key, value))
        throw config_error(cat(path, ":", line_no, ": unknown key '", key, "'"));
    } catch (const std::invalid_argument&) {
      throw config_error(cat(path, ":", line_no, ": bad value for '", key, "'"));
    }
  }
}

inline std::string config_snapshot(const RunConfig& cfg, const std::string& command) {
  std::ostringstream out;
  out << "# resolved run configuration (" << command << ")\n";
  out << "news=" << cfg.news << "\n";
  out << "behaviors=" << cfg.behaviors << "\n";
  out << "val-behaviors=" << cfg.val_behaviors << "\n";
  out << "embeddings=" << cfg.embeddings << "\n";
  out << "checkpoint=" << cfg.checkpoint << "\n";
  out << "out=" << cfg.out << "\n";
  out << "k=" << cfg.k << "\n";
  out << "history-cap=" << cfg.history_cap << "\n";
  out << "title-len=" << cfg.title_len << "\n";
  out << "content-len=" << cfg.content_len << "\n";
  out << "embed-dim=" << cfg.embed_dim << "\n";
  out << "hidden=" << cfg.hidden << "\n";
  out << "attn-dim=" << cfg.attn_dim << "\n";
  out << "gcn-layers=" << cfg.gcn_layers << "\n";
  out << "dropout=" << cfg.dropout << "\n";
  out << "ablation=" << cfg.ablation << "\n";
  out << "seed=" << cfg.seed << "\n";
  out << "batch=" << cfg.batch << "\n";
  out << "lr=" << cfg.lr << "\n";
  out << "max-epochs=" << cfg.max_epochs << "\n";
  out << "patience=" << cfg.patience << "\n";
  out << "clip-norm=" << cfg.clip_norm << "\n";
  return out.str();
}

inline void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw config_error(cat("missing required ", what, " path"));
  if (!std::filesystem::exists(path))
    throw config_error(cat(what, " file not found: ", path));
}

}  // namespace newsrec
