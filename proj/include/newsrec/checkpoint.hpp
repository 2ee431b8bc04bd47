#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "newsrec/model.hpp"
#include "newsrec/params.hpp"

namespace newsrec {

// Checkpoint file layout (little-endian throughout):
//   8 bytes   magic "NRCKPT1\n"
//   u32       metadata entry count, then per entry: u32 key length, key
//             bytes, u32 value length, value bytes
//   u32       vocabulary token count, then per token: u32 length, bytes
//             (tokens in id order; empty for models built without text data)
//   u32       parameter count, then per parameter: u32 name length, name
//             bytes, u32 rank, u64 dims..., float32 payload (row-major)
static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

constexpr char kCheckpointMagic[8] = {'N', 'R', 'C', 'K', 'P', 'T', '1', '\n'};

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::string> vocab_tokens;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

namespace detail {

inline void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_u64(std::ostream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_str(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline uint32_t read_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline uint64_t read_u64(std::istream& in) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline std::string read_str(std::istream& in) {
  uint32_t n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path,
                            const std::map<std::string, std::string>& meta,
                            const std::vector<std::string>& vocab_tokens,
                            const ParamStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw train_abort(cat("cannot write checkpoint: ", path));
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::write_u32(out, static_cast<uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    detail::write_str(out, k);
    detail::write_str(out, v);
  }
  detail::write_u32(out, static_cast<uint32_t>(vocab_tokens.size()));
  for (const std::string& t : vocab_tokens) detail::write_str(out, t);
  detail::write_u32(out, static_cast<uint32_t>(store.count()));
  for (const Param& p : store.entries()) {
    detail::write_str(out, p.name);
    detail::write_u32(out, static_cast<uint32_t>(p.tensor.shape().size()));
    for (size_t d : p.tensor.shape()) detail::write_u64(out, d);
    std::vector<float> payload(p.tensor.size());
    for (size_t i = 0; i < payload.size(); ++i)
      payload[i] = static_cast<float>(p.tensor.at(i));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
  }
  if (!out) throw train_abort(cat("write failed for checkpoint: ", path));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error(cat("cannot open checkpoint: ", path));
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw config_error(cat("not a checkpoint file: ", path));
  Checkpoint ckpt;
  uint32_t meta_count = detail::read_u32(in);
  for (uint32_t i = 0; i < meta_count; ++i) {
    std::string k = detail::read_str(in);
    ckpt.meta[k] = detail::read_str(in);
  }
  uint32_t vocab_count = detail::read_u32(in);
  ckpt.vocab_tokens.reserve(vocab_count);
  for (uint32_t i = 0; i < vocab_count; ++i)
    ckpt.vocab_tokens.push_back(detail::read_str(in));
  uint32_t param_count = detail::read_u32(in);
  for (uint32_t i = 0; i < param_count; ++i) {
    std::string name = detail::read_str(in);
    uint32_t rank = detail::read_u32(in);
    std::vector<size_t> shape(rank);
    size_t total = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<size_t>(detail::read_u64(in));
      total *= shape[d];
    }
    std::vector<float> payload(total);
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(total * sizeof(float)));
    if (!in) throw config_error(cat("truncated checkpoint: ", path));
    Tensor t(shape);
    for (size_t j = 0; j < total; ++j) t.at(j) = static_cast<real>(payload[j]);
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

// ----------------------------- model glue -----------------------------

inline std::map<std::string, std::string> model_meta(const ModelConfig& cfg) {
  return {
      {"ablation", to_string(cfg.ablation)},
      {"embed_dim", std::to_string(cfg.embed_dim)},
      {"hidden", std::to_string(cfg.hidden)},
      {"attn_dim", std::to_string(cfg.attn_dim)},
      {"gcn_layers", std::to_string(cfg.gcn_layers)},
      {"title_len", std::to_string(cfg.title_len)},
      {"content_len", std::to_string(cfg.content_len)},
      {"history_cap", std::to_string(cfg.history_cap)},
  };
}

inline ModelConfig config_from_meta(const Checkpoint& ckpt) {
  auto get = [&](const std::string& key) -> std::string {
    auto it = ckpt.meta.find(key);
    if (it == ckpt.meta.end())
      throw config_error(cat("checkpoint missing metadata key: ", key));
    return it->second;
  };
  ModelConfig cfg;
  cfg.ablation = parse_ablation(get("ablation"));
  cfg.embed_dim = std::stoul(get("embed_dim"));
  cfg.hidden = std::stoul(get("hidden"));
  cfg.attn_dim = std::stoul(get("attn_dim"));
  cfg.gcn_layers = std::stoul(get("gcn_layers"));
  cfg.title_len = std::stoul(get("title_len"));
  cfg.content_len = std::stoul(get("content_len"));
  cfg.history_cap = std::stoul(get("history_cap"));
  cfg.dropout = 0;  // inference-time default; training overrides
  return cfg;
}

inline void save_model(const std::string& path, const ScoringModel& model,
                       const std::vector<std::string>& vocab_tokens) {
  save_checkpoint(path, model_meta(model.config()), vocab_tokens, model.params());
}

// Copies checkpoint tensors into the store. Parameter sets must match
// exactly, by name and by shape.
inline void load_into_store(const Checkpoint& ckpt, ParamStore& store) {
  if (ckpt.tensors.size() != store.count()) {
    throw config_error(cat("checkpoint has ", ckpt.tensors.size(),
                           " parameters, model expects ", store.count(),
                           " (ablation or architecture mismatch)"));
  }
  for (const auto& [name, tensor] : ckpt.tensors) {
    if (!store.has(name))
      throw config_error(cat("checkpoint parameter ", name, " not in model"));
    Tensor& dst = store.get(name);
    if (dst.shape() != tensor.shape()) {
      throw config_error(cat("checkpoint parameter ", name, " has shape ",
                             shape_str(tensor.shape()), ", model expects ",
                             shape_str(dst.shape())));
    }
    dst.data() = tensor.data();
  }
}

}  // namespace newsrec
