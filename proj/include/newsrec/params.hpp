#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "newsrec/rng.hpp"
#include "newsrec/tensor.hpp"

namespace newsrec {

struct Param {
  std::string name;
  Tensor tensor;
  // Row indices whose gradient is discarded before every optimizer step
  // (the embedding padding row stays pinned at zero this way).
  std::vector<size_t> frozen_rows;
};

// Named registry of every trainable tensor. Registration order is the
// canonical order for checkpointing and optimizer state.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t,
              std::vector<size_t> frozen_rows = {}) {
    if (index_.count(name))
      throw config_error(cat("param registered twice: ", name));
    t.set_requires_grad(true);
    index_[name] = params_.size();
    params_.push_back(Param{name, std::move(t), std::move(frozen_rows)});
    return params_.back().tensor;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Tensor& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw config_error(cat("unknown param: ", name));
    return params_[it->second].tensor;
  }

  const Tensor& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw config_error(cat("unknown param: ", name));
    return params_[it->second].tensor;
  }

  size_t count() const { return params_.size(); }
  size_t total_elements() const {
    size_t n = 0;
    for (const Param& p : params_) n += p.tensor.size();
    return n;
  }

  std::vector<Param>& entries() { return params_; }
  const std::vector<Param>& entries() const { return params_; }

  void zero_grads() {
    for (Param& p : params_) p.tensor.zero_grad();
  }

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, size_t> index_;
};

// ----------------------------- initializers -----------------------------

inline Tensor uniform_init(std::vector<size_t> shape, double lo, double hi, Rng& rng) {
  Tensor t(std::move(shape));
  for (size_t i = 0; i < t.size(); ++i)
    t.at(i) = static_cast<real>(rng.uniform(lo, hi));
  return t;
}

// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for a [fan_in x fan_out] matrix.
inline Tensor scaled_uniform_init(size_t fan_in, size_t fan_out, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return uniform_init({fan_in, fan_out}, -bound, bound, rng);
}

}  // namespace newsrec
