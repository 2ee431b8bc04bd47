#pragma once

#include <cmath>
#include <vector>

#include "newsrec/params.hpp"

namespace newsrec {

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
inline double clip_global_norm(ParamStore& store, double max_norm) {
  double sq = 0.0;
  for (Param& p : store.entries()) {
    if (!p.tensor.grad_allocated()) continue;
    for (real g : p.tensor.grad()) sq += static_cast<double>(g) * g;
  }
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    real scale = static_cast<real>(max_norm / norm);
    for (Param& p : store.entries()) {
      if (!p.tensor.grad_allocated()) continue;
      for (real& g : p.tensor.grad()) g *= scale;
    }
  }
  return norm;
}

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers align with the store's
// registration order; the step counter increments once per call.
class Adam {
 public:
  Adam(ParamStore& store, AdamConfig cfg) : store_(&store), cfg_(cfg) {
    m_.resize(store.count());
    v_.resize(store.count());
    for (size_t i = 0; i < store.count(); ++i) {
      size_t n = store.entries()[i].tensor.size();
      m_[i].assign(n, real(0));
      v_[i].assign(n, real(0));
    }
  }

  long step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

  void step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (size_t pi = 0; pi < store_->count(); ++pi) {
      Param& p = store_->entries()[pi];
      if (!p.tensor.grad_allocated()) continue;
      std::vector<real>& g = p.tensor.grad();
      for (size_t row : p.frozen_rows) {
        size_t c = p.tensor.cols();
        for (size_t j = 0; j < c; ++j) g[row * c + j] = real(0);
      }
      for (size_t i = 0; i < g.size(); ++i) {
        if (std::isnan(g[i]))
          throw train_abort(cat("NaN gradient in parameter ", p.name,
                                " at element ", i));
      }
      std::vector<real>& val = p.tensor.data();
      std::vector<real>& m = m_[pi];
      std::vector<real>& v = v_[pi];
      for (size_t i = 0; i < g.size(); ++i) {
        double gi = g[i];
        double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        m[i] = static_cast<real>(mi);
        v[i] = static_cast<real>(vi);
        double update = cfg_.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps);
        val[i] = static_cast<real>(val[i] - update);
      }
    }
  }

 private:
  ParamStore* store_;
  AdamConfig cfg_;
  long step_ = 0;
  std::vector<std::vector<real>> m_, v_;
};

}  // namespace newsrec
