#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "newsrec/common.hpp"
#include "newsrec/rng.hpp"

namespace newsrec {

// Reverse-mode tape. Ops append their backward rules in forward order;
// backward() replays them in reverse, accumulating gradients additively,
// then drops the recorded graph.
class Tape {
 public:
  void record(std::function<void()> backward_fn) {
    ops_.push_back(std::move(backward_fn));
  }

  void backward() {
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
  }

  size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

 private:
  std::vector<std::function<void()>> ops_;
};

// Dense row-major tensor handle. Copies share storage (and gradient), so a
// tensor captured by a backward closure aliases the buffers the optimizer
// later reads. Gradient buffers are allocated lazily on first accumulation.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<size_t> shape, bool requires_grad = false)
      : shape_(std::move(shape)),
        st_(std::make_shared<Storage>()),
        requires_grad_(requires_grad) {
    st_->value.assign(count(shape_), real(0));
  }

  static Tensor zeros(std::vector<size_t> shape) { return Tensor(std::move(shape)); }

  static Tensor scalar(real v) {
    Tensor t({1});
    t.data()[0] = v;
    return t;
  }

  static Tensor from(std::vector<size_t> shape, std::vector<real> values) {
    if (count(shape) != values.size()) {
      throw dim_error(cat("tensor init: shape ", shape_str(shape), " expects ",
                          count(shape), " values, got ", values.size()));
    }
    Tensor t(std::move(shape));
    t.st_->value = std::move(values);
    return t;
  }

  bool defined() const { return st_ != nullptr; }
  const std::vector<size_t>& shape() const { return shape_; }
  size_t size() const { return st_ ? st_->value.size() : 0; }

  // 2-D view of the shape; 1-D tensors count as a single row.
  size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
  size_t cols() const {
    if (shape_.empty()) return 0;
    return shape_.size() == 2 ? shape_[1] : shape_[0];
  }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool v) { requires_grad_ = v; }

  std::vector<real>& data() const { return st_->value; }
  real& at(size_t i) const { return st_->value[i]; }
  real& at(size_t r, size_t c) const { return st_->value[r * cols() + c]; }

  bool grad_allocated() const { return st_ && !st_->grad.empty(); }

  std::vector<real>& grad() const {
    if (st_->grad.empty()) st_->grad.assign(st_->value.size(), real(0));
    return st_->grad;
  }

  void zero_grad() const {
    if (st_ && !st_->grad.empty())
      std::fill(st_->grad.begin(), st_->grad.end(), real(0));
  }

  // Same storage, detached from gradient flow.
  Tensor detached() const {
    Tensor t = *this;
    t.requires_grad_ = false;
    return t;
  }

  Tensor clone() const {
    Tensor t(shape_, requires_grad_);
    t.st_->value = st_->value;
    return t;
  }

 private:
  struct Storage {
    std::vector<real> value;
    std::vector<real> grad;
  };

  static size_t count(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

  std::vector<size_t> shape_;
  std::shared_ptr<Storage> st_;
  bool requires_grad_ = false;
};

namespace detail {

using EMat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

inline ECMap value_map(const Tensor& t) {
  return ECMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
               static_cast<Eigen::Index>(t.cols()));
}

inline EMap value_map_mut(const Tensor& t) {
  return EMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
              static_cast<Eigen::Index>(t.cols()));
}

inline EMap grad_map(const Tensor& t) {
  return EMap(t.grad().data(), static_cast<Eigen::Index>(t.rows()),
              static_cast<Eigen::Index>(t.cols()));
}

inline bool track(const Tape* tape, const Tensor& a) {
  return tape != nullptr && a.requires_grad();
}

inline bool track(const Tape* tape, const Tensor& a, const Tensor& b) {
  return tape != nullptr && (a.requires_grad() || b.requires_grad());
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw dim_error(cat(op, ": shape mismatch ", shape_str(a.shape()), " vs ",
                        shape_str(b.shape())));
  }
}

}  // namespace detail

// ----------------------------- linear algebra -----------------------------

inline Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows()) {
    throw dim_error(cat("matmul: incompatible shapes ", shape_str(a.shape()),
                        " vs ", shape_str(b.shape())));
  }
  Tensor out({a.rows(), b.cols()});
  detail::value_map_mut(out) = detail::value_map(a) * detail::value_map(b);
  if (detail::track(tape, a, b)) {
    out.set_requires_grad(true);
    tape->record([a, b, out]() {
      if (a.requires_grad())
        detail::grad_map(a) += detail::grad_map(out) * detail::value_map(b).transpose();
      if (b.requires_grad())
        detail::grad_map(b) += detail::value_map(a).transpose() * detail::grad_map(out);
    });
  }
  return out;
}

inline Tensor transpose(Tape* tape, const Tensor& a) {
  if (a.shape().size() != 2) {
    throw dim_error(cat("transpose: need 2-d tensor, got ", shape_str(a.shape())));
  }
  Tensor out({a.cols(), a.rows()});
  detail::value_map_mut(out) = detail::value_map(a).transpose();
  if (detail::track(tape, a)) {
    out.set_requires_grad(true);
    tape->record([a, out]() {
      detail::grad_map(a) += detail::grad_map(out).transpose();
    });
  }
  return out;
}

// Row-wise dot product of two equally shaped matrices -> [rows x 1].
inline Tensor rowwise_dot(Tape* tape, const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "rowwise_dot");
  size_t r = a.rows(), c = a.cols();
  Tensor out({r, 1});
  for (size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (size_t j = 0; j < c; ++j)
      acc += static_cast<double>(a.at(i, j)) * static_cast<double>(b.at(i, j));
    out.at(i, 0) = static_cast<real>(acc);
  }
  if (detail::track(tape, a, b)) {
    out.set_requires_grad(true);
    tape->record([a, b, out, r, c]() {
      for (size_t i = 0; i < r; ++i) {
        real g = out.grad()[i];
        if (a.requires_grad())
          for (size_t j = 0; j < c; ++j) a.grad()[i * c + j] += g * b.at(i, j);
        if (b.requires_grad())
          for (size_t j = 0; j < c; ++j) b.grad()[i * c + j] += g * a.at(i, j);
      }
    });
  }
  return out;
}

// ----------------------------- elementwise -----------------------------

inline Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  Tensor out(a.shape());
  const size_t n = a.size();
  for (size_t i = 0; i < n; ++i) out.at(i) = a.at(i) + b.at(i);
  if (detail::track(tape, a, b)) {
    out.set_requires_grad(true);
    tape->record([a, b, out, n]() {
      if (a.requires_grad())
        for (size_t i = 0; i < n; ++i) a.grad()[i] += out.grad()[i];
      if (b.requires_grad())
        for (size_t i = 0; i < n; ++i) b.grad()[i] += out.grad()[i];
    });
  }
  return out;
}

inline Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor out(a.shape());
  const size_t n = a.size();
  for (size_t i = 0; i < n; ++i) out.at(i) = a.at(i) - b.at(i);
  if (detail::track(tape, a, b)) {
    out.set_requires_grad(true);
    tape->record([a, b, out, n]() {
      if (a.requires_grad())
        for (size_t i = 0; i < n; ++i) a.grad()[i] += out.grad()[i];
      if (b.requires_grad())
        for (size_t i = 0; i < n; ++i) b.grad()[i] -= out.grad()[i];
    });
  }
  return out;
}

inline Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor out(a.shape());
  const size_t n = a.size();
  for (size_t i = 0; i < n; ++i) out.at(i) = a.at(i) * b.at(i);
  if (detail::track(tape, a, b)) {
    out.set_requires_grad(true);
    tape->record([a, b, out, n]() {
      if (a.requires_grad())
        for (size_t i = 0; i < n; ++i) a.grad()[i] += out.grad()[i] * b.at(i);
      if (b.requires_grad())
        for (size_t i = 0; i < n; ++i) b.grad()[i] += out.grad()[i] * a.at(i);
    });
  }
  return out;
}

inline Tensor sigmoid(Tape* tape, const Tensor& x) {
  Tensor out(x.shape());
  const size_t n = x.size();
  for (size_t i = 0; i < n; ++i) {
    real v = x.at(i);
    out.at(i) = v >= real(0) ? real(1) / (real(1) + std::exp(-v))
                             : std::exp(v) / (real(1) + std::exp(v));
  }
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    tape->record([x, out, n]() {
      for (size_t i = 0; i < n; ++i) {
        real s = out.at(i);
        x.grad()[i] += out.grad()[i] * s * (real(1) - s);
      }
    });
  }
  return out;
}

inline Tensor tanh(Tape* tape, const Tensor& x) {
  Tensor out(x.shape());
  const size_t n = x.size();
  for (size_t i = 0; i < n; ++i) out.at(i) = std::tanh(x.at(i));
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    tape->record([x, out, n]() {
      for (size_t i = 0; i < n; ++i) {
        real t = out.at(i);
        x.grad()[i] += out.grad()[i] * (real(1) - t * t);
      }
    });
  }
  return out;
}

inline Tensor relu(Tape* tape, const Tensor& x) {
  Tensor out(x.shape());
  const size_t n = x.size();
  for (size_t i = 0; i < n; ++i) out.at(i) = x.at(i) > real(0) ? x.at(i) : real(0);
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    tape->record([x, out, n]() {
      for (size_t i = 0; i < n; ++i)
        if (x.at(i) > real(0)) x.grad()[i] += out.grad()[i];
    });
  }
  return out;
}

inline Tensor exp(Tape* tape, const Tensor& x) {
  Tensor out(x.shape());
  const size_t n = x.size();
  for (size_t i = 0; i < n; ++i) out.at(i) = std::exp(x.at(i));
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    tape->record([x, out, n]() {
      for (size_t i = 0; i < n; ++i) x.grad()[i] += out.grad()[i] * out.at(i);
    });
  }
  return out;
}

inline Tensor log(Tape* tape, const Tensor& x) {
  Tensor out(x.shape());
  const size_t n = x.size();
  for (size_t i = 0; i < n; ++i) out.at(i) = std::log(x.at(i));
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    tape->record([x, out, n]() {
      for (size_t i = 0; i < n; ++i) x.grad()[i] += out.grad()[i] / x.at(i);
    });
  }
  return out;
}

inline Tensor add_scalar(Tape* tape, const Tensor& x, real c) {
  Tensor out(x.shape());
  const size_t n = x.size();
  for (size_t i = 0; i < n; ++i) out.at(i) = x.at(i) + c;
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    tape->record([x, out, n]() {
      for (size_t i = 0; i < n; ++i) x.grad()[i] += out.grad()[i];
    });
  }
  return out;
}

inline Tensor mul_scalar(Tape* tape, const Tensor& x, real c) {
  Tensor out(x.shape());
  const size_t n = x.size();
  for (size_t i = 0; i < n; ++i) out.at(i) = x.at(i) * c;
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    tape->record([x, out, n, c]() {
      for (size_t i = 0; i < n; ++i) x.grad()[i] += out.grad()[i] * c;
    });
  }
  return out;
}

// ----------------------------- broadcasts -----------------------------

// m[i,j] + v[j]; v is [cols] or [1 x cols].
inline Tensor add_rowvec(Tape* tape, const Tensor& m, const Tensor& v) {
  if (v.rows() != 1 || v.cols() != m.cols()) {
    throw dim_error(cat("add_rowvec: ", shape_str(m.shape()), " vs ",
                        shape_str(v.shape())));
  }
  size_t r = m.rows(), c = m.cols();
  Tensor out({r, c});
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) out.at(i, j) = m.at(i, j) + v.at(j);
  if (detail::track(tape, m, v)) {
    out.set_requires_grad(true);
    tape->record([m, v, out, r, c]() {
      if (m.requires_grad())
        for (size_t i = 0; i < r * c; ++i) m.grad()[i] += out.grad()[i];
      if (v.requires_grad())
        for (size_t i = 0; i < r; ++i)
          for (size_t j = 0; j < c; ++j) v.grad()[j] += out.grad()[i * c + j];
    });
  }
  return out;
}

// m[i,j] * s[i]; s is [rows] or [rows x 1].
inline Tensor mul_colvec(Tape* tape, const Tensor& m, const Tensor& s) {
  if (s.size() != m.rows() || (s.shape().size() == 2 && s.cols() != 1)) {
    throw dim_error(cat("mul_colvec: ", shape_str(m.shape()), " vs ",
                        shape_str(s.shape())));
  }
  size_t r = m.rows(), c = m.cols();
  Tensor out({r, c});
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) out.at(i, j) = m.at(i, j) * s.at(i);
  if (detail::track(tape, m, s)) {
    out.set_requires_grad(true);
    tape->record([m, s, out, r, c]() {
      for (size_t i = 0; i < r; ++i) {
        if (m.requires_grad())
          for (size_t j = 0; j < c; ++j)
            m.grad()[i * c + j] += out.grad()[i * c + j] * s.at(i);
        if (s.requires_grad()) {
          real acc = 0;
          for (size_t j = 0; j < c; ++j)
            acc += out.grad()[i * c + j] * m.at(i, j);
          s.grad()[i] += acc;
        }
      }
    });
  }
  return out;
}

// ----------------------------- shape ops -----------------------------

inline Tensor concat(Tape* tape, const std::vector<Tensor>& parts, size_t axis) {
  if (parts.empty()) throw dim_error("concat: no inputs");
  const bool two_d = parts[0].shape().size() == 2;
  for (const Tensor& p : parts)
    if ((p.shape().size() == 2) != two_d) throw dim_error("concat: mixed ranks");
  if (axis > (two_d ? 1u : 0u)) {
    throw dim_error(cat("concat: axis ", axis, " out of range for ",
                        shape_str(parts[0].shape())));
  }

  Tensor out;
  if (!two_d) {
    size_t total = 0;
    for (const Tensor& p : parts) total += p.size();
    out = Tensor({total});
    size_t off = 0;
    for (const Tensor& p : parts) {
      std::copy(p.data().begin(), p.data().end(), out.data().begin() + off);
      off += p.size();
    }
  } else if (axis == 0) {
    size_t rows = 0;
    const size_t cols = parts[0].cols();
    for (const Tensor& p : parts) {
      if (p.cols() != cols)
        throw dim_error(cat("concat: ragged cols ", shape_str(p.shape()),
                            " vs ", shape_str(parts[0].shape())));
      rows += p.rows();
    }
    out = Tensor({rows, cols});
    size_t row_off = 0;
    for (const Tensor& p : parts) {
      std::copy(p.data().begin(), p.data().end(),
                out.data().begin() + row_off * cols);
      row_off += p.rows();
    }
  } else {
    const size_t rows = parts[0].rows();
    size_t cols = 0;
    for (const Tensor& p : parts) {
      if (p.rows() != rows)
        throw dim_error(cat("concat: ragged rows ", shape_str(p.shape()),
                            " vs ", shape_str(parts[0].shape())));
      cols += p.cols();
    }
    out = Tensor({rows, cols});
    size_t col_off = 0;
    for (const Tensor& p : parts) {
      for (size_t i = 0; i < rows; ++i)
        std::copy(p.data().begin() + i * p.cols(),
                  p.data().begin() + (i + 1) * p.cols(),
                  out.data().begin() + i * cols + col_off);
      col_off += p.cols();
    }
  }

  bool any_grad = false;
  for (const Tensor& p : parts) any_grad |= p.requires_grad();
  if (tape && any_grad) {
    out.set_requires_grad(true);
    std::vector<Tensor> inputs = parts;
    const bool flat = !two_d || axis == 0;
    const size_t rows = out.rows(), cols = out.cols();
    tape->record([inputs, out, flat, rows, cols]() {
      if (flat) {
        size_t off = 0;
        for (const Tensor& p : inputs) {
          if (p.requires_grad())
            for (size_t i = 0; i < p.size(); ++i)
              p.grad()[i] += out.grad()[off + i];
          off += p.size();
        }
      } else {
        size_t col_off = 0;
        for (const Tensor& p : inputs) {
          if (p.requires_grad())
            for (size_t i = 0; i < rows; ++i)
              for (size_t j = 0; j < p.cols(); ++j)
                p.grad()[i * p.cols() + j] += out.grad()[i * cols + col_off + j];
          col_off += p.cols();
        }
      }
    });
  }
  return out;
}

inline Tensor slice_rows(Tape* tape, const Tensor& x, size_t start, size_t n) {
  if (start + n > x.rows()) {
    throw dim_error(cat("slice_rows: [", start, ",", start + n, ") out of ",
                        shape_str(x.shape())));
  }
  size_t c = x.cols();
  Tensor out({n, c});
  std::copy(x.data().begin() + start * c, x.data().begin() + (start + n) * c,
            out.data().begin());
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    tape->record([x, out, start, n, c]() {
      for (size_t i = 0; i < n * c; ++i)
        x.grad()[start * c + i] += out.grad()[i];
    });
  }
  return out;
}

inline Tensor slice_cols(Tape* tape, const Tensor& x, size_t start, size_t n) {
  if (start + n > x.cols()) {
    throw dim_error(cat("slice_cols: [", start, ",", start + n, ") out of ",
                        shape_str(x.shape())));
  }
  size_t r = x.rows(), c = x.cols();
  Tensor out({r, n});
  for (size_t i = 0; i < r; ++i)
    std::copy(x.data().begin() + i * c + start,
              x.data().begin() + i * c + start + n,
              out.data().begin() + i * n);
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    tape->record([x, out, start, n, r, c]() {
      for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < n; ++j)
          x.grad()[i * c + start + j] += out.grad()[i * n + j];
    });
  }
  return out;
}

// Gather rows by index; backward scatter-adds into the source.
inline Tensor gather_rows(Tape* tape, const Tensor& x, const std::vector<int>& idx) {
  size_t c = x.cols();
  for (int i : idx) {
    if (i < 0 || static_cast<size_t>(i) >= x.rows())
      throw dim_error(cat("gather_rows: index ", i, " out of ", shape_str(x.shape())));
  }
  Tensor out({idx.size(), c});
  for (size_t k = 0; k < idx.size(); ++k)
    std::copy(x.data().begin() + idx[k] * c, x.data().begin() + (idx[k] + 1) * c,
              out.data().begin() + k * c);
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    tape->record([x, out, idx, c]() {
      for (size_t k = 0; k < idx.size(); ++k)
        for (size_t j = 0; j < c; ++j)
          x.grad()[idx[k] * c + j] += out.grad()[k * c + j];
    });
  }
  return out;
}

inline Tensor reshape(Tape* tape, const Tensor& x, std::vector<size_t> shape) {
  Tensor out(std::move(shape));
  if (out.size() != x.size()) {
    throw dim_error(cat("reshape: ", shape_str(x.shape()), " to ",
                        shape_str(out.shape())));
  }
  out.data() = x.data();
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    tape->record([x, out]() {
      for (size_t i = 0; i < x.size(); ++i) x.grad()[i] += out.grad()[i];
    });
  }
  return out;
}

// ----------------------------- reductions -----------------------------

inline Tensor sum_all(Tape* tape, const Tensor& x) {
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) acc += static_cast<double>(x.at(i));
  Tensor out({1});
  out.at(0) = static_cast<real>(acc);
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    tape->record([x, out]() {
      real g = out.grad()[0];
      for (size_t i = 0; i < x.size(); ++i) x.grad()[i] += g;
    });
  }
  return out;
}

// ----------------------------- softmax -----------------------------

// Row-wise masked softmax. Masked positions produce exact zeros; each row
// must have at least one unmasked entry. Stabilized by max subtraction and
// normalized with a double accumulator.
inline Tensor softmax_masked_rows(Tape* tape, const Tensor& logits,
                                  const std::vector<uint8_t>& mask) {
  size_t r = logits.rows(), c = logits.cols();
  if (mask.size() != r * c) {
    throw dim_error(cat("softmax_masked: mask size ", mask.size(),
                        " vs logits ", shape_str(logits.shape())));
  }
  Tensor out(logits.shape());
  for (size_t i = 0; i < r; ++i) {
    real mx = 0;
    bool any = false;
    for (size_t j = 0; j < c; ++j) {
      if (!mask[i * c + j]) continue;
      real v = logits.at(i * c + j);
      if (!any || v > mx) mx = v;
      any = true;
    }
    if (!any) throw empty_attention_error(cat("softmax_masked: row ", i, " fully masked"));
    double denom = 0.0;
    for (size_t j = 0; j < c; ++j) {
      if (!mask[i * c + j]) {
        out.at(i * c + j) = real(0);
        continue;
      }
      double e = std::exp(static_cast<double>(logits.at(i * c + j)) - static_cast<double>(mx));
      out.at(i * c + j) = static_cast<real>(e);
      denom += e;
    }
    for (size_t j = 0; j < c; ++j)
      if (mask[i * c + j])
        out.at(i * c + j) = static_cast<real>(static_cast<double>(out.at(i * c + j)) / denom);
  }
  if (detail::track(tape, logits)) {
    out.set_requires_grad(true);
    tape->record([logits, out, mask, r, c]() {
      for (size_t i = 0; i < r; ++i) {
        double dot = 0.0;
        for (size_t j = 0; j < c; ++j)
          if (mask[i * c + j])
            dot += static_cast<double>(out.grad()[i * c + j]) *
                   static_cast<double>(out.at(i * c + j));
        for (size_t j = 0; j < c; ++j)
          if (mask[i * c + j])
            logits.grad()[i * c + j] +=
                out.at(i * c + j) *
                (out.grad()[i * c + j] - static_cast<real>(dot));
      }
    });
  }
  return out;
}

inline Tensor softmax_masked(Tape* tape, const Tensor& logits,
                             const std::vector<uint8_t>& mask) {
  if (logits.shape().size() != 1) {
    throw dim_error(cat("softmax_masked: need 1-d logits, got ",
                        shape_str(logits.shape())));
  }
  return softmax_masked_rows(tape, logits, mask);
}

// ----------------------------- dropout -----------------------------

// Inverted dropout: scales survivors at train time so eval is the identity.
inline Tensor dropout(Tape* tape, const Tensor& x, real rate, bool training, Rng* rng) {
  if (rate < real(0) || rate >= real(1)) {
    throw config_error(cat("dropout: rate ", rate, " outside [0,1)"));
  }
  if (!training || rate == real(0)) return x;
  if (!rng) throw config_error("dropout: training mode needs an rng");
  const size_t n = x.size();
  auto keep = std::make_shared<std::vector<real>>(n);
  const real scale = real(1) / (real(1) - rate);
  Tensor out(x.shape());
  for (size_t i = 0; i < n; ++i) {
    (*keep)[i] = rng->uniform() < static_cast<double>(rate) ? real(0) : scale;
    out.at(i) = x.at(i) * (*keep)[i];
  }
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    tape->record([x, out, keep, n]() {
      for (size_t i = 0; i < n; ++i) x.grad()[i] += out.grad()[i] * (*keep)[i];
    });
  }
  return out;
}

// ----------------------------- backward driver -----------------------------

// Seeds d(loss)/d(loss) = 1 and unwinds the tape.
inline void run_backward(Tape& tape, const Tensor& loss) {
  if (loss.size() != 1) {
    throw dim_error(cat("backward: loss must be scalar, got ",
                        shape_str(loss.shape())));
  }
  loss.grad()[0] += real(1);
  tape.backward();
}

}  // namespace newsrec
