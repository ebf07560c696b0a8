#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "docent/numerics/functional.hpp"
#include "docent/numerics/kernels.hpp"
#include "docent/numerics/grad_check.hpp"
#include "docent/numerics/params.hpp"
#include "docent/numerics/tensor.hpp"

namespace docent::ad {

template <class T>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  T item() const {
    if (value().size() != 1) throw std::logic_error("item() on non-scalar");
    return value()[0];
  }
};

/// Reverse-mode recording. Nodes are appended in evaluation order, so the
/// reverse of insertion order is a valid topological order for backward.
template <class T>
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }

  Var<T> constant(Tensor<T> value) { return push(std::move(value), {}, false); }

  /// Leaf bound to a named parameter. Repeated requests share one node so
  /// gradient contributions accumulate in a single place.
  Var<T> param(const ParamStore<T>& store, const std::string& name) {
    if (auto it = params_.find(name); it != params_.end()) return {this, it->second};
    Var<T> v = push(require_param(store, name), {}, record_);
    params_.emplace(name, v.id);
    param_order_.push_back(name);
    return v;
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }

  bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }

  Tensor<T>& grad(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  Var<T> push(Tensor<T> value, std::function<void()> backward, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad && record_;
    if (n.needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  void backward(Var<T> loss) {
    if (!record_) throw std::logic_error("backward on a non-recording tape");
    if (loss.value().size() != 1) throw std::logic_error("backward expects a scalar loss");
    if (!nodes_[loss.id].needs_grad) return;
    grad(loss.id)[0] = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && !n.grad.empty()) n.backward();
    }
  }

  /// Gradients for every parameter in `store`; untouched ones are zero.
  Gradients<T> gradients(const ParamStore<T>& store) const {
    Gradients<T> out;
    for (const auto& [name, t] : store) {
      auto it = params_.find(name);
      if (it != params_.end() && !nodes_[it->second].grad.empty()) {
        out.emplace(name, nodes_[it->second].grad);
      } else {
        out.emplace(name, Tensor<T>(t.shape()));
      }
    }
    return out;
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void()> backward;
    bool needs_grad = false;
  };

  bool record_;
  std::deque<Node> nodes_;
  std::unordered_map<std::string, std::size_t> params_;
  std::vector<std::string> param_order_;
};

namespace detail {

template <class T>
void require_same_tape(Var<T> a, Var<T> b) {
  if (a.tape != b.tape) throw std::logic_error("vars belong to different tapes");
}

template <class T>
void require_matrix(const Tensor<T>& t, const char* what) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(what) + ": expected a matrix, got " +
                                shape_string(t.shape()));
  }
}

template <class T>
void accumulate(Tensor<T>& into, const Tensor<T>& from) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += from[i];
}

template <class T>
bool any_grad(std::initializer_list<Var<T>> vars) {
  for (const auto& v : vars) {
    if (v.tape->needs_grad(v.id)) return true;
  }
  return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// a[n x k] * b[k x m]
template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  detail::require_matrix(av, "matmul");
  detail::require_matrix(bv, "matmul");
  const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
  if (bv.rows() != k) {
    throw std::invalid_argument("matmul: " + shape_string(av.shape()) + " x " +
                                shape_string(bv.shape()));
  }
  Tensor<T> out = Tensor<T>::matrix(n, m);
  kernels::gemm_nn(av.data(), bv.data(), out.data(), n, k, m);
  Tape<T>* tape = a.tape;
  const std::size_t ia = a.id, ib = b.id, ic = tape->size();
  return tape->push(
      std::move(out),
      [tape, ia, ib, ic, n, k, m] {
        const Tensor<T>& gc = tape->grad(ic);
        if (tape->needs_grad(ia)) {
          kernels::gemm_nt(gc.data(), tape->value(ib).data(),
                           tape->grad(ia).data(), n, m, k);
        }
        if (tape->needs_grad(ib)) {
          kernels::gemm_tn(tape->value(ia).data(), gc.data(),
                           tape->grad(ib).data(), n, k, m);
        }
      },
      detail::any_grad({a, b}));
}

/// a[n x k] * b[m x k]^T
template <class T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  detail::require_matrix(av, "matmul_nt");
  detail::require_matrix(bv, "matmul_nt");
  const std::size_t n = av.rows(), k = av.cols(), m = bv.rows();
  if (bv.cols() != k) {
    throw std::invalid_argument("matmul_nt: " + shape_string(av.shape()) +
                                " x " + shape_string(bv.shape()) + "^T");
  }
  Tensor<T> out = Tensor<T>::matrix(n, m);
  kernels::gemm_nt(av.data(), bv.data(), out.data(), n, k, m);
  Tape<T>* tape = a.tape;
  const std::size_t ia = a.id, ib = b.id, ic = tape->size();
  return tape->push(
      std::move(out),
      [tape, ia, ib, ic, n, k, m] {
        const Tensor<T>& gc = tape->grad(ic);
        if (tape->needs_grad(ia)) {
          kernels::gemm_nn(gc.data(), tape->value(ib).data(),
                           tape->grad(ia).data(), n, m, k);
        }
        if (tape->needs_grad(ib)) {
          kernels::gemm_tn(gc.data(), tape->value(ia).data(),
                           tape->grad(ib).data(), n, m, k);
        }
      },
      detail::any_grad({a, b}));
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  if (!a.value().same_shape(b.value())) {
    throw std::invalid_argument("add: " + shape_string(a.value().shape()) +
                                " vs " + shape_string(b.value().shape()));
  }
  Tensor<T> out = a.value();
  detail::accumulate(out, b.value());
  Tape<T>* tape = a.tape;
  const std::size_t ia = a.id, ib = b.id, ic = tape->size();
  return tape->push(
      std::move(out),
      [tape, ia, ib, ic] {
        const Tensor<T>& gc = tape->grad(ic);
        if (tape->needs_grad(ia)) detail::accumulate(tape->grad(ia), gc);
        if (tape->needs_grad(ib)) detail::accumulate(tape->grad(ib), gc);
      },
      detail::any_grad({a, b}));
}

/// Adds a [1 x m] row to every row of a[n x m].
template <class T>
Var<T> add_row(Var<T> a, Var<T> bias) {
  detail::require_same_tape(a, bias);
  const auto& av = a.value();
  const auto& bv = bias.value();
  const std::size_t n = av.rows(), m = av.cols();
  if (bv.size() != m) {
    throw std::invalid_argument("add_row: bias width " + std::to_string(bv.size()) +
                                " vs " + std::to_string(m));
  }
  Tensor<T> out = av;
  for (std::size_t i = 0; i < n; ++i) {
    T* r = out.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) r[j] += bv[j];
  }
  Tape<T>* tape = a.tape;
  const std::size_t ia = a.id, ib = bias.id, ic = tape->size();
  return tape->push(
      std::move(out),
      [tape, ia, ib, ic, n, m] {
        const Tensor<T>& gc = tape->grad(ic);
        if (tape->needs_grad(ia)) detail::accumulate(tape->grad(ia), gc);
        if (tape->needs_grad(ib)) {
          Tensor<T>& gb = tape->grad(ib);
          for (std::size_t i = 0; i < n; ++i) {
            const T* r = gc.data() + i * m;
            for (std::size_t j = 0; j < m; ++j) gb[j] += r[j];
          }
        }
      },
      detail::any_grad({a, bias}));
}

template <class T>
Var<T> scale(Var<T> a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.storage()) v *= s;
  Tape<T>* tape = a.tape;
  const std::size_t ia = a.id, ic = tape->size();
  return tape->push(
      std::move(out),
      [tape, ia, ic, s] {
        const Tensor<T>& gc = tape->grad(ic);
        Tensor<T>& ga = tape->grad(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * gc[i];
      },
      detail::any_grad({a}));
}

/// Elementwise product.
template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  if (!a.value().same_shape(b.value())) throw std::invalid_argument("mul: shape mismatch");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  Tape<T>* tape = a.tape;
  const std::size_t ia = a.id, ib = b.id, ic = tape->size();
  return tape->push(
      std::move(out),
      [tape, ia, ib, ic] {
        const Tensor<T>& gc = tape->grad(ic);
        const Tensor<T>& x = tape->value(ia);
        const Tensor<T>& y = tape->value(ib);
        if (tape->needs_grad(ia)) {
          Tensor<T>& g = tape->grad(ia);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += gc[i] * y[i];
        }
        if (tape->needs_grad(ib)) {
          Tensor<T>& g = tape->grad(ib);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += gc[i] * x[i];
        }
      },
      detail::any_grad({a, b}));
}

/// Sum of all entries as a [1 x 1] scalar.
template <class T>
Var<T> sum(Var<T> a) {
  T total{0};
  for (const T v : a.value().values()) total += v;
  Tape<T>* tape = a.tape;
  const std::size_t ia = a.id, ic = tape->size();
  return tape->push(
      Tensor<T>::scalar(total),
      [tape, ia, ic] {
        const T g = tape->grad(ic)[0];
        for (auto& v : tape->grad(ia).storage()) v += g;
      },
      detail::any_grad({a}));
}

/// Exact (erf) GELU.
template <class T>
Var<T> gelu(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.storage()) {
    v = static_cast<T>(0.5) * v *
        (T{1} + std::erf(v * static_cast<T>(std::numbers::sqrt2 / 2)));
  }
  Tape<T>* tape = a.tape;
  const std::size_t ia = a.id, ic = tape->size();
  return tape->push(
      std::move(out),
      [tape, ia, ic] {
        const Tensor<T>& gc = tape->grad(ic);
        const Tensor<T>& x = tape->value(ia);
        Tensor<T>& ga = tape->grad(ia);
        const T inv_sqrt2 = static_cast<T>(std::numbers::sqrt2 / 2);
        const T inv_sqrt2pi = static_cast<T>(std::numbers::inv_sqrtpi * std::numbers::sqrt2 / 2);
        for (std::size_t i = 0; i < ga.size(); ++i) {
          const T xv = x[i];
          const T cdf = static_cast<T>(0.5) * (T{1} + std::erf(xv * inv_sqrt2));
          const T pdf = inv_sqrt2pi * std::exp(static_cast<T>(-0.5) * xv * xv);
          ga[i] += gc[i] * (cdf + xv * pdf);
        }
      },
      detail::any_grad({a}));
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Row-wise layer norm with [1 x m] gain and bias.
template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias) {
  detail::require_same_tape(x, gain);
  detail::require_same_tape(x, bias);
  const auto& xv = x.value();
  const std::size_t n = xv.rows(), m = xv.cols();
  if (m < 2) throw std::invalid_argument("layer_norm needs at least 2 columns");
  if (gain.value().size() != m || bias.value().size() != m) {
    throw std::invalid_argument("layer_norm: gain/bias width mismatch");
  }
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  Tensor<T> xhat = Tensor<T>::matrix(n, m);
  std::vector<T> inv_std(n);
  Tensor<T> out = Tensor<T>::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const T* r = xv.data() + i * m;
    T mean{0};
    for (std::size_t j = 0; j < m; ++j) mean += r[j];
    mean /= static_cast<T>(m);
    T var{0};
    for (std::size_t j = 0; j < m; ++j) var += (r[j] - mean) * (r[j] - mean);
    var /= static_cast<T>(m);
    const T inv = T{1} / std::sqrt(var + static_cast<T>(kEpsFloor));
    inv_std[i] = inv;
    for (std::size_t j = 0; j < m; ++j) {
      const T h = (r[j] - mean) * inv;
      xhat(i, j) = h;
      out(i, j) = h * gv[j] + bv[j];
    }
  }
  Tape<T>* tape = x.tape;
  const std::size_t ix = x.id, ig = gain.id, ib = bias.id, ic = tape->size();
  return tape->push(
      std::move(out),
      [tape, ix, ig, ib, ic, n, m, xhat = std::move(xhat),
       inv_std = std::move(inv_std)] {
        const Tensor<T>& gc = tape->grad(ic);
        const Tensor<T>& gv = tape->value(ig);
        if (tape->needs_grad(ig)) {
          Tensor<T>& gg = tape->grad(ig);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) gg[j] += gc(i, j) * xhat(i, j);
        }
        if (tape->needs_grad(ib)) {
          Tensor<T>& gb = tape->grad(ib);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) gb[j] += gc(i, j);
        }
        if (tape->needs_grad(ix)) {
          Tensor<T>& gx = tape->grad(ix);
          const T inv_m = T{1} / static_cast<T>(m);
          for (std::size_t i = 0; i < n; ++i) {
            T mean_g{0}, mean_gx{0};
            for (std::size_t j = 0; j < m; ++j) {
              const T gh = gc(i, j) * gv[j];
              mean_g += gh;
              mean_gx += gh * xhat(i, j);
            }
            mean_g *= inv_m;
            mean_gx *= inv_m;
            for (std::size_t j = 0; j < m; ++j) {
              const T gh = gc(i, j) * gv[j];
              gx(i, j) += inv_std[i] * (gh - mean_g - xhat(i, j) * mean_gx);
            }
          }
        }
      },
      detail::any_grad({x, gain, bias}));
}

/// Each row divided by sqrt(|row|^2 + eps).
template <class T>
Var<T> l2_normalize_rows(Var<T> a) {
  const auto& av = a.value();
  const std::size_t n = av.rows(), m = av.cols();
  Tensor<T> out = av;
  std::vector<T> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    T ss{0};
    for (std::size_t j = 0; j < m; ++j) ss += av(i, j) * av(i, j);
    norms[i] = std::sqrt(ss + static_cast<T>(kEpsFloor));
    for (std::size_t j = 0; j < m; ++j) out(i, j) /= norms[i];
  }
  Tape<T>* tape = a.tape;
  const std::size_t ia = a.id, ic = tape->size();
  return tape->push(
      std::move(out),
      [tape, ia, ic, n, m, norms = std::move(norms)] {
        const Tensor<T>& gc = tape->grad(ic);
        const Tensor<T>& y = tape->value(ic);
        Tensor<T>& ga = tape->grad(ia);
        for (std::size_t i = 0; i < n; ++i) {
          T proj{0};
          for (std::size_t j = 0; j < m; ++j) proj += gc(i, j) * y(i, j);
          for (std::size_t j = 0; j < m; ++j) {
            ga(i, j) += (gc(i, j) - y(i, j) * proj) / norms[i];
          }
        }
      },
      detail::any_grad({a}));
}

// ---------------------------------------------------------------------------
// Indexing and reshaping
// ---------------------------------------------------------------------------

/// Rows of `a` picked by index (embedding lookup when `a` is a table).
template <class T>
Var<T> rows(Var<T> a, std::vector<std::size_t> index) {
  const auto& av = a.value();
  const std::size_t m = av.cols();
  Tensor<T> out = Tensor<T>::matrix(index.size(), m);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= av.rows()) {
      throw std::out_of_range("rows: index " + std::to_string(index[i]) +
                              " at position " + std::to_string(i) + " outside " +
                              std::to_string(av.rows()) + " rows");
    }
    std::copy_n(av.data() + index[i] * m, m, out.data() + i * m);
  }
  Tape<T>* tape = a.tape;
  const std::size_t ia = a.id, ic = tape->size();
  return tape->push(
      std::move(out),
      [tape, ia, ic, m, index = std::move(index)] {
        const Tensor<T>& gc = tape->grad(ic);
        Tensor<T>& ga = tape->grad(ia);
        for (std::size_t i = 0; i < index.size(); ++i) {
          T* dst = ga.data() + index[i] * m;
          const T* src = gc.data() + i * m;
          for (std::size_t j = 0; j < m; ++j) dst[j] += src[j];
        }
      },
      detail::any_grad({a}));
}

/// [a | b] column concatenation.
template <class T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t n = av.rows(), p = av.cols(), q = bv.cols();
  if (bv.rows() != n) throw std::invalid_argument("concat_cols: row count mismatch");
  Tensor<T> out = Tensor<T>::matrix(n, p + q);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(av.data() + i * p, p, out.data() + i * (p + q));
    std::copy_n(bv.data() + i * q, q, out.data() + i * (p + q) + p);
  }
  Tape<T>* tape = a.tape;
  const std::size_t ia = a.id, ib = b.id, ic = tape->size();
  return tape->push(
      std::move(out),
      [tape, ia, ib, ic, n, p, q] {
        const Tensor<T>& gc = tape->grad(ic);
        if (tape->needs_grad(ia)) {
          Tensor<T>& g = tape->grad(ia);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < p; ++j) g(i, j) += gc(i, j);
        }
        if (tape->needs_grad(ib)) {
          Tensor<T>& g = tape->grad(ib);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < q; ++j) g(i, j) += gc(i, p + j);
        }
      },
      detail::any_grad({a, b}));
}

/// out.flat[j] = a.flat[index[j]], reshaped to [rows x cols].
template <class T>
Var<T> gather_elements(Var<T> a, std::vector<std::size_t> index,
                       std::size_t out_rows, std::size_t out_cols) {
  if (index.size() != out_rows * out_cols) {
    throw std::invalid_argument("gather_elements: index count mismatch");
  }
  const auto& av = a.value();
  Tensor<T> out = Tensor<T>::matrix(out_rows, out_cols);
  for (std::size_t j = 0; j < index.size(); ++j) {
    if (index[j] >= av.size()) throw std::out_of_range("gather_elements: index out of range");
    out[j] = av[index[j]];
  }
  Tape<T>* tape = a.tape;
  const std::size_t ia = a.id, ic = tape->size();
  return tape->push(
      std::move(out),
      [tape, ia, ic, index = std::move(index)] {
        const Tensor<T>& gc = tape->grad(ic);
        Tensor<T>& ga = tape->grad(ia);
        for (std::size_t j = 0; j < index.size(); ++j) ga[index[j]] += gc[j];
      },
      detail::any_grad({a}));
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

/// Contiguous run of rows forming one sequence inside a packed batch.
struct Span {
  std::size_t offset = 0;
  std::size_t length = 0;
};

/// Attention probabilities captured during a forward pass, one
/// [length x length] block per (sequence, head), sequence-major.
template <class T>
struct AttentionTrace {
  std::vector<Tensor<T>> blocks;
};

/// Multi-head scaled dot-product self-attention over packed sequences.
/// q, k, v are [N x H]; attention never crosses span boundaries.
template <class T>
Var<T> multi_head_attention(Var<T> q, Var<T> k, Var<T> v,
                            const std::vector<Span>& spans, std::size_t heads,
                            AttentionTrace<T>* trace = nullptr) {
  detail::require_same_tape(q, k);
  detail::require_same_tape(q, v);
  const auto& qv = q.value();
  const auto& kv = k.value();
  const auto& vv = v.value();
  const std::size_t n = qv.rows(), h = qv.cols();
  if (!kv.same_shape(qv) || !vv.same_shape(qv)) {
    throw std::invalid_argument("attention: q/k/v shape mismatch");
  }
  if (heads == 0 || h % heads != 0) {
    throw std::invalid_argument("attention: width not divisible by heads");
  }
  const std::size_t dh = h / heads;
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));

  // probs layout: for each span, for each head, length*length values
  std::vector<std::size_t> prob_offset(spans.size());
  std::size_t total = 0;
  for (std::size_t s = 0; s < spans.size(); ++s) {
    if (spans[s].offset + spans[s].length > n) {
      throw std::out_of_range("attention: span exceeds packed rows");
    }
    prob_offset[s] = total;
    total += heads * spans[s].length * spans[s].length;
  }
  std::vector<T> probs(total);
  Tensor<T> out = Tensor<T>::matrix(n, h);
  std::vector<T> row;
  for (std::size_t s = 0; s < spans.size(); ++s) {
    const std::size_t o = spans[s].offset, len = spans[s].length;
    row.resize(len);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      T* p = probs.data() + prob_offset[s] + hd * len * len;
      const std::size_t c0 = hd * dh;
      for (std::size_t i = 0; i < len; ++i) {
        const T* qi = qv.data() + (o + i) * h + c0;
        T peak = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < len; ++j) {
          const T* kj = kv.data() + (o + j) * h + c0;
          T acc{0};
          for (std::size_t d = 0; d < dh; ++d) acc += qi[d] * kj[d];
          row[j] = acc * scale;
          peak = std::max(peak, row[j]);
        }
        T z{0};
        for (std::size_t j = 0; j < len; ++j) {
          row[j] = std::exp(row[j] - peak);
          z += row[j];
        }
        T* oi = out.data() + (o + i) * h + c0;
        for (std::size_t j = 0; j < len; ++j) {
          const T pij = row[j] / z;
          p[i * len + j] = pij;
          const T* vj = vv.data() + (o + j) * h + c0;
          for (std::size_t d = 0; d < dh; ++d) oi[d] += pij * vj[d];
        }
      }
      if (trace) {
        trace->blocks.emplace_back(
            std::vector<std::size_t>{len, len},
            std::vector<T>(p, p + len * len));
      }
    }
  }
  Tape<T>* tape = q.tape;
  const std::size_t iq = q.id, ik = k.id, iv = v.id, ic = tape->size();
  return tape->push(
      std::move(out),
      [tape, iq, ik, iv, ic, h, dh, heads, scale, spans, prob_offset = std::move(prob_offset),
       probs = std::move(probs)] {
        const Tensor<T>& go = tape->grad(ic);
        const Tensor<T>& qv = tape->value(iq);
        const Tensor<T>& kv = tape->value(ik);
        const Tensor<T>& vv = tape->value(iv);
        Tensor<T>& gq = tape->grad(iq);
        Tensor<T>& gk = tape->grad(ik);
        Tensor<T>& gv = tape->grad(iv);
        std::vector<T> dp;
        for (std::size_t s = 0; s < spans.size(); ++s) {
          const std::size_t o = spans[s].offset, len = spans[s].length;
          dp.resize(len);
          for (std::size_t hd = 0; hd < heads; ++hd) {
            const T* p = probs.data() + prob_offset[s] + hd * len * len;
            const std::size_t c0 = hd * dh;
            for (std::size_t i = 0; i < len; ++i) {
              const T* goi = go.data() + (o + i) * h + c0;
              T dot_pd{0};
              for (std::size_t j = 0; j < len; ++j) {
                const T* vj = vv.data() + (o + j) * h + c0;
                T acc{0};
                for (std::size_t d = 0; d < dh; ++d) acc += goi[d] * vj[d];
                dp[j] = acc;
                dot_pd += p[i * len + j] * acc;
                T* gvj = gv.data() + (o + j) * h + c0;
                const T pij = p[i * len + j];
                for (std::size_t d = 0; d < dh; ++d) gvj[d] += pij * goi[d];
              }
              const T* qi = qv.data() + (o + i) * h + c0;
              T* gqi = gq.data() + (o + i) * h + c0;
              for (std::size_t j = 0; j < len; ++j) {
                const T ds = p[i * len + j] * (dp[j] - dot_pd) * scale;
                if (ds == T{0}) continue;
                const T* kj = kv.data() + (o + j) * h + c0;
                T* gkj = gk.data() + (o + j) * h + c0;
                for (std::size_t d = 0; d < dh; ++d) {
                  gqi[d] += ds * kj[d];
                  gkj[d] += ds * qi[d];
                }
              }
            }
          }
        }
      },
      detail::any_grad({q, k, v}));
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Weighted mean softmax cross-entropy: sum_i w_i * CE_i / sum_i w_i.
/// An empty batch yields a constant zero.
template <class T>
Var<T> softmax_cross_entropy(Var<T> logits, const std::vector<std::size_t>& targets,
                             std::vector<T> weights = {}) {
  const auto& z = logits.value();
  const std::size_t n = z.rows(), c = z.cols();
  if (z.rank() != 2 || targets.size() != n) {
    throw std::invalid_argument("softmax_cross_entropy: target count mismatch");
  }
  if (weights.empty()) weights.assign(n, T{1});
  if (weights.size() != n) throw std::invalid_argument("softmax_cross_entropy: weight count");
  if (n == 0) return logits.tape->constant(Tensor<T>::scalar(T{0}));
  T wsum{0};
  for (const T w : weights) wsum += w;
  if (!(wsum > T{0})) throw std::invalid_argument("softmax_cross_entropy: weights sum to zero");
  Tensor<T> probs = Tensor<T>::matrix(n, c);
  T loss{0};
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] >= c) throw std::out_of_range("softmax_cross_entropy: target out of range");
    auto zr = z.row(i);
    const T lse = log_sum_exp<T>(zr);
    for (std::size_t j = 0; j < c; ++j) probs(i, j) = std::exp(zr[j] - lse);
    loss += weights[i] * (lse - zr[targets[i]]);
  }
  loss /= wsum;
  Tape<T>* tape = logits.tape;
  const std::size_t iz = logits.id, ic = tape->size();
  return tape->push(
      Tensor<T>::scalar(loss),
      [tape, iz, ic, n, c, targets, weights = std::move(weights), wsum,
       probs = std::move(probs)] {
        const T g = tape->grad(ic)[0];
        Tensor<T>& gz = tape->grad(iz);
        for (std::size_t i = 0; i < n; ++i) {
          const T f = g * weights[i] / wsum;
          for (std::size_t j = 0; j < c; ++j) {
            gz(i, j) += f * (probs(i, j) - (j == targets[i] ? T{1} : T{0}));
          }
        }
      },
      detail::any_grad({logits}));
}

/// Weighted mean logistic loss over a column of logits; labels in {0, 1}.
template <class T>
Var<T> sigmoid_binary_cross_entropy(Var<T> logits, std::vector<T> labels,
                                    std::vector<T> weights = {}) {
  const auto& z = logits.value();
  const std::size_t n = z.size();
  if (labels.size() != n) throw std::invalid_argument("bce: label count mismatch");
  if (weights.empty()) weights.assign(n, T{1});
  if (weights.size() != n) throw std::invalid_argument("bce: weight count mismatch");
  if (n == 0) return logits.tape->constant(Tensor<T>::scalar(T{0}));
  T wsum{0};
  for (const T w : weights) wsum += w;
  T loss{0};
  for (std::size_t i = 0; i < n; ++i) {
    const T x = z[i];
    const T softplus = std::max(x, T{0}) + std::log1p(std::exp(-std::abs(x)));
    loss += weights[i] * (softplus - labels[i] * x);
  }
  loss /= wsum;
  Tape<T>* tape = logits.tape;
  const std::size_t iz = logits.id, ic = tape->size();
  return tape->push(
      Tensor<T>::scalar(loss),
      [tape, iz, ic, n, labels = std::move(labels), weights = std::move(weights), wsum] {
        const T g = tape->grad(ic)[0];
        const Tensor<T>& z = tape->value(iz);
        Tensor<T>& gz = tape->grad(iz);
        for (std::size_t i = 0; i < n; ++i) {
          const T sig = T{1} / (T{1} + std::exp(-z[i]));
          gz[i] += g * weights[i] / wsum * (sig - labels[i]);
        }
      },
      detail::any_grad({logits}));
}

// ---------------------------------------------------------------------------
// Adapters
// ---------------------------------------------------------------------------

/// Wraps a graph-building function as a DifferentiableLoss for grad_check.
template <class T, class Build>
DifferentiableLoss<T> differentiable(Build build) {
  return [build](const ParamStore<T>& params, bool want_grad) {
    Tape<T> tape(want_grad);
    Var<T> loss = build(tape, params);
    LossAndGrad<T> out;
    out.loss = loss.item();
    if (want_grad) {
      tape.backward(loss);
      out.grads = tape.gradients(params);
    }
    return out;
  };
}

}  // namespace docent::ad
