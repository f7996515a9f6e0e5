#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "joytts/common.hpp"
#include "joytts/tensor.hpp"

namespace joytts {

// A learnable tensor plus its gradient and Adam moment buffers.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> moment1;
  Tensor<T> moment2;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor<T>::zeros(value.dims);
    moment1 = Tensor<T>::zeros(value.dims);
    moment2 = Tensor<T>::zeros(value.dims);
  }

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T(0)); }
};

template <typename T>
struct Var {
  int id = -1;
};

// Reverse-mode tape. Nodes are recorded in creation order, which is a
// topological order by construction (ops only consume existing nodes), so
// backward() is a single reverse sweep. One tape per training step; a tape
// is consumed by backward() and cannot be reused.
template <typename T>
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  // Backprop closures capture `this`; the tape must not relocate.
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  size_t size() const { return nodes_.size(); }

  Var<T> constant(Tensor<T> v) { return make_node(std::move(v), false, "constant"); }

  Var<T> leaf(Tensor<T> v, bool requires_grad) {
    return make_node(std::move(v), requires_grad && grad_enabled_, "leaf");
  }

  Var<T> param(Parameter<T>& p) {
    Var<T> out = make_node(p.value, grad_enabled_ && p.trainable, "param");
    if (node(out).requires_grad) bindings_.push_back({out.id, &p});
    return out;
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_[v.id]->value; }

  // Gradient of the last backward() w.r.t. this node (zeros if untouched).
  Tensor<T> grad(Var<T> v) const {
    const NodeRec& n = *nodes_[v.id];
    if (n.has_grad) return n.grad;
    return Tensor<T>::zeros(n.value.dims);
  }

  // ---- ops ----

  Var<T> matmul(Var<T> a, Var<T> b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    require_shape(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.rows(),
                  "matmul: inner dims mismatch " + shape_str(av.dims) + " x " + shape_str(bv.dims));
    const int m = av.rows(), k = av.cols(), n = bv.cols();
    Tensor<T> out({m, n});
    mm_nn(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
    Var<T> o = make_node(std::move(out), needs_grad({a, b}), "matmul");
    if (node(o).requires_grad) {
      node(o).backprop = [this, a, b, o, m, k, n]() {
        const T* g = nodes_[o.id]->grad.data.data();
        if (node_requires(a)) {
          mm_nt(g, value(b).data.data(), grad_buf(a), m, n, k);
        }
        if (node_requires(b)) {
          mm_tn(value(a).data.data(), g, grad_buf(b), m, k, n);
        }
      };
    }
    return o;
  }

  Var<T> transpose(Var<T> x) {
    const Tensor<T>& xv = value(x);
    require_shape(xv.rank() == 2, "transpose: rank 2 required");
    const int m = xv.rows(), n = xv.cols();
    Tensor<T> out({n, m});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) out.at(j, i) = xv.at(i, j);
    Var<T> o = make_node(std::move(out), needs_grad({x}), "transpose");
    if (node(o).requires_grad) {
      node(o).backprop = [this, x, o, m, n]() {
        if (!node_requires(x)) return;
        T* gx = grad_buf(x);
        const Tensor<T>& g = nodes_[o.id]->grad;
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) gx[static_cast<size_t>(i) * n + j] += g.at(j, i);
      };
    }
    return o;
  }

  Var<T> add(Var<T> a, Var<T> b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    require_shape(av.same_shape(bv), "add: shape mismatch");
    Tensor<T> out = av;
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] += bv.data[i];
    Var<T> o = make_node(std::move(out), needs_grad({a, b}), "add");
    if (node(o).requires_grad) {
      node(o).backprop = [this, a, b, o]() {
        const Tensor<T>& g = nodes_[o.id]->grad;
        if (node_requires(a)) axpy(grad_buf(a), g, T(1));
        if (node_requires(b)) axpy(grad_buf(b), g, T(1));
      };
    }
    return o;
  }

  Var<T> mul(Var<T> a, Var<T> b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    require_shape(av.same_shape(bv), "mul: shape mismatch");
    Tensor<T> out = av;
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] *= bv.data[i];
    Var<T> o = make_node(std::move(out), needs_grad({a, b}), "mul");
    if (node(o).requires_grad) {
      node(o).backprop = [this, a, b, o]() {
        const Tensor<T>& g = nodes_[o.id]->grad;
        if (node_requires(a)) {
          T* ga = grad_buf(a);
          const auto& bd = value(b).data;
          for (size_t i = 0; i < g.numel(); ++i) ga[i] += g.data[i] * bd[i];
        }
        if (node_requires(b)) {
          T* gb = grad_buf(b);
          const auto& ad = value(a).data;
          for (size_t i = 0; i < g.numel(); ++i) gb[i] += g.data[i] * ad[i];
        }
      };
    }
    return o;
  }

  Var<T> scalar_mul(Var<T> x, double c) {
    Tensor<T> out = value(x);
    for (auto& v : out.data) v = static_cast<T>(v * c);
    Var<T> o = make_node(std::move(out), needs_grad({x}), "scalar_mul");
    if (node(o).requires_grad) {
      node(o).backprop = [this, x, o, c]() {
        if (node_requires(x)) axpy(grad_buf(x), nodes_[o.id]->grad, static_cast<T>(c));
      };
    }
    return o;
  }

  // x: [m x n], bias: [n]; adds the bias to every row.
  Var<T> add_rowvec(Var<T> x, Var<T> bias) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& bv = value(bias);
    require_shape(xv.rank() == 2 && bv.rank() == 1 && bv.dims[0] == xv.cols(),
                  "add_rowvec: bias width mismatch");
    Tensor<T> out = xv;
    const int m = xv.rows(), n = xv.cols();
    for (int i = 0; i < m; ++i) {
      T* r = out.data.data() + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) r[j] += bv.data[j];
    }
    Var<T> o = make_node(std::move(out), needs_grad({x, bias}), "add_rowvec");
    if (node(o).requires_grad) {
      node(o).backprop = [this, x, bias, o, m, n]() {
        const Tensor<T>& g = nodes_[o.id]->grad;
        if (node_requires(x)) axpy(grad_buf(x), g, T(1));
        if (node_requires(bias)) {
          T* gb = grad_buf(bias);
          for (int i = 0; i < m; ++i) {
            const T* gr = g.data.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) gb[j] += gr[j];
          }
        }
      };
    }
    return o;
  }

  Var<T> gelu(Var<T> x) {
    const Tensor<T>& xv = value(x);
    Tensor<T> out = xv;
    for (auto& v : out.data) {
      double xd = static_cast<double>(v);
      v = static_cast<T>(0.5 * xd * (1.0 + std::erf(xd / std::sqrt(2.0))));
    }
    Var<T> o = make_node(std::move(out), needs_grad({x}), "gelu");
    if (node(o).requires_grad) {
      node(o).backprop = [this, x, o]() {
        if (!node_requires(x)) return;
        T* gx = grad_buf(x);
        const Tensor<T>& g = nodes_[o.id]->grad;
        const auto& xd = value(x).data;
        for (size_t i = 0; i < g.numel(); ++i) {
          double z = static_cast<double>(xd[i]);
          double cdf = 0.5 * (1.0 + std::erf(z / std::sqrt(2.0)));
          double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
          gx[i] += g.data[i] * static_cast<T>(cdf + z * pdf);
        }
      };
    }
    return o;
  }

  // Per-row RMS normalization with a learned gain: y = x / rms(x) * gain.
  Var<T> rms_norm(Var<T> x, Var<T> gain, double eps = 1e-5) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& gv = value(gain);
    require_shape(xv.rank() == 2 && gv.rank() == 1 && gv.dims[0] == xv.cols(),
                  "rms_norm: gain width mismatch");
    const int m = xv.rows(), n = xv.cols();
    Tensor<T> out({m, n});
    std::vector<T> inv_rms(m);
    for (int i = 0; i < m; ++i) {
      const T* xr = xv.data.data() + static_cast<size_t>(i) * n;
      double ms = 0.0;
      for (int j = 0; j < n; ++j) ms += static_cast<double>(xr[j]) * xr[j];
      ms = ms / n + eps;
      T r = static_cast<T>(1.0 / std::sqrt(ms));
      inv_rms[i] = r;
      T* yr = out.data.data() + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) yr[j] = xr[j] * r * gv.data[j];
    }
    Var<T> o = make_node(std::move(out), needs_grad({x, gain}), "rms_norm");
    if (node(o).requires_grad) {
      node(o).backprop = [this, x, gain, o, m, n, inv_rms = std::move(inv_rms)]() {
        const Tensor<T>& g = nodes_[o.id]->grad;
        const Tensor<T>& xv2 = value(x);
        const Tensor<T>& gv2 = value(gain);
        for (int i = 0; i < m; ++i) {
          const T* xr = xv2.data.data() + static_cast<size_t>(i) * n;
          const T* gr = g.data.data() + static_cast<size_t>(i) * n;
          T r = inv_rms[i];
          if (node_requires(x)) {
            double dot = 0.0;
            for (int j = 0; j < n; ++j)
              dot += static_cast<double>(gr[j]) * gv2.data[j] * xr[j];
            T* gx = grad_buf(x) + static_cast<size_t>(i) * n;
            double r3n = static_cast<double>(r) * r * r / n;
            for (int j = 0; j < n; ++j)
              gx[j] += static_cast<T>(gr[j] * gv2.data[j] * r - xr[j] * r3n * dot);
          }
          if (node_requires(gain)) {
            T* gg = grad_buf(gain);
            for (int j = 0; j < n; ++j) gg[j] += gr[j] * xr[j] * r;
          }
        }
      };
    }
    return o;
  }

  // Gathers rows of an embedding table; gradient scatter-adds.
  Var<T> embedding(Var<T> table, const std::vector<int>& ids) {
    const Tensor<T>& tv = value(table);
    require_shape(tv.rank() == 2, "embedding: table rank 2 required");
    const int v = tv.rows(), d = tv.cols();
    for (int id : ids)
      require(id >= 0 && id < v, "embedding: id " + std::to_string(id) + " out of range [0," +
                                     std::to_string(v) + ")");
    const int t = static_cast<int>(ids.size());
    require_shape(t > 0, "embedding: empty id list");
    Tensor<T> out({t, d});
    for (int i = 0; i < t; ++i) {
      const T* src = tv.data.data() + static_cast<size_t>(ids[i]) * d;
      std::copy(src, src + d, out.data.data() + static_cast<size_t>(i) * d);
    }
    Var<T> o = make_node(std::move(out), needs_grad({table}), "embedding");
    if (node(o).requires_grad) {
      node(o).backprop = [this, table, o, ids, d]() {
        if (!node_requires(table)) return;
        T* gt = grad_buf(table);
        const Tensor<T>& g = nodes_[o.id]->grad;
        for (size_t i = 0; i < ids.size(); ++i) {
          const T* gr = g.data.data() + i * d;
          T* dst = gt + static_cast<size_t>(ids[i]) * d;
          for (int j = 0; j < d; ++j) dst[j] += gr[j];
        }
      };
    }
    return o;
  }

  Var<T> softmax_rows(Var<T> x) { return softmax_impl(x, /*causal=*/false); }

  // Row i only sees columns 0..i; rows are normalized over the visible span.
  Var<T> causal_softmax_rows(Var<T> x) {
    require_shape(value(x).rows() == value(x).cols(), "causal_softmax: square matrix required");
    return softmax_impl(x, /*causal=*/true);
  }

  // Mean over unmasked rows of -log softmax(logits)[target].
  Var<T> cross_entropy(Var<T> logits, const std::vector<int>& targets,
                       const std::vector<bool>& mask) {
    const Tensor<T>& lv = value(logits);
    require_shape(lv.rank() == 2, "cross_entropy: logits rank 2 required");
    const int m = lv.rows(), v = lv.cols();
    require(static_cast<int>(targets.size()) == m && static_cast<int>(mask.size()) == m,
            "cross_entropy: targets/mask length mismatch");
    int active = 0;
    for (int i = 0; i < m; ++i) {
      if (!mask[i]) continue;
      require(targets[i] >= 0 && targets[i] < v, "cross_entropy: target out of range");
      ++active;
    }
    require(active > 0, "cross_entropy: all positions masked (empty loss)");

    Tensor<T> probs({m, v});
    double loss = 0.0;
    for (int i = 0; i < m; ++i) {
      if (!mask[i]) continue;
      const T* row = lv.data.data() + static_cast<size_t>(i) * v;
      T* prow = probs.data.data() + static_cast<size_t>(i) * v;
      double mx = row[0];
      for (int j = 1; j < v; ++j) mx = std::max(mx, static_cast<double>(row[j]));
      double denom = 0.0;
      for (int j = 0; j < v; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
      for (int j = 0; j < v; ++j)
        prow[j] = static_cast<T>(std::exp(static_cast<double>(row[j]) - mx) / denom);
      loss += mx + std::log(denom) - static_cast<double>(row[targets[i]]);
    }
    loss /= active;

    Tensor<T> out({1});
    out.data[0] = static_cast<T>(loss);
    Var<T> o = make_node(std::move(out), needs_grad({logits}), "cross_entropy");
    if (node(o).requires_grad) {
      node(o).backprop = [this, logits, o, targets, mask, active, m, v,
                          probs = std::move(probs)]() {
        if (!node_requires(logits)) return;
        T g = nodes_[o.id]->grad.data[0];
        T* gl = grad_buf(logits);
        T scale = g / static_cast<T>(active);
        for (int i = 0; i < m; ++i) {
          if (!mask[i]) continue;
          const T* prow = probs.data.data() + static_cast<size_t>(i) * v;
          T* grow = gl + static_cast<size_t>(i) * v;
          for (int j = 0; j < v; ++j) grow[j] += scale * prow[j];
          grow[targets[i]] -= scale;
        }
      };
    }
    return o;
  }

  Var<T> sum(Var<T> x) {
    double s = 0.0;
    for (const T& v : value(x).data) s += static_cast<double>(v);
    Tensor<T> out({1});
    out.data[0] = static_cast<T>(s);
    Var<T> o = make_node(std::move(out), needs_grad({x}), "sum");
    if (node(o).requires_grad) {
      node(o).backprop = [this, x, o]() {
        if (!node_requires(x)) return;
        T g = nodes_[o.id]->grad.data[0];
        T* gx = grad_buf(x);
        for (size_t i = 0; i < value(x).numel(); ++i) gx[i] += g;
      };
    }
    return o;
  }

  // Weighted sum of scalar nodes; used to combine per-sample losses.
  Var<T> weighted_scalar_sum(const std::vector<Var<T>>& xs, const std::vector<T>& weights) {
    require(!xs.empty() && xs.size() == weights.size(), "weighted_scalar_sum: size mismatch");
    double s = 0.0;
    bool rg = false;
    for (size_t i = 0; i < xs.size(); ++i) {
      require_shape(value(xs[i]).numel() == 1, "weighted_scalar_sum: non-scalar input");
      s += static_cast<double>(value(xs[i]).data[0]) * weights[i];
      rg = rg || node_requires(xs[i]);
    }
    Tensor<T> out({1});
    out.data[0] = static_cast<T>(s);
    Var<T> o = make_node(std::move(out), rg && grad_enabled_, "weighted_scalar_sum");
    if (node(o).requires_grad) {
      node(o).backprop = [this, xs, weights, o]() {
        T g = nodes_[o.id]->grad.data[0];
        for (size_t i = 0; i < xs.size(); ++i)
          if (node_requires(xs[i])) grad_buf(xs[i])[0] += g * weights[i];
      };
    }
    return o;
  }

  Var<T> concat_rows(const std::vector<Var<T>>& xs) {
    require(!xs.empty(), "concat_rows: empty input");
    const int n = value(xs[0]).cols();
    int total = 0;
    bool rg = false;
    for (Var<T> x : xs) {
      require_shape(value(x).rank() == 2 && value(x).cols() == n, "concat_rows: col mismatch");
      total += value(x).rows();
      rg = rg || node_requires(x);
    }
    Tensor<T> out({total, n});
    int r = 0;
    for (Var<T> x : xs) {
      const Tensor<T>& xv = value(x);
      std::copy(xv.data.begin(), xv.data.end(), out.data.begin() + static_cast<size_t>(r) * n);
      r += xv.rows();
    }
    Var<T> o = make_node(std::move(out), rg && grad_enabled_, "concat_rows");
    if (node(o).requires_grad) {
      node(o).backprop = [this, xs, o, n]() {
        const Tensor<T>& g = nodes_[o.id]->grad;
        int row = 0;
        for (Var<T> x : xs) {
          int rows = value(x).rows();
          if (node_requires(x)) {
            T* gx = grad_buf(x);
            const T* src = g.data.data() + static_cast<size_t>(row) * n;
            for (size_t i = 0; i < static_cast<size_t>(rows) * n; ++i) gx[i] += src[i];
          }
          row += rows;
        }
      };
    }
    return o;
  }

  Var<T> slice_rows(Var<T> x, int r0, int r1) {
    const Tensor<T>& xv = value(x);
    require_shape(xv.rank() == 2 && 0 <= r0 && r0 < r1 && r1 <= xv.rows(),
                  "slice_rows: bad range");
    const int n = xv.cols();
    Tensor<T> out({r1 - r0, n});
    std::copy(xv.data.begin() + static_cast<size_t>(r0) * n,
              xv.data.begin() + static_cast<size_t>(r1) * n, out.data.begin());
    Var<T> o = make_node(std::move(out), needs_grad({x}), "slice_rows");
    if (node(o).requires_grad) {
      node(o).backprop = [this, x, o, r0, n]() {
        if (!node_requires(x)) return;
        const Tensor<T>& g = nodes_[o.id]->grad;
        T* gx = grad_buf(x) + static_cast<size_t>(r0) * n;
        for (size_t i = 0; i < g.numel(); ++i) gx[i] += g.data[i];
      };
    }
    return o;
  }

  Var<T> slice_cols(Var<T> x, int c0, int c1) {
    const Tensor<T>& xv = value(x);
    require_shape(xv.rank() == 2 && 0 <= c0 && c0 < c1 && c1 <= xv.cols(),
                  "slice_cols: bad range");
    const int m = xv.rows(), n = xv.cols(), w = c1 - c0;
    Tensor<T> out({m, w});
    for (int i = 0; i < m; ++i)
      std::copy(xv.data.begin() + static_cast<size_t>(i) * n + c0,
                xv.data.begin() + static_cast<size_t>(i) * n + c1,
                out.data.begin() + static_cast<size_t>(i) * w);
    Var<T> o = make_node(std::move(out), needs_grad({x}), "slice_cols");
    if (node(o).requires_grad) {
      node(o).backprop = [this, x, o, c0, m, n, w]() {
        if (!node_requires(x)) return;
        const Tensor<T>& g = nodes_[o.id]->grad;
        T* gx = grad_buf(x);
        for (int i = 0; i < m; ++i) {
          const T* gr = g.data.data() + static_cast<size_t>(i) * w;
          T* dst = gx + static_cast<size_t>(i) * n + c0;
          for (int j = 0; j < w; ++j) dst[j] += gr[j];
        }
      };
    }
    return o;
  }

  Var<T> concat_cols(const std::vector<Var<T>>& xs) {
    require(!xs.empty(), "concat_cols: empty input");
    const int m = value(xs[0]).rows();
    int total = 0;
    bool rg = false;
    for (Var<T> x : xs) {
      require_shape(value(x).rank() == 2 && value(x).rows() == m, "concat_cols: row mismatch");
      total += value(x).cols();
      rg = rg || node_requires(x);
    }
    Tensor<T> out({m, total});
    int c = 0;
    for (Var<T> x : xs) {
      const Tensor<T>& xv = value(x);
      const int w = xv.cols();
      for (int i = 0; i < m; ++i)
        std::copy(xv.data.begin() + static_cast<size_t>(i) * w,
                  xv.data.begin() + static_cast<size_t>(i) * w + w,
                  out.data.begin() + static_cast<size_t>(i) * total + c);
      c += w;
    }
    Var<T> o = make_node(std::move(out), rg && grad_enabled_, "concat_cols");
    if (node(o).requires_grad) {
      node(o).backprop = [this, xs, o, m, total]() {
        const Tensor<T>& g = nodes_[o.id]->grad;
        int col = 0;
        for (Var<T> x : xs) {
          const int w = value(x).cols();
          if (node_requires(x)) {
            T* gx = grad_buf(x);
            for (int i = 0; i < m; ++i) {
              const T* gr = g.data.data() + static_cast<size_t>(i) * total + col;
              T* dst = gx + static_cast<size_t>(i) * w;
              for (int j = 0; j < w; ++j) dst[j] += gr[j];
            }
          }
          col += w;
        }
      };
    }
    return o;
  }

  Var<T> reshape(Var<T> x, std::vector<int> dims) {
    const Tensor<T>& xv = value(x);
    require_shape(Tensor<T>::numel_of(dims) == xv.numel(), "reshape: numel mismatch");
    Tensor<T> out(dims, xv.data);
    Var<T> o = make_node(std::move(out), needs_grad({x}), "reshape");
    if (node(o).requires_grad) {
      node(o).backprop = [this, x, o]() {
        if (!node_requires(x)) return;
        axpy(grad_buf(x), nodes_[o.id]->grad, T(1));
      };
    }
    return o;
  }

  // Scalar produced by a recorded graph; seeds grad 1 and sweeps in reverse
  // topological order exactly once. Leaf gradients fold into their bound
  // parameters at the end.
  void backward(Var<T> loss) {
    require(!consumed_, "backward: graph already consumed");
    require(grad_enabled_, "backward: tape recorded without gradients");
    NodeRec& root = node(loss);
    if (root.value.numel() != 1) throw ContractError("backward: root must be a scalar node");
    consumed_ = true;
    ensure_grad(loss.id);
    root.grad.data[0] = T(1);
    for (int id = loss.id; id >= 0; --id) {
      NodeRec& n = *nodes_[id];
      if (n.requires_grad && n.has_grad && n.backprop) n.backprop();
    }
    for (auto& [id, p] : bindings_) {
      NodeRec& n = *nodes_[id];
      if (!n.has_grad) continue;
      for (size_t i = 0; i < n.grad.numel(); ++i) p->grad.data[i] += n.grad.data[i];
    }
  }

 private:
  struct NodeRec {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::function<void()> backprop;
  };

  NodeRec& node(Var<T> v) { return *nodes_[v.id]; }
  bool node_requires(Var<T> v) const { return nodes_[v.id]->requires_grad; }

  bool needs_grad(std::initializer_list<Var<T>> ins) const {
    if (!grad_enabled_) return false;
    for (Var<T> v : ins)
      if (nodes_[v.id]->requires_grad) return true;
    return false;
  }

  Var<T> make_node(Tensor<T> value, bool requires_grad, const char* op) {
    for (const T& v : value.data) {
      if (!std::isfinite(static_cast<double>(v)))
        throw NumericError(std::string("non-finite value produced by op '") + op + "'");
    }
    auto rec = std::make_unique<NodeRec>();
    rec->value = std::move(value);
    rec->requires_grad = requires_grad;
    nodes_.push_back(std::move(rec));
    return Var<T>{static_cast<int>(nodes_.size()) - 1};
  }

  void ensure_grad(int id) {
    NodeRec& n = *nodes_[id];
    if (!n.has_grad) {
      n.grad = Tensor<T>::zeros(n.value.dims);
      n.has_grad = true;
    }
  }

  // Returns the gradient buffer of v, allocating it on first touch.
  T* grad_buf(Var<T> v) {
    ensure_grad(v.id);
    return nodes_[v.id]->grad.data.data();
  }

  static void axpy(T* dst, const Tensor<T>& src, T a) {
    for (size_t i = 0; i < src.numel(); ++i) dst[i] += a * src.data[i];
  }

  // c += a * b, all row-major. The i-l-j order keeps both inner streams
  // contiguous so the compiler vectorizes them.
  static void mm_nn(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
      const T* ar = a + static_cast<size_t>(i) * k;
      T* cr = c + static_cast<size_t>(i) * n;
      for (int l = 0; l < k; ++l) {
        const T av = ar[l];
        const T* br = b + static_cast<size_t>(l) * n;
        for (int j = 0; j < n; ++j) cr[j] += av * br[j];
      }
    }
  }

  // c[m x k] += a[m x n] * b[k x n]^T
  static void mm_nt(const T* a, const T* b, T* c, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
      const T* ar = a + static_cast<size_t>(i) * n;
      T* cr = c + static_cast<size_t>(i) * k;
      for (int l = 0; l < k; ++l) {
        const T* br = b + static_cast<size_t>(l) * n;
        T acc = T(0);
        for (int j = 0; j < n; ++j) acc += ar[j] * br[j];
        cr[l] += acc;
      }
    }
  }

  // c[k x n] += a[m x k]^T * b[m x n]
  static void mm_tn(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
      const T* ar = a + static_cast<size_t>(i) * k;
      const T* br = b + static_cast<size_t>(i) * n;
      for (int l = 0; l < k; ++l) {
        const T av = ar[l];
        T* cr = c + static_cast<size_t>(l) * n;
        for (int j = 0; j < n; ++j) cr[j] += av * br[j];
      }
    }
  }

  Var<T> softmax_impl(Var<T> x, bool causal) {
    const Tensor<T>& xv = value(x);
    require_shape(xv.rank() == 2, "softmax: rank 2 required");
    const int m = xv.rows(), n = xv.cols();
    Tensor<T> out({m, n});
    for (int i = 0; i < m; ++i) {
      const int span = causal ? i + 1 : n;
      const T* xr = xv.data.data() + static_cast<size_t>(i) * n;
      T* yr = out.data.data() + static_cast<size_t>(i) * n;
      double mx = xr[0];
      for (int j = 1; j < span; ++j) mx = std::max(mx, static_cast<double>(xr[j]));
      double denom = 0.0;
      for (int j = 0; j < span; ++j) denom += std::exp(static_cast<double>(xr[j]) - mx);
      for (int j = 0; j < span; ++j)
        yr[j] = static_cast<T>(std::exp(static_cast<double>(xr[j]) - mx) / denom);
    }
    Var<T> o = make_node(std::move(out), needs_grad({x}), causal ? "causal_softmax" : "softmax");
    if (node(o).requires_grad) {
      node(o).backprop = [this, x, o, m, n, causal]() {
        if (!node_requires(x)) return;
        const Tensor<T>& g = nodes_[o.id]->grad;
        const Tensor<T>& p = nodes_[o.id]->value;
        T* gx = grad_buf(x);
        for (int i = 0; i < m; ++i) {
          const int span = causal ? i + 1 : n;
          const T* pr = p.data.data() + static_cast<size_t>(i) * n;
          const T* gr = g.data.data() + static_cast<size_t>(i) * n;
          double dot = 0.0;
          for (int j = 0; j < span; ++j) dot += static_cast<double>(gr[j]) * pr[j];
          T* gxr = gx + static_cast<size_t>(i) * n;
          for (int j = 0; j < span; ++j)
            gxr[j] += static_cast<T>(pr[j] * (static_cast<double>(gr[j]) - dot));
        }
      };
    }
    return o;
  }

  std::vector<std::unique_ptr<NodeRec>> nodes_;
  std::vector<std::pair<int, Parameter<T>*>> bindings_;
  bool grad_enabled_;
  bool consumed_ = false;
};

}  // namespace joytts
