#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "avseg/error.hpp"
#include "avseg/tensor.hpp"

namespace avseg {

// Handle to a node on a Tape. Valid only for the tape that produced it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Precomputed gather map: out[i] = in[src[i]] (src[i] == -1 reads zero).
// Used for im2col; the adjoint is the matching scatter-add.
struct GatherPlan {
  int out_rows = 0;
  int out_cols = 0;
  std::vector<std::int64_t> src;
};

// Precomputed sparse interpolation: out[r] = sum_k w[r][k] * in[idx[r][k]]
// applied to every column. Used for bilinear resize; the adjoint is the
// transpose scatter.
struct LinearMapPlan {
  int out_rows = 0;
  int taps = 0;
  std::vector<std::int32_t> idx;  // out_rows * taps
  std::vector<double> w;          // out_rows * taps
};

GatherPlan make_im2col_plan(int h, int w, int channels, int kh, int kw, int stride, int pad);
LinearMapPlan make_bilinear_plan(int src_h, int src_w, int dst_h, int dst_w);

// Reverse-mode tape. Forward values are computed eagerly as operations are
// recorded; backward() replays adjoints in reverse creation order. One tape
// corresponds to one forward pass; parameters live outside the tape and are
// attached per pass via leaf().
template <typename T>
class Tape {
 public:
  Tape() { nodes_.reserve(1024); }

  const Tensor<T>& value(Var v) const { return nodes_[check(v)].value; }
  int rows(Var v) const { return value(v).rows(); }
  int cols(Var v) const { return value(v).cols(); }
  std::size_t size() const { return nodes_.size(); }

  // ---- node creation ------------------------------------------------------

  Var constant(Tensor<T> v) {
    return push(std::move(v), false, nullptr);
  }

  // Attaches an external parameter. The value is copied; after backward(),
  // the accumulated adjoint is added into *grad_sink.
  Var leaf(const Tensor<T>& value, Tensor<T>* grad_sink) {
    Var v = push(Tensor<T>(value), grad_sink != nullptr, nullptr);
    if (grad_sink) {
      node(v).back = [id = v.id, grad_sink](Tape& t) {
        if (!grad_sink->same_shape(t.nodes_[id].grad))
          throw ContractError("leaf gradient sink shape mismatch");
        grad_sink->map() += t.nodes_[id].grad.map();
      };
    }
    return v;
  }

  // Value pass-through that blocks gradient flow.
  Var stop_gradient(Var a) { return constant(value(a)); }

  // ---- arithmetic ---------------------------------------------------------

  Var add(Var a, Var b) {
    require_same_shape(a, b, "add");
    Tensor<T> out = value(a);
    out.map() += value(b).map();
    return binary(std::move(out), a, b, [](Tape& t, int a, int b, const Tensor<T>& g) {
      if (t.wants(a)) t.grad(a).map() += g.map();
      if (t.wants(b)) t.grad(b).map() += g.map();
    });
  }

  Var sub(Var a, Var b) {
    require_same_shape(a, b, "sub");
    Tensor<T> out = value(a);
    out.map() -= value(b).map();
    return binary(std::move(out), a, b, [](Tape& t, int a, int b, const Tensor<T>& g) {
      if (t.wants(a)) t.grad(a).map() += g.map();
      if (t.wants(b)) t.grad(b).map() -= g.map();
    });
  }

  Var mul(Var a, Var b) {
    require_same_shape(a, b, "mul");
    Tensor<T> out = value(a);
    out.map() = out.map().cwiseProduct(value(b).map());
    return binary(std::move(out), a, b, [](Tape& t, int a, int b, const Tensor<T>& g) {
      if (t.wants(a)) t.grad(a).map() += g.map().cwiseProduct(t.nodes_[b].value.map());
      if (t.wants(b)) t.grad(b).map() += g.map().cwiseProduct(t.nodes_[a].value.map());
    });
  }

  Var scale(Var a, T s) {
    Tensor<T> out = value(a);
    out.map() *= s;
    return unary(std::move(out), a, [s](Tape& t, int a, const Tensor<T>& g) {
      t.grad(a).map() += g.map() * s;
    });
  }

  Var add_scalar(Var a, T c) {
    Tensor<T> out = value(a);
    for (auto& x : out.storage()) x += c;
    return unary(std::move(out), a, [](Tape& t, int a, const Tensor<T>& g) {
      t.grad(a).map() += g.map();
    });
  }

  // a: (R, C), row: (1, C); broadcast over rows.
  Var add_rowvec(Var a, Var row) {
    if (rows(row) != 1 || cols(row) != cols(a))
      throw ContractError("add_rowvec: row must be (1, cols(a))");
    Tensor<T> out = value(a);
    out.map().rowwise() += value(row).map().row(0);
    return binary(std::move(out), a, row, [](Tape& t, int a, int r, const Tensor<T>& g) {
      if (t.wants(a)) t.grad(a).map() += g.map();
      if (t.wants(r)) t.grad(r).map().row(0) += g.map().colwise().sum();
    });
  }

  // a: (R, C), col: (R, 1); multiply every column of a by col.
  Var mul_colvec(Var a, Var col) {
    if (cols(col) != 1 || rows(col) != rows(a))
      throw ContractError("mul_colvec: col must be (rows(a), 1)");
    Tensor<T> out = value(a);
    out.map().array().colwise() *= value(col).map().col(0).array();
    return binary(std::move(out), a, col, [](Tape& t, int a, int c, const Tensor<T>& g) {
      if (t.wants(a))
        t.grad(a).map().array() +=
            g.map().array().colwise() * t.nodes_[c].value.map().col(0).array();
      if (t.wants(c))
        t.grad(c).map().col(0) +=
            g.map().cwiseProduct(t.nodes_[a].value.map()).rowwise().sum();
    });
  }

  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false) {
    const auto& A = value(a);
    const auto& B = value(b);
    const int ar = trans_a ? A.cols() : A.rows();
    const int ac = trans_a ? A.rows() : A.cols();
    const int br = trans_b ? B.cols() : B.rows();
    const int bc = trans_b ? B.rows() : B.cols();
    if (ac != br) throw ContractError("matmul: inner dimensions disagree");
    Tensor<T> out(ar, bc);
    if (!trans_a && !trans_b)
      out.map().noalias() = A.map() * B.map();
    else if (!trans_a && trans_b)
      out.map().noalias() = A.map() * B.map().transpose();
    else if (trans_a && !trans_b)
      out.map().noalias() = A.map().transpose() * B.map();
    else
      out.map().noalias() = A.map().transpose() * B.map().transpose();
    return binary(std::move(out), a, b,
                  [trans_a, trans_b](Tape& t, int a, int b, const Tensor<T>& g) {
                    const auto A = t.nodes_[a].value.map();
                    const auto B = t.nodes_[b].value.map();
                    const auto G = g.map();
                    if (t.wants(a)) {
                      auto dA = t.grad(a).map();
                      if (!trans_a && !trans_b) dA.noalias() += G * B.transpose();
                      else if (!trans_a && trans_b) dA.noalias() += G * B;
                      else if (trans_a && !trans_b) dA.noalias() += B * G.transpose();
                      else dA.noalias() += B.transpose() * G.transpose();
                    }
                    if (t.wants(b)) {
                      auto dB = t.grad(b).map();
                      if (!trans_a && !trans_b) dB.noalias() += A.transpose() * G;
                      else if (!trans_a && trans_b) dB.noalias() += G.transpose() * A;
                      else if (trans_a && !trans_b) dB.noalias() += A * G;
                      else dB.noalias() += G.transpose() * A.transpose();
                    }
                  });
  }

  // ---- elementwise nonlinearities -----------------------------------------

  Var relu(Var a) {
    Tensor<T> out = value(a);
    for (auto& x : out.storage()) x = x > T(0) ? x : T(0);
    return unary(std::move(out), a, [](Tape& t, int a, const Tensor<T>& g) {
      auto& da = t.grad(a);
      const auto& x = t.nodes_[a].value;
      for (std::size_t i = 0; i < x.numel(); ++i)
        if (x[i] > T(0)) da[i] += g[i];
    });
  }

  Var sigmoid(Var a) {
    Tensor<T> out = value(a);
    for (auto& x : out.storage()) x = T(1) / (T(1) + std::exp(-x));
    Var v = unary_saved(std::move(out), a);
    node(v).back = [id = v.id, a = a.id](Tape& t) {
      if (!t.wants(a)) return;
      const auto& y = t.nodes_[id].value;
      const auto& g = t.nodes_[id].grad;
      auto& da = t.grad(a);
      for (std::size_t i = 0; i < y.numel(); ++i) da[i] += g[i] * y[i] * (T(1) - y[i]);
    };
    return v;
  }

  Var log(Var a) {
    Tensor<T> out = value(a);
    for (auto& x : out.storage()) x = std::log(x);
    return unary(std::move(out), a, [](Tape& t, int a, const Tensor<T>& g) {
      const auto& x = t.nodes_[a].value;
      auto& da = t.grad(a);
      for (std::size_t i = 0; i < x.numel(); ++i) da[i] += g[i] / x[i];
    });
  }

  Var sqrt(Var a) {
    Tensor<T> out = value(a);
    for (auto& x : out.storage()) x = std::sqrt(x);
    Var v = unary_saved(std::move(out), a);
    node(v).back = [id = v.id, a = a.id](Tape& t) {
      if (!t.wants(a)) return;
      const auto& y = t.nodes_[id].value;
      const auto& g = t.nodes_[id].grad;
      auto& da = t.grad(a);
      for (std::size_t i = 0; i < y.numel(); ++i)
        if (y[i] > T(0)) da[i] += g[i] * T(0.5) / y[i];
    };
    return v;
  }

  Var reciprocal(Var a) {
    Tensor<T> out = value(a);
    for (auto& x : out.storage()) x = T(1) / x;
    Var v = unary_saved(std::move(out), a);
    node(v).back = [id = v.id, a = a.id](Tape& t) {
      if (!t.wants(a)) return;
      const auto& y = t.nodes_[id].value;
      const auto& g = t.nodes_[id].grad;
      auto& da = t.grad(a);
      for (std::size_t i = 0; i < y.numel(); ++i) da[i] -= g[i] * y[i] * y[i];
    };
    return v;
  }

  Var abs(Var a) {
    Tensor<T> out = value(a);
    for (auto& x : out.storage()) x = std::abs(x);
    return unary(std::move(out), a, [](Tape& t, int a, const Tensor<T>& g) {
      const auto& x = t.nodes_[a].value;
      auto& da = t.grad(a);
      for (std::size_t i = 0; i < x.numel(); ++i) {
        if (x[i] > T(0)) da[i] += g[i];
        else if (x[i] < T(0)) da[i] -= g[i];
      }
    });
  }

  // Clamps values to [lo, hi]; clamped positions pass no gradient.
  // If clamp_count is given it is incremented per clamped element.
  Var clamp(Var a, T lo, T hi, std::int64_t* clamp_count = nullptr) {
    Tensor<T> out = value(a);
    std::int64_t n = 0;
    for (auto& x : out.storage()) {
      if (x < lo) { x = lo; ++n; }
      else if (x > hi) { x = hi; ++n; }
    }
    if (clamp_count) *clamp_count += n;
    return unary(std::move(out), a, [lo, hi](Tape& t, int a, const Tensor<T>& g) {
      const auto& x = t.nodes_[a].value;
      auto& da = t.grad(a);
      for (std::size_t i = 0; i < x.numel(); ++i)
        if (x[i] > lo && x[i] < hi) da[i] += g[i];
    });
  }

  // ---- normalizations ------------------------------------------------------

  // Row-wise softmax; the denominator carries +denom_eps.
  Var softmax_rows(Var a, T denom_eps = T(1e-8)) {
    const auto& x = value(a);
    Tensor<T> out(x.rows(), x.cols());
    for (int r = 0; r < x.rows(); ++r) {
      T mx = x(r, 0);
      for (int c = 1; c < x.cols(); ++c) mx = std::max(mx, x(r, c));
      T sum = T(0);
      for (int c = 0; c < x.cols(); ++c) {
        out(r, c) = std::exp(x(r, c) - mx);
        sum += out(r, c);
      }
      const T inv = T(1) / (sum + denom_eps);
      for (int c = 0; c < x.cols(); ++c) out(r, c) *= inv;
    }
    Var v = unary_saved(std::move(out), a);
    node(v).back = [id = v.id, a = a.id](Tape& t) {
      if (!t.wants(a)) return;
      const auto& y = t.nodes_[id].value;
      const auto& g = t.nodes_[id].grad;
      auto& da = t.grad(a);
      for (int r = 0; r < y.rows(); ++r) {
        T dot = T(0);
        for (int c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
        for (int c = 0; c < y.cols(); ++c) da(r, c) += y(r, c) * (g(r, c) - dot);
      }
    };
    return v;
  }

  // Row-wise layer normalization with learnable gamma/beta (each (1, C)).
  Var layer_norm(Var x, Var gamma, Var beta, T eps = T(1e-5)) {
    const auto& xv = value(x);
    const int R = xv.rows(), C = xv.cols();
    if (rows(gamma) != 1 || cols(gamma) != C || rows(beta) != 1 || cols(beta) != C)
      throw ContractError("layer_norm: gamma/beta must be (1, cols(x))");
    auto xhat = std::make_shared<Tensor<T>>(R, C);
    auto inv_std = std::make_shared<std::vector<T>>(R);
    Tensor<T> out(R, C);
    const auto& gv = value(gamma);
    const auto& bv = value(beta);
    for (int r = 0; r < R; ++r) {
      T mean = T(0);
      for (int c = 0; c < C; ++c) mean += xv(r, c);
      mean /= T(C);
      T var = T(0);
      for (int c = 0; c < C; ++c) {
        const T d = xv(r, c) - mean;
        var += d * d;
      }
      var /= T(C);
      const T s = T(1) / std::sqrt(var + eps);
      (*inv_std)[r] = s;
      for (int c = 0; c < C; ++c) {
        const T xh = (xv(r, c) - mean) * s;
        (*xhat)(r, c) = xh;
        out(r, c) = xh * gv(0, c) + bv(0, c);
      }
    }
    Var v = push(std::move(out), wants_any({x, gamma, beta}), nullptr);
    if (node(v).needs_grad) {
      node(v).back = [id = v.id, x = x.id, ga = gamma.id, be = beta.id, xhat, inv_std](Tape& t) {
        const auto& g = t.nodes_[id].grad;
        const int R = g.rows(), C = g.cols();
        const auto& gv = t.nodes_[ga].value;
        if (t.wants(ga)) {
          auto& dg = t.grad(ga);
          for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) dg(0, c) += g(r, c) * (*xhat)(r, c);
        }
        if (t.wants(be)) {
          auto& db = t.grad(be);
          for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) db(0, c) += g(r, c);
        }
        if (t.wants(x)) {
          auto& dx = t.grad(x);
          for (int r = 0; r < R; ++r) {
            T mean_dxhat = T(0), mean_dxhat_xhat = T(0);
            for (int c = 0; c < C; ++c) {
              const T dxh = g(r, c) * gv(0, c);
              mean_dxhat += dxh;
              mean_dxhat_xhat += dxh * (*xhat)(r, c);
            }
            mean_dxhat /= T(C);
            mean_dxhat_xhat /= T(C);
            const T s = (*inv_std)[r];
            for (int c = 0; c < C; ++c) {
              const T dxh = g(r, c) * gv(0, c);
              dx(r, c) += s * (dxh - mean_dxhat - (*xhat)(r, c) * mean_dxhat_xhat);
            }
          }
        }
      };
    }
    return v;
  }

  // ---- reductions ----------------------------------------------------------

  Var sum_all(Var a) {
    Tensor<T> out = Tensor<T>::scalar(value(a).map().sum());
    return unary(std::move(out), a, [](Tape& t, int a, const Tensor<T>& g) {
      t.grad(a).map().array() += g[0];
    });
  }

  Var mean_all(Var a) {
    const T n = T(value(a).numel());
    Tensor<T> out = Tensor<T>::scalar(value(a).map().sum() / n);
    return unary(std::move(out), a, [n](Tape& t, int a, const Tensor<T>& g) {
      t.grad(a).map().array() += g[0] / n;
    });
  }

  // Column means: (R, C) -> (1, C). Used for global average pooling.
  Var mean_rows(Var a) {
    const auto& x = value(a);
    Tensor<T> out(1, x.cols());
    out.map().row(0) = x.map().colwise().mean();
    const T inv_r = T(1) / T(x.rows());
    return unary(std::move(out), a, [inv_r](Tape& t, int a, const Tensor<T>& g) {
      t.grad(a).map().rowwise() += g.map().row(0) * inv_r;
    });
  }

  // ---- structure -----------------------------------------------------------

  Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ContractError("concat_rows: no inputs");
    const int C = cols(parts[0]);
    int R = 0;
    for (Var p : parts) {
      if (cols(p) != C) throw ContractError("concat_rows: column mismatch");
      R += rows(p);
    }
    Tensor<T> out(R, C);
    int r0 = 0;
    bool ng = false;
    std::vector<std::pair<int, int>> spans;  // (id, row offset)
    spans.reserve(parts.size());
    for (Var p : parts) {
      out.map().middleRows(r0, rows(p)) = value(p).map();
      spans.emplace_back(p.id, r0);
      r0 += rows(p);
      ng = ng || node(p).needs_grad;
    }
    Var v = push(std::move(out), ng, nullptr);
    if (ng) {
      node(v).back = [id = v.id, spans = std::move(spans)](Tape& t) {
        const auto& g = t.nodes_[id].grad;
        for (auto [pid, off] : spans) {
          if (!t.wants(pid)) continue;
          auto& dp = t.grad(pid);
          dp.map() += g.map().middleRows(off, dp.rows());
        }
      };
    }
    return v;
  }

  Var concat_rows(std::initializer_list<Var> parts) {
    return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
  }

  Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    const int R = rows(parts[0]);
    int C = 0;
    for (Var p : parts) {
      if (rows(p) != R) throw ContractError("concat_cols: row mismatch");
      C += cols(p);
    }
    Tensor<T> out(R, C);
    int c0 = 0;
    bool ng = false;
    std::vector<std::pair<int, int>> spans;
    for (Var p : parts) {
      out.map().middleCols(c0, cols(p)) = value(p).map();
      spans.emplace_back(p.id, c0);
      c0 += cols(p);
      ng = ng || node(p).needs_grad;
    }
    Var v = push(std::move(out), ng, nullptr);
    if (ng) {
      node(v).back = [id = v.id, spans = std::move(spans)](Tape& t) {
        const auto& g = t.nodes_[id].grad;
        for (auto [pid, off] : spans) {
          if (!t.wants(pid)) continue;
          auto& dp = t.grad(pid);
          dp.map() += g.map().middleCols(off, dp.cols());
        }
      };
    }
    return v;
  }

  Var slice_rows(Var a, int r0, int n) {
    if (r0 < 0 || n < 0 || r0 + n > rows(a)) throw ContractError("slice_rows: out of range");
    Tensor<T> out(n, cols(a));
    out.map() = value(a).map().middleRows(r0, n);
    return unary(std::move(out), a, [r0, n](Tape& t, int a, const Tensor<T>& g) {
      t.grad(a).map().middleRows(r0, n) += g.map();
    });
  }

  Var slice_cols(Var a, int c0, int n) {
    if (c0 < 0 || n < 0 || c0 + n > cols(a)) throw ContractError("slice_cols: out of range");
    Tensor<T> out(rows(a), n);
    out.map() = value(a).map().middleCols(c0, n);
    return unary(std::move(out), a, [c0, n](Tape& t, int a, const Tensor<T>& g) {
      t.grad(a).map().middleCols(c0, n) += g.map();
    });
  }

  // Gather by plan over the flattened input (im2col and friends).
  Var gather(Var a, std::shared_ptr<const GatherPlan> plan) {
    const auto& x = value(a);
    Tensor<T> out(plan->out_rows, plan->out_cols);
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) {
      const std::int64_t s = plan->src[i];
      out[i] = s >= 0 ? x[std::size_t(s)] : T(0);
    }
    return unary(std::move(out), a, [plan](Tape& t, int a, const Tensor<T>& g) {
      auto& da = t.grad(a);
      for (std::size_t i = 0; i < g.numel(); ++i) {
        const std::int64_t s = plan->src[i];
        if (s >= 0) da[std::size_t(s)] += g[i];
      }
    });
  }

  // Sparse row interpolation applied per column (bilinear resize).
  Var linear_map_rows(Var a, std::shared_ptr<const LinearMapPlan> plan) {
    const auto& x = value(a);
    const int C = x.cols();
    Tensor<T> out(plan->out_rows, C);
    for (int r = 0; r < plan->out_rows; ++r) {
      for (int k = 0; k < plan->taps; ++k) {
        const int s = plan->idx[std::size_t(r) * plan->taps + k];
        const T w = T(plan->w[std::size_t(r) * plan->taps + k]);
        for (int c = 0; c < C; ++c) out(r, c) += w * x(s, c);
      }
    }
    return unary(std::move(out), a, [plan](Tape& t, int a, const Tensor<T>& g) {
      auto& da = t.grad(a);
      const int C = g.cols();
      for (int r = 0; r < plan->out_rows; ++r) {
        for (int k = 0; k < plan->taps; ++k) {
          const int s = plan->idx[std::size_t(r) * plan->taps + k];
          const T w = T(plan->w[std::size_t(r) * plan->taps + k]);
          for (int c = 0; c < C; ++c) da(s, c) += w * g(r, c);
        }
      }
    });
  }

  // ---- backward ------------------------------------------------------------

  // Reverse pass from a scalar output. Gradients accumulate into the sinks
  // registered by leaf().
  void backward(Var out) {
    if (!value(out).is_scalar())
      throw ContractError("backward: differentiation target must be a scalar (1x1)");
    if (ran_backward_) throw ContractError("backward: tape already consumed");
    ran_backward_ = true;
    grad(out.id)[0] = T(1);
    for (int i = out.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.back) continue;
      n.back(*this);
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated lazily, same shape as value
    std::function<void(Tape&)> back;
    bool needs_grad = false;
  };

  int check(Var v) const {
    if (v.id < 0 || std::size_t(v.id) >= nodes_.size())
      throw ContractError("invalid Var handle");
    return v.id;
  }

  void require_same_shape(Var a, Var b, const char* op) const {
    if (!value(a).same_shape(value(b)))
      throw ContractError(std::string(op) + ": shape mismatch");
  }

  Node& node(Var v) { return nodes_[check(v)]; }

  bool wants(int id) const { return nodes_[id].needs_grad; }
  bool wants_any(std::initializer_list<Var> vs) const {
    for (Var v : vs)
      if (nodes_[v.id].needs_grad) return true;
    return false;
  }

  Tensor<T>& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>::zeros(n.value.rows(), n.value.cols());
    return n.grad;
  }

  Var push(Tensor<T> value, bool needs_grad, std::function<void(Tape&)> back) {
    nodes_.push_back(Node{std::move(value), {}, std::move(back), needs_grad});
    return Var{int(nodes_.size()) - 1};
  }

  template <typename F>
  Var unary(Tensor<T> out, Var a, F&& fn) {
    const bool ng = node(a).needs_grad;
    Var v = push(std::move(out), ng, nullptr);
    if (ng) {
      node(v).back = [id = v.id, a = a.id, fn = std::forward<F>(fn)](Tape& t) {
        if (t.wants(a)) fn(t, a, t.nodes_[id].grad);
      };
    }
    return v;
  }

  // For ops whose backward reads the *output* value (sigmoid, sqrt, softmax).
  Var unary_saved(Tensor<T> out, Var a) {
    return push(std::move(out), node(a).needs_grad, nullptr);
  }

  template <typename F>
  Var binary(Tensor<T> out, Var a, Var b, F&& fn) {
    const bool ng = node(a).needs_grad || node(b).needs_grad;
    Var v = push(std::move(out), ng, nullptr);
    if (ng) {
      node(v).back = [id = v.id, a = a.id, b = b.id, fn = std::forward<F>(fn)](Tape& t) {
        fn(t, a, b, t.nodes_[id].grad);
      };
    }
    return v;
  }

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

// ---- plan builders ----------------------------------------------------------

inline GatherPlan make_im2col_plan(int h, int w, int channels, int kh, int kw, int stride,
                                   int pad) {
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (w + 2 * pad - kw) / stride + 1;
  GatherPlan plan;
  plan.out_rows = oh * ow;
  plan.out_cols = channels * kh * kw;
  plan.src.resize(std::size_t(plan.out_rows) * plan.out_cols);
  std::size_t i = 0;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      for (int c = 0; c < channels; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
          for (int kx = 0; kx < kw; ++kx) {
            const int sy = oy * stride + ky - pad;
            const int sx = ox * stride + kx - pad;
            plan.src[i++] = (sy < 0 || sy >= h || sx < 0 || sx >= w)
                                ? -1
                                : std::int64_t(sy * w + sx) * channels + c;
          }
        }
      }
    }
  }
  return plan;
}

// Half-pixel-center bilinear resize (the usual align_corners=false mapping).
inline LinearMapPlan make_bilinear_plan(int src_h, int src_w, int dst_h, int dst_w) {
  LinearMapPlan plan;
  plan.out_rows = dst_h * dst_w;
  plan.taps = 4;
  plan.idx.resize(std::size_t(plan.out_rows) * 4);
  plan.w.resize(std::size_t(plan.out_rows) * 4);
  const double sy = double(src_h) / dst_h;
  const double sx = double(src_w) / dst_w;
  std::size_t i = 0;
  for (int y = 0; y < dst_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::min(std::max(fy, 0.0), double(src_h - 1));
    const int y0 = int(fy);
    const int y1 = std::min(y0 + 1, src_h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < dst_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::min(std::max(fx, 0.0), double(src_w - 1));
      const int x0 = int(fx);
      const int x1 = std::min(x0 + 1, src_w - 1);
      const double wx = fx - x0;
      plan.idx[i * 4 + 0] = y0 * src_w + x0;
      plan.idx[i * 4 + 1] = y0 * src_w + x1;
      plan.idx[i * 4 + 2] = y1 * src_w + x0;
      plan.idx[i * 4 + 3] = y1 * src_w + x1;
      plan.w[i * 4 + 0] = (1 - wy) * (1 - wx);
      plan.w[i * 4 + 1] = (1 - wy) * wx;
      plan.w[i * 4 + 2] = wy * (1 - wx);
      plan.w[i * 4 + 3] = wy * wx;
      ++i;
    }
  }
  return plan;
}

// Plain-tensor bilinear resize for non-differentiated paths (metrics, viz).
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int src_h, int src_w, int dst_h, int dst_w) {
  if (x.rows() != src_h * src_w) throw ContractError("bilinear_resize: bad input shape");
  const LinearMapPlan plan = make_bilinear_plan(src_h, src_w, dst_h, dst_w);
  Tensor<T> out(plan.out_rows, x.cols());
  for (int r = 0; r < plan.out_rows; ++r)
    for (int k = 0; k < 4; ++k) {
      const int s = plan.idx[std::size_t(r) * 4 + k];
      const T w = T(plan.w[std::size_t(r) * 4 + k]);
      for (int c = 0; c < x.cols(); ++c) out(r, c) += w * x(s, c);
    }
  return out;
}

}  // namespace avseg
