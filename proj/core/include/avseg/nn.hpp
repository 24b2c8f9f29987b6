#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "avseg/rng.hpp"
#include "avseg/tape.hpp"
#include "avseg/tensor.hpp"

namespace avseg {

// Named learnable tensor plus its gradient accumulator.
template <typename T>
struct Param {
  Tensor<T> value;
  Tensor<T> grad;

  void resize(int r, int c) {
    value = Tensor<T>::zeros(r, c);
    grad = Tensor<T>::zeros(r, c);
  }

  // Uniform(-a, a), a = 1/sqrt(fan_in).
  void init_uniform(int fan_in, Rng& rng) {
    const double a = 1.0 / std::sqrt(double(fan_in));
    for (auto& x : value.storage()) x = T(rng.uniform(-a, a));
  }

  // Binds the parameter into a tape: trainable passes attach the gradient
  // sink, inference passes record a plain constant.
  Var bind(Tape<T>& tape, bool trainable) {
    return trainable ? tape.leaf(value, &grad) : tape.constant(value);
  }
};

template <typename T>
using ParamVisitor = std::function<void(const std::string&, Param<T>&)>;

template <typename T>
struct Linear {
  Param<T> w;  // (out, in)
  Param<T> b;  // (1, out)

  Linear() = default;
  Linear(int in, int out, Rng& rng) {
    w.resize(out, in);
    b.resize(1, out);
    w.init_uniform(in, rng);
    b.init_uniform(in, rng);
  }

  Var operator()(Tape<T>& tape, Var x, bool trainable) {
    Var y = tape.matmul(x, w.bind(tape, trainable), false, true);
    return tape.add_rowvec(y, b.bind(tape, trainable));
  }

  void visit(const std::string& prefix, const ParamVisitor<T>& v) {
    v(prefix + ".w", w);
    v(prefix + ".b", b);
  }
};

template <typename T>
struct LayerNorm {
  Param<T> gamma;
  Param<T> beta;
  T eps = T(1e-5);

  LayerNorm() = default;
  explicit LayerNorm(int channels) {
    gamma.resize(1, channels);
    gamma.value.fill(T(1));
    beta.resize(1, channels);
  }

  Var operator()(Tape<T>& tape, Var x, bool trainable) {
    return tape.layer_norm(x, gamma.bind(tape, trainable), beta.bind(tape, trainable), eps);
  }

  void visit(const std::string& prefix, const ParamVisitor<T>& v) {
    v(prefix + ".gamma", gamma);
    v(prefix + ".beta", beta);
  }
};

// Strided 2-D convolution on flattened (H*W, C_in) frames via im2col.
template <typename T>
struct Conv2d {
  int c_in = 0, c_out = 0, kernel = 3, stride = 1, pad = 1;
  Param<T> w;  // (c_out, c_in * k * k)
  Param<T> b;  // (1, c_out)

  Conv2d() = default;
  Conv2d(int c_in, int c_out, int kernel, int stride, int pad, Rng& rng)
      : c_in(c_in), c_out(c_out), kernel(kernel), stride(stride), pad(pad) {
    w.resize(c_out, c_in * kernel * kernel);
    b.resize(1, c_out);
    const int fan_in = c_in * kernel * kernel;
    w.init_uniform(fan_in, rng);
    b.init_uniform(fan_in, rng);
  }

  int out_dim(int d) const { return (d + 2 * pad - kernel) / stride + 1; }

  Var operator()(Tape<T>& tape, Var x, int h, int w_in, bool trainable) {
    auto plan = plan_for(h, w_in);
    Var cols = tape.gather(x, plan);
    Var y = tape.matmul(cols, w.bind(tape, trainable), false, true);
    return tape.add_rowvec(y, b.bind(tape, trainable));
  }

  void visit(const std::string& prefix, const ParamVisitor<T>& v) {
    v(prefix + ".w", w);
    v(prefix + ".b", b);
  }

 private:
  std::shared_ptr<const GatherPlan> plan_for(int h, int w_in) {
    const auto key = std::make_pair(h, w_in);
    auto it = plans_.find(key);
    if (it == plans_.end()) {
      it = plans_
               .emplace(key, std::make_shared<const GatherPlan>(
                                 make_im2col_plan(h, w_in, c_in, kernel, kernel, stride, pad)))
               .first;
    }
    return it->second;
  }

  std::map<std::pair<int, int>, std::shared_ptr<const GatherPlan>> plans_;
};

// Two-layer feedforward block with ReLU.
template <typename T>
struct Ffn {
  Linear<T> fc1, fc2;

  Ffn() = default;
  Ffn(int channels, int hidden, Rng& rng) : fc1(channels, hidden, rng), fc2(hidden, channels, rng) {}

  Var operator()(Tape<T>& tape, Var x, bool trainable) {
    return fc2(tape, tape.relu(fc1(tape, x, trainable)), trainable);
  }

  void visit(const std::string& prefix, const ParamVisitor<T>& v) {
    fc1.visit(prefix + ".fc1", v);
    fc2.visit(prefix + ".fc2", v);
  }
};

// Multi-head attention. Positional encodings, when given, are added to the
// query/key inputs before projection; values always come from the raw
// content. Per-query attention weights (averaged over heads) can be captured
// through attn_sink.
template <typename T>
struct MultiHeadAttention {
  int d_model = 0, heads = 1;
  Linear<T> wq, wk, wv, wo;

  MultiHeadAttention() = default;
  MultiHeadAttention(int d_model, int heads, Rng& rng)
      : d_model(d_model),
        heads(heads),
        wq(d_model, d_model, rng),
        wk(d_model, d_model, rng),
        wv(d_model, d_model, rng),
        wo(d_model, d_model, rng) {
    if (heads < 1 || d_model % heads != 0)
      throw ConfigError("attention width must be divisible by the head count");
  }

  Var operator()(Tape<T>& tape, Var query, Var key_value, Var query_pos, Var key_pos,
                 bool trainable, Tensor<T>* attn_sink = nullptr) {
    Var q_in = query_pos.valid() ? tape.add(query, query_pos) : query;
    Var k_in = key_pos.valid() ? tape.add(key_value, key_pos) : key_value;
    Var q = wq(tape, q_in, trainable);
    Var k = wk(tape, k_in, trainable);
    Var v = wv(tape, key_value, trainable);
    const int dk = d_model / heads;
    const T scale = T(1) / T(std::sqrt(double(dk)));
    std::vector<Var> head_outs;
    head_outs.reserve(heads);
    if (attn_sink) *attn_sink = Tensor<T>::zeros(tape.rows(q), tape.rows(k));
    for (int h = 0; h < heads; ++h) {
      Var qh = tape.slice_cols(q, h * dk, dk);
      Var kh = tape.slice_cols(k, h * dk, dk);
      Var vh = tape.slice_cols(v, h * dk, dk);
      Var logits = tape.scale(tape.matmul(qh, kh, false, true), scale);
      Var attn = tape.softmax_rows(logits);
      if (attn_sink) {
        const auto& a = tape.value(attn);
        attn_sink->map() += a.map() / T(heads);
      }
      head_outs.push_back(tape.matmul(attn, vh));
    }
    Var merged = tape.concat_cols(std::span<const Var>(head_outs.data(), head_outs.size()));
    return wo(tape, merged, trainable);
  }

  void visit(const std::string& prefix, const ParamVisitor<T>& v) {
    wq.visit(prefix + ".wq", v);
    wk.visit(prefix + ".wk", v);
    wv.visit(prefix + ".wv", v);
    wo.visit(prefix + ".wo", v);
  }
};

// Fixed 2-D sinusoidal positional encoding over an h x w grid; the first
// half of the channels encodes y, the second half x.
template <typename T>
Tensor<T> sinusoidal_position_encoding_2d(int h, int w, int channels) {
  if (channels % 4 != 0)
    throw ConfigError("2-D sinusoidal encoding needs a channel count divisible by 4");
  Tensor<T> pe(h * w, channels);
  const int half = channels / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int row = y * w + x;
      for (int j = 0; j < half; ++j) {
        const double t = std::pow(10000.0, double(2 * (j / 2)) / half);
        const double ay = double(y) / t;
        const double ax = double(x) / t;
        pe(row, j) = T(j % 2 == 0 ? std::sin(ay) : std::cos(ay));
        pe(row, half + j) = T(j % 2 == 0 ? std::sin(ax) : std::cos(ax));
      }
    }
  }
  return pe;
}

}  // namespace avseg
