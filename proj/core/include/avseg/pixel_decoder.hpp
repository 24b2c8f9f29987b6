#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "avseg/abti.hpp"
#include "avseg/config.hpp"
#include "avseg/encoders.hpp"
#include "avseg/nn.hpp"

namespace avseg {

// Single-frame audio-to-pixel cross-attention:
//   M_t = softmax(f_q(V_t) f_k(A_t)^T / sqrt(C_m)) f_v(A_t) + f_w(V_t)
// With exactly one audio key the softmax over keys is identically 1, so the
// result equals f_v(A_t) broadcast to every pixel plus f_w(V_t).
template <typename T>
struct AudioVisualCrossAttention {
  int c_m = 0;
  Linear<T> fq, fk, fv, fw;

  AudioVisualCrossAttention() = default;
  AudioVisualCrossAttention(int c_v, int c_a, int c_m, int c_f, Rng& rng)
      : c_m(c_m), fq(c_v, c_m, rng), fk(c_a, c_m, rng), fv(c_a, c_f, rng), fw(c_v, c_f, rng) {}

  Var forward(Tape<T>& tape, Var v_t, Var a_t, int frame_of_v, int frame_of_a, bool trainable) {
    if (frame_of_v != frame_of_a)
      throw ContractError("audio_visual_cross_attention: V and A are from different frames");
    if (tape.rows(a_t) != 1)
      throw ContractError("audio_visual_cross_attention: A_t must be a single row");
    Var q = fq(tape, v_t, trainable);                      // (H*W, C_m)
    Var k = fk(tape, a_t, trainable);                      // (1, C_m)
    Var logits = tape.scale(tape.matmul(q, k, false, true),
                            T(1) / T(std::sqrt(double(c_m))));  // (H*W, 1)
    Var attn = tape.softmax_rows(logits);
    Var value = fv(tape, a_t, trainable);                  // (1, C_f)
    Var mixed = tape.matmul(attn, value);                  // (H*W, C_f)
    return tape.add(mixed, fw(tape, v_t, trainable));
  }

  void visit(const std::string& prefix, const ParamVisitor<T>& v) {
    fq.visit(prefix + ".fq", v);
    fk.visit(prefix + ".fk", v);
    fv.visit(prefix + ".fv", v);
    fw.visit(prefix + ".fw", v);
  }
};

// Per-frame spatial context mixing: full self-attention over the H*W
// positions with 2-D sinusoidal encodings on queries/keys, then a
// feedforward block; residual connections around both.
template <typename T>
struct ScaleAggregator {
  int c_f = 0;
  MultiHeadAttention<T> attn;
  Ffn<T> ffn;

  ScaleAggregator() = default;
  ScaleAggregator(int c_f, int heads, Rng& rng)
      : c_f(c_f), attn(c_f, heads, rng), ffn(c_f, 4 * c_f, rng) {}

  Var forward(Tape<T>& tape, Var m, int h, int w, bool trainable) {
    Var pe = tape.constant(position_encoding(h, w));
    Var mixed = tape.add(m, attn(tape, m, m, pe, pe, trainable));
    return tape.add(mixed, ffn(tape, mixed, trainable));
  }

  void visit(const std::string& prefix, const ParamVisitor<T>& v) {
    attn.visit(prefix + ".attn", v);
    ffn.visit(prefix + ".ffn", v);
  }

 private:
  const Tensor<T>& position_encoding(int h, int w) {
    auto it = pe_cache_.find({h, w});
    if (it == pe_cache_.end())
      it = pe_cache_.emplace(std::make_pair(h, w), sinusoidal_position_encoding_2d<T>(h, w, c_f))
               .first;
    return it->second;
  }

  std::map<std::pair<int, int>, Tensor<T>> pe_cache_;
};

// Fuses audio into each pyramid level, aggregates spatial context on the
// three coarse levels, projects the finest level to the common width, and
// applies the temporal bridge on every level.
template <typename T>
struct PixelDecoder {
  int c_f = 0;
  std::array<AudioVisualCrossAttention<T>, 3> cross;  // levels 1..3
  std::array<ScaleAggregator<T>, 3> agg;              // levels 1..3
  Linear<T> level4_proj;
  std::array<Abti<T>, 4> bridge;                      // levels 1..4, independent parameters

  PixelDecoder() = default;
  PixelDecoder(const ModelConfig& cfg, const VisualEncoderWidths& widths, Rng& rng) : c_f(cfg.C_f) {
    for (int i = 0; i < 3; ++i) {
      cross[i] = AudioVisualCrossAttention<T>(widths.level_channels[i], cfg.C_a, cfg.C_m, cfg.C_f,
                                              rng);
      agg[i] = ScaleAggregator<T>(cfg.C_f, cfg.num_heads, rng);
    }
    level4_proj = Linear<T>(widths.level_channels[3], cfg.C_f, rng);
    for (int i = 0; i < 4; ++i)
      bridge[i] = Abti<T>(cfg.C_f, cfg.C_a, cfg.C_b, cfg.num_heads, rng);
  }

  // `level` is the spec-side index in 1..3; the finest level is aggregated
  // nowhere ("performed on all scales except the largest one").
  Var aggregate_scale(Tape<T>& tape, int level, Var m, int h, int w, bool trainable) {
    if (level < 1 || level > 3)
      throw ContractError("aggregate_scale applies to levels 1..3 only");
    return agg[level - 1].forward(tape, m, h, w, trainable);
  }

  PyramidVars<T> decode(Tape<T>& tape, const PyramidVars<T>& pyramid, Var audio,
                        bool abti_enabled, bool trainable) {
    const int t_frames = int(pyramid.levels[0].frames.size());
    if (tape.rows(audio) != t_frames)
      throw ContractError("pixel_decode: audio rows must match the frame count");

    PyramidVars<T> out;
    std::vector<Var> audio_rows(t_frames);
    for (int t = 0; t < t_frames; ++t) audio_rows[t] = tape.slice_rows(audio, t, 1);

    for (int i = 0; i < 4; ++i) {
      const auto& level = pyramid.levels[i];
      out.levels[i].h = level.h;
      out.levels[i].w = level.w;
      out.levels[i].channels = c_f;
      std::vector<Var> frames(t_frames);
      if (i < 3) {
        for (int t = 0; t < t_frames; ++t) {
          Var fused = cross[i].forward(tape, level.frames[t], audio_rows[t], t, t, trainable);
          frames[t] = aggregate_scale(tape, i + 1, fused, level.h, level.w, trainable);
        }
      } else {
        for (int t = 0; t < t_frames; ++t)
          frames[t] = level4_proj(tape, level.frames[t], trainable);
      }
      out.levels[i].frames =
          abti_enabled ? bridge[i].forward(tape, audio, frames, trainable) : std::move(frames);
    }
    return out;
  }

  void visit(const std::string& prefix, const ParamVisitor<T>& v) {
    for (int i = 0; i < 3; ++i) {
      cross[i].visit(prefix + ".cross" + std::to_string(i + 1), v);
      agg[i].visit(prefix + ".agg" + std::to_string(i + 1), v);
    }
    level4_proj.visit(prefix + ".level4_proj", v);
    for (int i = 0; i < 4; ++i)
      bridge[i].visit(prefix + ".bridge" + std::to_string(i + 1), v);
  }
};

}  // namespace avseg
