#pragma once

#include <string>
#include <vector>

#include "avseg/config.hpp"
#include "avseg/encoders.hpp"
#include "avseg/nn.hpp"

namespace avseg {

// Mask logits for one embedding set: logit_t = M^4_t (A_t)^T per frame; each
// query predicts only its own frame. Probabilities = sigmoid(logits).
template <typename T>
std::vector<Var> predict_mask_logits(Tape<T>& tape, Var embeddings,
                                     const std::vector<Var>& mask_features) {
  const int t_frames = int(mask_features.size());
  if (tape.rows(embeddings) != t_frames)
    throw ContractError("predict_mask: one embedding row per frame required");
  std::vector<Var> logits(t_frames);
  for (int t = 0; t < t_frames; ++t) {
    Var e_t = tape.slice_rows(embeddings, t, 1);                  // (1, C_f)
    logits[t] = tape.matmul(mask_features[t], e_t, false, true);  // (H4*W4, 1)
  }
  return logits;
}

// One decoder layer, post-norm order exactly as written:
//   X  = LN(MHCA(A, M)) + A
//   X' = LN(MHSA(X)) + X
//   A' = LN(FFN(X')) + X'
template <typename T>
struct DecoderLayer {
  MultiHeadAttention<T> cross_attn, self_attn;
  Ffn<T> ffn;
  LayerNorm<T> norm_cross, norm_self, norm_ffn;

  DecoderLayer() = default;
  DecoderLayer(int c_f, int heads, Rng& rng)
      : cross_attn(c_f, heads, rng),
        self_attn(c_f, heads, rng),
        ffn(c_f, 4 * c_f, rng),
        norm_cross(c_f),
        norm_self(c_f),
        norm_ffn(c_f) {}

  // kv: (T*hw, C_f) flattened level features; key_pos matches kv.
  // In single-frame mode, query t attends only to its own frame's hw keys.
  // attn_sink, when set, receives the cross-attention weights (T, T*hw)
  // averaged over heads (zero outside the attended block in single-frame
  // mode).
  Var forward(Tape<T>& tape, Var queries, Var kv, Var key_pos, bool single_frame, int hw,
              bool trainable, Tensor<T>* attn_sink = nullptr) {
    const int t_frames = tape.rows(queries);
    Var cross_out;
    if (!single_frame) {
      cross_out = cross_attn(tape, queries, kv, Var{}, key_pos, trainable, attn_sink);
    } else {
      if (tape.rows(kv) != t_frames * hw)
        throw ContractError("decoder_layer: kv rows must equal T*hw");
      if (attn_sink) *attn_sink = Tensor<T>::zeros(t_frames, t_frames * hw);
      std::vector<Var> rows(t_frames);
      for (int t = 0; t < t_frames; ++t) {
        Var q_t = tape.slice_rows(queries, t, 1);
        Var kv_t = tape.slice_rows(kv, t * hw, hw);
        Var pos_t = key_pos.valid() ? tape.slice_rows(key_pos, t * hw, hw) : Var{};
        Tensor<T> attn_row;
        rows[t] = cross_attn(tape, q_t, kv_t, Var{}, pos_t, trainable,
                             attn_sink ? &attn_row : nullptr);
        if (attn_sink)
          for (int j = 0; j < hw; ++j) (*attn_sink)(t, t * hw + j) = attn_row(0, j);
      }
      cross_out = tape.concat_rows(std::span<const Var>(rows.data(), rows.size()));
    }
    Var x = tape.add(norm_cross(tape, cross_out, trainable), queries);
    Var self_out = self_attn(tape, x, x, Var{}, Var{}, trainable);
    Var x2 = tape.add(norm_self(tape, self_out, trainable), x);
    Var ffn_out = ffn(tape, x2, trainable);
    return tape.add(norm_ffn(tape, ffn_out, trainable), x2);
  }

  void visit(const std::string& prefix, const ParamVisitor<T>& v) {
    cross_attn.visit(prefix + ".cross_attn", v);
    self_attn.visit(prefix + ".self_attn", v);
    ffn.visit(prefix + ".ffn", v);
    norm_cross.visit(prefix + ".norm_cross", v);
    norm_self.visit(prefix + ".norm_self", v);
    norm_ffn.visit(prefix + ".norm_ffn", v);
  }
};

template <typename T>
struct DecoderRun {
  Var final_embeddings;                                 // (T, C_f)
  std::vector<Var> per_layer_embeddings;                // 3N entries
  std::vector<std::vector<Var>> per_layer_mask_logits;  // [layer][frame] (H4*W4, 1)
  std::vector<int> layer_level;                         // spec level 1..3 per layer
  Tensor<T> last_cross_attention;                       // (T, T*hw), empty unless captured
  int last_attn_h = 0, last_attn_w = 0;
};

// The audio-queried decoder: T queries initialized from per-frame audio
// embeddings (or learned frame-agnostic embeddings in vanilla mode) are
// refined over N stages x 3 layers, visiting levels coarsest to finest;
// every layer's embeddings and mask logits are recorded for deep
// supervision.
template <typename T>
struct QueryDecoder {
  int c_f = 0, t_frames = 0, stages = 0;
  QueryMode mode = QueryMode::audio;
  bool use_frame_pos = false;
  Linear<T> init_proj;
  Param<T> vanilla_queries;             // (T, C_f)
  std::array<Param<T>, 3> level_embed;  // (1, C_f) each
  Param<T> frame_embed;                 // (T, C_f)
  std::vector<DecoderLayer<T>> layers;  // 3N, distinct parameters

  QueryDecoder() = default;
  QueryDecoder(const ModelConfig& cfg, Rng& rng)
      : c_f(cfg.C_f),
        t_frames(cfg.T),
        stages(cfg.N),
        mode(cfg.query_mode),
        use_frame_pos(cfg.use_frame_positional_encoding),
        init_proj(cfg.C_a, cfg.C_f, rng) {
    vanilla_queries.resize(cfg.T, cfg.C_f);
    vanilla_queries.init_uniform(cfg.C_f, rng);
    for (auto& e : level_embed) {
      e.resize(1, cfg.C_f);
      e.init_uniform(cfg.C_f, rng);
    }
    frame_embed.resize(cfg.T, cfg.C_f);
    frame_embed.init_uniform(cfg.C_f, rng);
    layers.reserve(std::size_t(3) * cfg.N);
    for (int l = 0; l < 3 * cfg.N; ++l) layers.emplace_back(cfg.C_f, cfg.num_heads, rng);
  }

  // A^0: linear(A) in the audio modes, learned embeddings otherwise.
  Var init_queries(Tape<T>& tape, Var audio, bool trainable) {
    if (mode == QueryMode::vanilla) return vanilla_queries.bind(tape, trainable);
    return init_proj(tape, audio, trainable);
  }

  DecoderRun<T> run(Tape<T>& tape, const PyramidVars<T>& enhanced, Var audio, bool trainable,
                    bool capture_last_attention = false) {
    // flatten levels 1..3 once; keys carry spatial + level (+ frame) encodings
    std::array<Var, 3> kv, key_pos;
    std::array<int, 3> hw;
    for (int i = 0; i < 3; ++i) {
      const auto& level = enhanced.levels[i];
      const int t = int(level.frames.size());
      hw[i] = level.h * level.w;
      kv[i] = tape.concat_rows(std::span<const Var>(level.frames.data(), level.frames.size()));
      const Tensor<T> pe = sinusoidal_position_encoding_2d<T>(level.h, level.w, c_f);
      Var level_emb = level_embed[i].bind(tape, trainable);
      Var frame_emb = use_frame_pos ? frame_embed.bind(tape, trainable) : Var{};
      std::vector<Var> blocks(t);
      for (int f = 0; f < t; ++f) {
        Var block = tape.add_rowvec(tape.constant(pe), level_emb);
        if (use_frame_pos)
          block = tape.add_rowvec(block, tape.slice_rows(frame_emb, f, 1));
        blocks[f] = block;
      }
      key_pos[i] = tape.concat_rows(std::span<const Var>(blocks.data(), blocks.size()));
    }

    const auto& mask_level = enhanced.levels[3];
    const bool single_frame = mode == QueryMode::audio_single_frame;

    DecoderRun<T> out;
    Var queries = init_queries(tape, audio, trainable);
    const int total_layers = 3 * stages;
    for (int l = 0; l < total_layers; ++l) {
      const int level_idx = l % 3;  // coarsest -> finest within each stage
      const bool capture = capture_last_attention && l == total_layers - 1;
      queries = layers[l].forward(tape, queries, kv[level_idx], key_pos[level_idx], single_frame,
                                  hw[level_idx], trainable,
                                  capture ? &out.last_cross_attention : nullptr);
      if (capture) {
        out.last_attn_h = enhanced.levels[level_idx].h;
        out.last_attn_w = enhanced.levels[level_idx].w;
      }
      out.layer_level.push_back(level_idx + 1);
      out.per_layer_embeddings.push_back(queries);
      out.per_layer_mask_logits.push_back(predict_mask_logits(tape, queries, mask_level.frames));
    }
    out.final_embeddings = queries;
    return out;
  }

  void visit(const std::string& prefix, const ParamVisitor<T>& v) {
    init_proj.visit(prefix + ".init_proj", v);
    v(prefix + ".vanilla_queries", vanilla_queries);
    for (int i = 0; i < 3; ++i)
      v(prefix + ".level_embed" + std::to_string(i + 1), level_embed[i]);
    v(prefix + ".frame_embed", frame_embed);
    for (std::size_t l = 0; l < layers.size(); ++l)
      layers[l].visit(prefix + ".layer" + std::to_string(l), v);
  }
};

}  // namespace avseg
