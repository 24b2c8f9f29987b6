#pragma once

#include <string>
#include <vector>

#include "avseg/nn.hpp"
#include "avseg/tape.hpp"

namespace avseg {

// Audio-bridged temporal interaction over one feature scale. For each pair
// (p = audio frame, q = visual frame), an audio-conditioned spatial softmax
// pools frame q's pixels into a compact feature; the T*T compact features
// exchange information through self-attention and are scattered back onto
// the frames as a residual. The output projection starts at zero, so a
// freshly constructed module is the identity.
template <typename T>
struct Abti {
  int c_feat = 0, c_audio = 0, c_b = 0;
  Linear<T> audio_proj;    // f_a: C_a -> C_b
  Linear<T> pixel_key;     // f_m: C  -> C_b
  Linear<T> pixel_value;   // f_n: C  -> C_b
  Linear<T> out_proj;      // f_o: C_b -> C, zero-initialized
  MultiHeadAttention<T> interact_attn;
  Ffn<T> interact_ffn;

  Abti() = default;
  Abti(int c_feat, int c_audio, int c_b, int heads, Rng& rng)
      : c_feat(c_feat),
        c_audio(c_audio),
        c_b(c_b),
        audio_proj(c_audio, c_b, rng),
        pixel_key(c_feat, c_b, rng),
        pixel_value(c_feat, c_b, rng),
        out_proj(c_b, c_feat, rng),
        interact_attn(c_b, heads, rng),
        interact_ffn(c_b, 2 * c_b, rng) {
    out_proj.w.value.set_zero();
    out_proj.b.value.set_zero();
  }

  struct Gathered {
    std::vector<Var> attention;  // T*T entries (p-major), each (1, H*W), rows sum to 1
    Var compact;                 // (T*T, C_b)
    int t_frames = 0;
  };

  // Eq. pair: S_pq = softmax(f_a(A_p) f_m(F_q)^T) over pixels,
  //           O_pq = S_pq f_n(F_q).
  Gathered gather(Tape<T>& tape, Var audio, const std::vector<Var>& frames, bool trainable) {
    const int t_frames = int(frames.size());
    if (tape.rows(audio) != t_frames)
      throw ContractError("abti: audio rows must match the visual frame count");
    Var audio_keys = audio_proj(tape, audio, trainable);  // (T, C_b)
    std::vector<Var> keys(t_frames), values(t_frames);
    for (int q = 0; q < t_frames; ++q) {
      keys[q] = pixel_key(tape, frames[q], trainable);
      values[q] = pixel_value(tape, frames[q], trainable);
    }
    Gathered g;
    g.t_frames = t_frames;
    std::vector<Var> compact_rows;
    compact_rows.reserve(std::size_t(t_frames) * t_frames);
    for (int p = 0; p < t_frames; ++p) {
      Var a_p = tape.slice_rows(audio_keys, p, 1);
      for (int q = 0; q < t_frames; ++q) {
        Var logits = tape.matmul(a_p, keys[q], false, true);  // (1, H*W)
        Var attn = tape.softmax_rows(logits);
        g.attention.push_back(attn);
        compact_rows.push_back(tape.matmul(attn, values[q]));  // (1, C_b)
      }
    }
    g.compact = tape.concat_rows(std::span<const Var>(compact_rows.data(), compact_rows.size()));
    return g;
  }

  // Self-attention + FFN with residuals over the T*T compact tokens.
  Var interact(Tape<T>& tape, Var compact, bool trainable) {
    Var mixed = tape.add(compact, interact_attn(tape, compact, compact, Var{}, Var{}, trainable));
    return tape.add(mixed, interact_ffn(tape, mixed, trainable));
  }

  // F~_pq = S_pq^T f_o(O^_pq);  F^_q = F_q + sum_p F~_pq.
  std::vector<Var> remap_enhance(Tape<T>& tape, const Gathered& g, Var updated,
                                 const std::vector<Var>& frames, bool trainable) {
    const int t_frames = g.t_frames;
    Var projected = out_proj(tape, updated, trainable);  // (T*T, C)
    std::vector<Var> out(frames.size());
    for (int q = 0; q < t_frames; ++q) {
      Var acc = frames[q];
      for (int p = 0; p < t_frames; ++p) {
        Var o_pq = tape.slice_rows(projected, p * t_frames + q, 1);     // (1, C)
        Var spread = tape.matmul(g.attention[p * t_frames + q], o_pq,  // (H*W, C)
                                 true, false);
        acc = tape.add(acc, spread);
      }
      out[q] = acc;
    }
    return out;
  }

  std::vector<Var> forward(Tape<T>& tape, Var audio, const std::vector<Var>& frames,
                           bool trainable) {
    Gathered g = gather(tape, audio, frames, trainable);
    Var updated = interact(tape, g.compact, trainable);
    return remap_enhance(tape, g, updated, frames, trainable);
  }

  void visit(const std::string& prefix, const ParamVisitor<T>& v) {
    audio_proj.visit(prefix + ".audio_proj", v);
    pixel_key.visit(prefix + ".pixel_key", v);
    pixel_value.visit(prefix + ".pixel_value", v);
    out_proj.visit(prefix + ".out_proj", v);
    interact_attn.visit(prefix + ".interact_attn", v);
    interact_ffn.visit(prefix + ".interact_ffn", v);
  }
};

}  // namespace avseg
