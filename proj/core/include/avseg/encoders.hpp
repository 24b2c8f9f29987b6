#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "avseg/nn.hpp"
#include "avseg/stft.hpp"
#include "avseg/tape.hpp"
#include "avseg/types.hpp"

namespace avseg {

// Graph-side feature pyramid: levels[0] is the coarsest scale (1/32 of the
// input, "level 1"), levels[3] the finest (1/4, "level 4").
template <typename T>
struct PyramidVars {
  struct Level {
    int h = 0, w = 0, channels = 0;
    std::vector<Var> frames;  // per frame (h*w, channels)
  };
  std::array<Level, 4> levels;

  FeaturePyramid<T> values(const Tape<T>& tape) const {
    FeaturePyramid<T> out;
    for (int i = 0; i < 4; ++i) {
      out.levels[i].h = levels[i].h;
      out.levels[i].w = levels[i].w;
      out.levels[i].channels = levels[i].channels;
      for (Var f : levels[i].frames) out.levels[i].frames.push_back(tape.value(f));
    }
    return out;
  }
};

struct VisualEncoderWidths {
  int stem = 16;
  // channels per pyramid level, coarsest (1/32) first
  std::array<int, 4> level_channels{64, 48, 32, 24};
};

// Per-frame strided conv stack: two stride-2 stem convs reach 1/4 resolution
// (level 4), then three more stride-2 convs produce 1/8, 1/16 and 1/32.
// Frames are encoded independently; no temporal mixing happens here.
template <typename T>
struct VisualEncoder {
  VisualEncoderWidths widths;
  Conv2d<T> stem_a, stem_b, down8, down16, down32;

  VisualEncoder(const VisualEncoderWidths& w, Rng& rng)
      : widths(w),
        stem_a(3, w.stem, 3, 2, 1, rng),
        stem_b(w.stem, w.level_channels[3], 3, 2, 1, rng),
        down8(w.level_channels[3], w.level_channels[2], 3, 2, 1, rng),
        down16(w.level_channels[2], w.level_channels[1], 3, 2, 1, rng),
        down32(w.level_channels[1], w.level_channels[0], 3, 2, 1, rng) {}

  PyramidVars<T> encode(Tape<T>& tape, const std::vector<Var>& frames, int h, int w,
                        bool trainable) {
    if (h % 32 != 0 || w % 32 != 0)
      throw ConfigError("visual encoder needs spatial sizes divisible by 32");
    PyramidVars<T> pyr;
    for (int i = 0; i < 4; ++i) {
      pyr.levels[i].h = h >> (5 - i);
      pyr.levels[i].w = w >> (5 - i);
      pyr.levels[i].channels = widths.level_channels[i];
    }
    for (Var frame : frames) {
      Var x = tape.relu(stem_a(tape, frame, h, w, trainable));
      x = tape.relu(stem_b(tape, x, h / 2, w / 2, trainable));
      pyr.levels[3].frames.push_back(x);  // 1/4
      x = tape.relu(down8(tape, x, h / 4, w / 4, trainable));
      pyr.levels[2].frames.push_back(x);  // 1/8
      x = tape.relu(down16(tape, x, h / 8, w / 8, trainable));
      pyr.levels[1].frames.push_back(x);  // 1/16
      x = tape.relu(down32(tape, x, h / 16, w / 16, trainable));
      pyr.levels[0].frames.push_back(x);  // 1/32
    }
    return pyr;
  }

  // Convenience wrapper for callers outside a training graph.
  FeaturePyramid<T> encode_visual(const std::vector<Tensor<T>>& frames, int h, int w) {
    Tape<T> tape;
    std::vector<Var> vars;
    vars.reserve(frames.size());
    for (const auto& f : frames) vars.push_back(tape.constant(f));
    return encode(tape, vars, h, w, false).values(tape);
  }

  void visit(const std::string& prefix, const ParamVisitor<T>& v) {
    stem_a.visit(prefix + ".stem_a", v);
    stem_b.visit(prefix + ".stem_b", v);
    down8.visit(prefix + ".down8", v);
    down16.visit(prefix + ".down16", v);
    down32.visit(prefix + ".down32", v);
  }
};

struct AudioEncoderWidths {
  int c1 = 8;
  int c2 = 16;
};

// Per-segment spectrogram encoder: two strided convs over the (time, bin)
// grid, energy-weighted global pooling, then a linear head to C_a. The conv
// input carries two channels: log1p magnitude and a normalized frequency
// coordinate. Plain conv + mean pooling is (nearly) translation invariant
// over frequency, which would map pure tones of different pitches to almost
// identical embeddings; the coordinate channel plus magnitude-weighted
// pooling keeps the embedding pitch-dependent.
template <typename T>
struct AudioEncoder {
  AudioEncoderWidths widths;
  int c_a = 0;
  Conv2d<T> conv1, conv2;
  Linear<T> head;

  AudioEncoder(const AudioEncoderWidths& w, int c_a, Rng& rng)
      : widths(w),
        c_a(c_a),
        conv1(2, w.c1, 3, 2, 1, rng),
        conv2(w.c1, w.c2, 3, 2, 1, rng),
        head(w.c2, c_a, rng) {}

  // (T segments) -> (T, C_a)
  Var encode(Tape<T>& tape, const Spectrogram<T>& spec, bool trainable) {
    std::vector<Var> rows;
    rows.reserve(spec.segments.size());
    for (const auto& seg : spec.segments) {
      Tensor<T> input(spec.n_time * spec.n_bins, 2);
      Tensor<T> energy(spec.n_time * spec.n_bins, 1);
      for (int t = 0; t < spec.n_time; ++t)
        for (int b = 0; b < spec.n_bins; ++b) {
          const int r = t * spec.n_bins + b;
          input(r, 0) = T(std::log1p(double(seg(t, b))));
          input(r, 1) = T(b) / T(spec.n_bins - 1);
          energy(r, 0) = input(r, 0);
        }
      Var x = tape.constant(std::move(input));
      x = tape.relu(conv1(tape, x, spec.n_time, spec.n_bins, trainable));
      const int h1 = conv1.out_dim(spec.n_time), w1 = conv1.out_dim(spec.n_bins);
      x = tape.relu(conv2(tape, x, h1, w1, trainable));
      const int h2 = conv2.out_dim(h1), w2 = conv2.out_dim(w1);
      // pool weights: spectrogram energy resampled to the conv output grid
      Tensor<T> w = bilinear_resize(energy, spec.n_time, spec.n_bins, h2, w2);
      T w_sum = T(0);
      for (auto v : w.storage()) w_sum += v;
      Var weighted = tape.mul_colvec(x, tape.constant(std::move(w)));
      Var pooled = tape.scale(tape.mean_rows(weighted),
                              T(h2 * w2) / (w_sum + T(1e-6)));
      rows.push_back(head(tape, pooled, trainable));
    }
    return tape.concat_rows(std::span<const Var>(rows.data(), rows.size()));
  }

  AudioFeatures<T> encode_audio(const Spectrogram<T>& spec) {
    Tape<T> tape;
    return tape.value(encode(tape, spec, false));
  }

  void visit(const std::string& prefix, const ParamVisitor<T>& v) {
    conv1.visit(prefix + ".conv1", v);
    conv2.visit(prefix + ".conv2", v);
    head.visit(prefix + ".head", v);
  }
};

}  // namespace avseg
