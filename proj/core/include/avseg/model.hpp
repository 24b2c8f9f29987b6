#pragma once

#include <string>
#include <utility>
#include <vector>

#include "avseg/config.hpp"
#include "avseg/encoders.hpp"
#include "avseg/objectives.hpp"
#include "avseg/pixel_decoder.hpp"
#include "avseg/query_decoder.hpp"
#include "avseg/types.hpp"

namespace avseg {

// The full audio-queried segmentation model. Parameter construction order is
// fixed (encoders, pixel decoder, query decoder), so a given config + seed
// always produces the same initialization and the same checkpoint layout.
template <typename T>
struct Model {
  ModelConfig cfg;
  VisualEncoderWidths visual_widths;
  AudioEncoderWidths audio_widths;

 private:
  Rng rng_;  // declared before the modules: they consume it during construction

 public:
  VisualEncoder<T> visual;
  AudioEncoder<T> audio;
  PixelDecoder<T> pixel;
  QueryDecoder<T> decoder;

  explicit Model(const ModelConfig& config, VisualEncoderWidths vw = {},
                 AudioEncoderWidths aw = {})
      : cfg((config.validate(), config)),
        visual_widths(vw),
        audio_widths(aw),
        rng_(config.seed),
        visual(vw, rng_),
        audio(aw, config.C_a, rng_),
        pixel(config, vw, rng_),
        decoder(config, rng_) {}

  struct Forward {
    Var audio_features;       // (T, C_a)
    PyramidVars<T> enhanced;  // pixel-decoder output, all levels C_f wide
    DecoderRun<T> run;
  };

  Forward forward_clip(Tape<T>& tape, const std::vector<Tensor<T>>& frames,
                       const Spectrogram<T>& spectrogram, bool trainable,
                       bool capture_attention = false) {
    if (int(frames.size()) != cfg.T || int(spectrogram.segments.size()) != cfg.T)
      throw ContractError("forward_clip: frame/segment count must equal T");
    std::vector<Var> frame_vars;
    frame_vars.reserve(frames.size());
    for (const auto& f : frames) frame_vars.push_back(tape.constant(f));

    Forward out;
    PyramidVars<T> pyramid = visual.encode(tape, frame_vars, cfg.image_h, cfg.image_w, trainable);
    out.audio_features = audio.encode(tape, spectrogram, trainable);
    out.enhanced = pixel.decode(tape, pyramid, out.audio_features, cfg.abti_enabled, trainable);
    out.run = decoder.run(tape, out.enhanced, out.audio_features, trainable, capture_attention);
    return out;
  }

  // Final-layer mask probabilities at ground-truth resolution (no tape kept).
  std::vector<Tensor<T>> predict_probabilities(const std::vector<Tensor<T>>& frames,
                                               const Spectrogram<T>& spectrogram) {
    Tape<T> tape;
    Forward f = forward_clip(tape, frames, spectrogram, false);
    const auto& logits = f.run.per_layer_mask_logits.back();
    const int h4 = f.enhanced.levels[3].h, w4 = f.enhanced.levels[3].w;
    std::vector<Tensor<T>> probs;
    probs.reserve(logits.size());
    for (Var l : logits) {
      Tensor<T> p = tape.value(tape.sigmoid(l));
      probs.push_back(bilinear_resize(p, h4, w4, cfg.image_h, cfg.image_w));
    }
    return probs;
  }

  void visit(const std::string& prefix, const ParamVisitor<T>& v) {
    visual.visit(prefix + "visual", v);
    audio.visit(prefix + "audio", v);
    pixel.visit(prefix + "pixel", v);
    decoder.visit(prefix + "decoder", v);
  }

  std::vector<std::pair<std::string, Tensor<T>*>> named_parameters() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    visit("", [&](const std::string& name, Param<T>& p) { out.emplace_back(name, &p.value); });
    return out;
  }

  void zero_grads() {
    visit("", [](const std::string&, Param<T>& p) { p.grad.set_zero(); });
  }
};

// Casts a float clip (frames + spectrogram) to the model's scalar type.
template <typename T>
std::vector<Tensor<T>> cast_frames(const std::vector<Tensor<float>>& frames) {
  std::vector<Tensor<T>> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.template cast<T>());
  return out;
}

template <typename T>
Spectrogram<T> cast_spectrogram(const Spectrogram<float>& s) {
  Spectrogram<T> out;
  out.n_time = s.n_time;
  out.n_bins = s.n_bins;
  out.segments.reserve(s.segments.size());
  for (const auto& seg : s.segments) out.segments.push_back(seg.template cast<T>());
  return out;
}

template <typename T>
std::vector<Tensor<T>> cast_masks(const std::vector<Tensor<float>>& masks) {
  return cast_frames<T>(masks);
}

}  // namespace avseg
