#pragma once

#include <array>
#include <vector>

#include "avseg/config.hpp"
#include "avseg/error.hpp"
#include "avseg/tensor.hpp"

namespace avseg {

inline constexpr int kSampleRate = 16000;

// One T-frame clip with audio and ground truth.
struct ClipBatch {
  int t_frames = 0;
  int height = 0;
  int width = 0;
  std::vector<Tensor<float>> frames;    // per frame (H*W, 3), values in [0,1]
  std::vector<float> waveform;          // mono PCM, length t_frames * sample rate
  std::vector<Tensor<float>> gt_masks;  // per frame (H*W, 1), values in {0,1}
  Supervision supervision = Supervision::MS3;

  void validate() const {
    if (int(frames.size()) != t_frames || int(gt_masks.size()) != t_frames)
      throw InputError("clip frame count mismatch");
    if (waveform.size() != std::size_t(t_frames) * kSampleRate)
      throw InputError("waveform length must be exactly T * sample_rate");
    for (const auto& m : gt_masks)
      for (float v : m.storage())
        if (v != 0.0f && v != 1.0f) throw InputError("gt_masks must be binary");
  }
};

// Per-frame multi-scale visual features. levels[0] is the coarsest scale
// (1/32 of the input); levels[3] the finest (1/4).
template <typename T>
struct FeaturePyramid {
  struct Level {
    int h = 0, w = 0, channels = 0;
    std::vector<Tensor<T>> frames;  // per frame (h*w, channels)
  };
  std::array<Level, 4> levels;

  void validate(int t_frames, int image_h, int image_w) const {
    for (int i = 0; i < 4; ++i) {
      const int expect_h = image_h >> (5 - i);
      const int expect_w = image_w >> (5 - i);
      if (levels[i].h != expect_h || levels[i].w != expect_w)
        throw ContractError("pyramid level has wrong spatial size");
      if (int(levels[i].frames.size()) != t_frames)
        throw ContractError("pyramid level has wrong frame count");
    }
  }
};

// Per-second STFT magnitudes: one (n_time, n_bins) matrix per frame.
template <typename T>
struct Spectrogram {
  int n_time = 0;
  int n_bins = 0;
  std::vector<Tensor<T>> segments;
};

// Per-frame audio embeddings, one row per frame: (T, C_a).
template <typename T>
using AudioFeatures = Tensor<T>;

// Decoder state after layer `layer_index`: the T refined queries plus the
// mask logits recorded so far (one (H4*W4, 1) tensor per frame per layer).
template <typename T>
struct QueryState {
  Tensor<T> queries;  // (T, C_f)
  int layer_index = 0;
  std::vector<std::vector<Tensor<T>>> per_layer_mask_logits;
};

}  // namespace avseg
