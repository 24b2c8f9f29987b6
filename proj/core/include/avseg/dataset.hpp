#pragma once

#include <string>
#include <vector>

#include "avseg/synthdata.hpp"
#include "avseg/types.hpp"

namespace avseg {

// One clip loaded from disk, with its STFT precomputed (the spectrogram is a
// fixed function of the audio, so it is cached instead of recomputed per
// training step).
struct LoadedClip {
  std::string id;
  ClipBatch clip;
  Spectrogram<float> spectrogram;
};

// Reads frames/masks/audio for one clip directory.
ClipBatch read_clip(const std::string& clip_dir, int t_frames, Supervision supervision);

// Loads every clip of a split ("train" | "val" | "test").
// Throws InputError listing the available splits when none match.
std::vector<LoadedClip> load_split(const std::string& data_dir, const std::string& split);

}  // namespace avseg
