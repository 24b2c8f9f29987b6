#include "avseg/dataset.hpp"

#include <set>

#include "avseg/error.hpp"
#include "avseg/image_io.hpp"
#include "avseg/stft.hpp"

namespace avseg {

ClipBatch read_clip(const std::string& clip_dir, int t_frames, Supervision supervision) {
  ClipBatch clip;
  clip.t_frames = t_frames;
  clip.supervision = supervision;

  for (int t = 0; t < t_frames; ++t) {
    const ImageU8 img = read_png(clip_dir + "/frame_" + std::to_string(t) + ".png");
    if (img.channels != 3) throw InputError("frame PNG must be RGB: " + clip_dir);
    if (t == 0) {
      clip.height = img.height;
      clip.width = img.width;
    } else if (img.height != clip.height || img.width != clip.width) {
      throw InputError("inconsistent frame sizes in " + clip_dir);
    }
    Tensor<float> frame(img.height * img.width, 3);
    for (std::size_t i = 0; i < frame.numel(); ++i)
      frame[i] = float(img.pixels[i]) / 255.0f;
    clip.frames.push_back(std::move(frame));

    const ImageU8 m = read_png(clip_dir + "/mask_" + std::to_string(t) + ".png");
    if (m.channels != 1 || m.height != clip.height || m.width != clip.width)
      throw InputError("mask PNG must be 8-bit gray of frame size: " + clip_dir);
    Tensor<float> mask(m.height * m.width, 1);
    for (std::size_t i = 0; i < mask.numel(); ++i)
      mask[i] = m.pixels[i] >= 128 ? 1.0f : 0.0f;
    clip.gt_masks.push_back(std::move(mask));
  }

  clip.waveform = read_wav(clip_dir + "/audio.wav", kSampleRate);
  clip.validate();
  return clip;
}

std::vector<LoadedClip> load_split(const std::string& data_dir, const std::string& split) {
  const DatasetManifest manifest = DatasetManifest::from_file(data_dir + "/manifest.json");

  std::set<std::string> available;
  for (const auto& e : manifest.clips) available.insert(e.split);
  if (!available.count(split)) {
    std::string list;
    for (const auto& s : available) list += (list.empty() ? "" : ", ") + s;
    throw InputError("split '" + split + "' not present; available: " + list);
  }

  std::vector<LoadedClip> out;
  for (const auto& e : manifest.clips) {
    if (e.split != split) continue;
    LoadedClip lc;
    lc.id = e.id;
    lc.clip = read_clip(data_dir + "/" + e.id, manifest.t_frames, manifest.mode);
    lc.spectrogram = stft_spectrogram(lc.clip.waveform);
    out.push_back(std::move(lc));
  }
  return out;
}

}  // namespace avseg
