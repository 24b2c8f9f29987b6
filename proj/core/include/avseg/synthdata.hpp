#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "avseg/config.hpp"
#include "avseg/types.hpp"

namespace avseg {

enum class ShapeKind { circle, square, triangle };

std::string to_string(ShapeKind k);
ShapeKind shape_kind_from_string(const std::string& s);

// STFT bin spacing for the fixed 16 kHz / 512-point analysis.
inline constexpr double kToneBinHz = double(kSampleRate) / 512.0;  // 31.25 Hz

// Each shape kind owns a disjoint tone band so that audio identifies the
// kind across the dataset; the exact tone within the band varies per
// instance. Bands are expressed as inclusive STFT bin ranges.
struct ToneBand {
  int lo_bin;
  int hi_bin;
};
ToneBand tone_band(ShapeKind k);

struct ShapeSpec {
  ShapeKind kind = ShapeKind::circle;
  std::array<float, 3> color{1.0f, 1.0f, 1.0f};
  float radius_px = 12.0f;
  float tone_hz = 437.5f;
  std::vector<std::array<float, 2>> positions;  // per-frame center (x, y)
  std::vector<float> visibility;                // per-frame contrast in (0, 1]

  // Largest axis-aligned half-extent of the rasterized shape.
  float extent() const;
  // True if the pixel with center (px, py) lies inside the shape at frame t.
  bool contains(float px, float py, int frame) const;
};

struct SceneSpec {
  int t_frames = 5;
  int image_h = 64;
  int image_w = 64;
  Supervision mode = Supervision::MS3;
  std::uint64_t seed = 0;
  std::vector<ShapeSpec> shapes;
  std::vector<std::vector<std::uint8_t>> schedule;  // [t][shape] in {0,1}

  void validate() const;  // throws InputError

  std::string to_json_text(int indent = -1) const;
  static SceneSpec from_json_text(const std::string& text);
};

// Knobs for the random scene sampler.
struct SceneOptions {
  int min_shapes_ms3 = 2;
  int max_shapes_ms3 = 3;
  float min_radius = 9.0f;
  float max_radius = 14.0f;
  float max_speed = 1.5f;          // px per frame
  double sounding_prob = 0.55;     // per shape per frame (MS3)
  double fade_prob = 0.22;         // per shape per frame
  float fade_lo = 0.30f;
  float fade_hi = 0.55f;
  float background_base = 0.20f;
  float background_noise = 0.15f;  // noise amplitude on top of the base
  float tone_gain = 0.9f;          // peak amplitude of the mixed waveform
  // Allows two shapes of the same kind in one MS3 scene (the acoustically
  // ambiguous distractor construction); off by default.
  bool allow_duplicate_kinds = false;
};

// Draws a random scene specification. Deterministic in (mode, t, h, w, seed).
SceneSpec random_scene(Supervision mode, int t_frames, int image_h, int image_w,
                       std::uint64_t seed, const SceneOptions& opts = {});

// Renders frames, waveform and ground-truth masks from a spec.
// Deterministic; frames are quantized to 8 bits so that the in-memory clip
// matches what a write/read round trip produces.
ClipBatch generate_clip(const SceneSpec& spec);

struct ManifestEntry {
  std::string id;
  std::string split;  // train | val | test
  SceneSpec spec;
};

struct DatasetManifest {
  Supervision mode = Supervision::MS3;
  std::uint64_t seed = 0;
  int t_frames = 5;
  int image_h = 64;
  int image_w = 64;
  std::vector<ManifestEntry> clips;

  std::string to_json_text(int indent = 2) const;
  static DatasetManifest from_json_text(const std::string& text);
  static DatasetManifest from_file(const std::string& path);
};

// Generates n clips, writes the on-disk layout
//   out_dir/clip_<id>/frame_<t>.png, mask_<t>.png, audio.wav
//   out_dir/manifest.json
// with a seeded 70/10/20 train/val/test split, and returns the manifest.
DatasetManifest generate_dataset(int n_clips, Supervision mode, int t_frames, int image_h,
                                 int image_w, std::uint64_t seed, const std::string& out_dir,
                                 const SceneOptions& opts = {});

// Writes one clip's files under dir (created if needed).
void write_clip(const std::string& dir, const ClipBatch& clip);

}  // namespace avseg
