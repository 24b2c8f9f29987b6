#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "avseg/dataset.hpp"
#include "avseg/stft.hpp"
#include "avseg/synthdata.hpp"

using namespace avseg;
namespace fs = std::filesystem;

namespace {

SceneSpec single_circle_scene(bool sounding) {
  SceneSpec s;
  s.t_frames = 2;
  s.image_h = s.image_w = 64;
  s.mode = Supervision::MS3;
  s.seed = 7;
  ShapeSpec shape;
  shape.kind = ShapeKind::circle;
  shape.color = {0.9f, 0.2f, 0.1f};
  shape.radius_px = 8.0f;
  shape.tone_hz = float(14 * kToneBinHz);
  shape.positions = {{32.0f, 32.0f}, {33.0f, 32.0f}};
  shape.visibility = {1.0f, 1.0f};
  s.shapes.push_back(shape);
  s.schedule = {{std::uint8_t(sounding)}, {std::uint8_t(!sounding)}};
  return s;
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("silent frames have silent audio and empty masks") {
  auto spec = single_circle_scene(false);  // frame 0 silent, frame 1 sounding
  spec.schedule = {{0}, {1}};
  auto clip = generate_clip(spec);
  for (int n = 0; n < kSampleRate; ++n) CHECK(clip.waveform[n] == 0.0f);
  for (float v : clip.gt_masks[0].storage()) CHECK(v == 0.0f);
  // the sounding frame has a non-empty mask and audio
  double energy = 0.0;
  for (int n = kSampleRate; n < 2 * kSampleRate; ++n)
    energy += double(clip.waveform[n]) * clip.waveform[n];
  CHECK(energy > 1.0);
  double mask_sum = 0.0;
  for (float v : clip.gt_masks[1].storage()) mask_sum += v;
  CHECK(mask_sum > 0.0);
}

TEST_CASE("disk rasterization matches an independent pixel-count oracle") {
  auto spec = single_circle_scene(true);
  auto clip = generate_clip(spec);
  // independent rasterizer: count pixel centers within radius 8 of (32, 32)
  int expected = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const double dx = x + 0.5 - 32.0, dy = y + 0.5 - 32.0;
      if (dx * dx + dy * dy <= 64.0) ++expected;
    }
  int got = 0;
  for (float v : clip.gt_masks[0].storage()) got += v > 0.5f;
  CHECK(got == expected);
}

TEST_CASE("generation is deterministic in the seed") {
  auto a = random_scene(Supervision::MS3, 5, 64, 64, 99);
  auto b = random_scene(Supervision::MS3, 5, 64, 64, 99);
  CHECK(a.to_json_text() == b.to_json_text());
  auto clip_a = generate_clip(a);
  auto clip_b = generate_clip(b);
  for (int t = 0; t < 5; ++t) {
    for (std::size_t i = 0; i < clip_a.frames[t].numel(); ++i)
      CHECK(clip_a.frames[t][i] == clip_b.frames[t][i]);
    for (std::size_t i = 0; i < clip_a.gt_masks[t].numel(); ++i)
      CHECK(clip_a.gt_masks[t][i] == clip_b.gt_masks[t][i]);
  }
  for (std::size_t i = 0; i < clip_a.waveform.size(); ++i)
    CHECK(clip_a.waveform[i] == clip_b.waveform[i]);
}

TEST_CASE("scene validation") {
  SUBCASE("overlapping tone bins are rejected") {
    auto spec = single_circle_scene(true);
    ShapeSpec second = spec.shapes[0];
    second.tone_hz = spec.shapes[0].tone_hz + float(kToneBinHz);  // 1 bin apart
    second.positions = {{10.0f, 10.0f}, {10.0f, 10.0f}};
    spec.shapes.push_back(second);
    spec.schedule = {{1, 0}, {0, 1}};
    CHECK_THROWS_AS(generate_clip(spec), InputError);
  }

  SUBCASE("shapes leaving the frame are rejected") {
    auto spec = single_circle_scene(true);
    spec.shapes[0].positions[1] = {62.0f, 32.0f};
    CHECK_THROWS_AS(spec.validate(), InputError);
  }

  SUBCASE("constant MS3 schedules are rejected") {
    auto spec = single_circle_scene(true);
    spec.schedule = {{1}, {1}};
    CHECK_THROWS_AS(spec.validate(), InputError);
  }
}

TEST_CASE("audio and masks stay consistent through the STFT") {
  Rng rng(31);
  for (std::uint64_t seed : {11ULL, 22ULL, 33ULL}) {
    auto spec = random_scene(Supervision::MS3, 5, 64, 64, seed);
    auto clip = generate_clip(spec);
    auto spectrogram = stft_spectrogram(clip.waveform);
    for (std::size_t k = 0; k < spec.shapes.size(); ++k) {
      const int bin = int(std::lround(double(spec.shapes[k].tone_hz) / kToneBinHz));
      for (int t = 0; t < 5; ++t) {
        // mid-segment window, clear of any boundary effects
        const float mag = spectrogram.segments[t](kFramesPerSegment / 2, bin);
        // mask presence must mirror the schedule
        bool in_mask = false;
        for (int p = 0; p < 64 * 64 && !in_mask; ++p)
          in_mask = spec.shapes[k].contains(float(p % 64) + 0.5f, float(p / 64) + 0.5f, t) &&
                    clip.gt_masks[t](p, 0) > 0.5f;
        if (spec.schedule[t][k]) {
          CHECK(mag > 10.0f);
          CHECK(in_mask);
        } else {
          CHECK(mag < 1.0f);
        }
      }
    }
  }
}

TEST_CASE("distractor scenes: same-kind shapes differ only by tone and position") {
  SceneOptions opts;
  opts.allow_duplicate_kinds = true;
  bool found = false;
  for (std::uint64_t seed = 0; seed < 40 && !found; ++seed) {
    auto spec = random_scene(Supervision::MS3, 5, 64, 64, seed, opts);
    if (spec.shapes.size() < 2 || spec.shapes[0].kind != spec.shapes[1].kind) continue;
    found = true;
    // acoustically: both tones live in the same band, so kind alone cannot
    // say which instance sounds; the tones must still be separated bins
    const ToneBand band = tone_band(spec.shapes[0].kind);
    for (int k = 0; k < 2; ++k) {
      const int bin = int(std::lround(double(spec.shapes[k].tone_hz) / kToneBinHz));
      CHECK(bin >= band.lo_bin);
      CHECK(bin <= band.hi_bin);
    }
    CHECK(spec.shapes[0].tone_hz != spec.shapes[1].tone_hz);
  }
  CHECK(found);
}

TEST_CASE("dataset generation, split sizes, and manifest round trip") {
  const auto dir = temp_dir("avseg_synthdata_test");
  auto manifest = generate_dataset(10, Supervision::MS3, 3, 64, 64, 5, dir.string());
  CHECK(manifest.clips.size() == 10);

  int train = 0, val = 0, test = 0;
  for (const auto& c : manifest.clips) {
    train += c.split == "train";
    val += c.split == "val";
    test += c.split == "test";
  }
  CHECK(train == 7);
  CHECK(val == 1);
  CHECK(test == 2);

  SUBCASE("every MS3 schedule changes at least once") {
    for (const auto& c : manifest.clips) {
      bool changes = false;
      for (int t = 0; t + 1 < c.spec.t_frames && !changes; ++t)
        changes = c.spec.schedule[t] != c.spec.schedule[t + 1];
      CHECK(changes);
    }
  }

  SUBCASE("manifest specs regenerate identical data") {
    auto reloaded = DatasetManifest::from_file((dir / "manifest.json").string());
    CHECK(reloaded.clips.size() == manifest.clips.size());
    for (int i : {0, 4, 9}) {
      auto original = generate_clip(manifest.clips[i].spec);
      auto regen = generate_clip(reloaded.clips[i].spec);
      for (int t = 0; t < 3; ++t)
        for (std::size_t k = 0; k < original.frames[t].numel(); ++k)
          CHECK(original.frames[t][k] == regen.frames[t][k]);
      for (std::size_t k = 0; k < original.waveform.size(); ++k)
        CHECK(original.waveform[k] == regen.waveform[k]);
    }
  }

  SUBCASE("clips survive the disk round trip") {
    auto original = generate_clip(manifest.clips[0].spec);
    auto loaded = read_clip((dir / manifest.clips[0].id).string(), 3, Supervision::MS3);
    CHECK(loaded.height == 64);
    CHECK(loaded.width == 64);
    for (int t = 0; t < 3; ++t) {
      for (std::size_t i = 0; i < original.frames[t].numel(); ++i)
        CHECK(loaded.frames[t][i] == doctest::Approx(original.frames[t][i]).epsilon(1e-6));
      for (std::size_t i = 0; i < original.gt_masks[t].numel(); ++i)
        CHECK(loaded.gt_masks[t][i] == original.gt_masks[t][i]);
    }
    // 16-bit quantization on the waveform
    for (std::size_t i = 0; i < original.waveform.size(); ++i)
      CHECK(std::abs(loaded.waveform[i] - original.waveform[i]) < 1.0f / 32000.0f);
  }

  SUBCASE("load_split errors list the available splits") {
    CHECK_THROWS_WITH_AS(load_split(dir.string(), "dev"),
                         doctest::Contains("available: test, train, val"), InputError);
  }

  fs::remove_all(dir);
}

TEST_CASE("S4-like scenes have one constantly sounding shape") {
  auto spec = random_scene(Supervision::S4, 5, 64, 64, 123);
  CHECK(spec.shapes.size() == 1);
  for (const auto& row : spec.schedule) {
    CHECK(row.size() == 1);
    CHECK(row[0] == 1);
  }
}
