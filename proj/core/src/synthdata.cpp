#include "avseg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "avseg/error.hpp"
#include "avseg/image_io.hpp"
#include "avseg/rng.hpp"
#include "json.hpp"

namespace avseg {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::circle: return "circle";
    case ShapeKind::square: return "square";
    case ShapeKind::triangle: return "triangle";
  }
  throw ContractError("unknown shape kind");
}

ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "circle") return ShapeKind::circle;
  if (s == "square") return ShapeKind::square;
  if (s == "triangle") return ShapeKind::triangle;
  throw InputError("unknown shape kind '" + s + "'");
}

ToneBand tone_band(ShapeKind k) {
  switch (k) {
    case ShapeKind::circle: return {13, 19};    // ~406..594 Hz
    case ShapeKind::square: return {23, 29};    // ~719..906 Hz
    case ShapeKind::triangle: return {33, 39};  // ~1031..1219 Hz
  }
  throw ContractError("unknown shape kind");
}

float ShapeSpec::extent() const {
  // triangle uses circumradius 1.3 r for rough area parity with the others
  return kind == ShapeKind::triangle ? 1.3f * radius_px : radius_px;
}

bool ShapeSpec::contains(float px, float py, int frame) const {
  const float cx = positions[frame][0];
  const float cy = positions[frame][1];
  const float dx = px - cx;
  const float dy = py - cy;
  switch (kind) {
    case ShapeKind::circle:
      return dx * dx + dy * dy <= radius_px * radius_px;
    case ShapeKind::square:
      return std::abs(dx) <= radius_px && std::abs(dy) <= radius_px;
    case ShapeKind::triangle: {
      // equilateral, vertex up, circumradius 1.3 r
      const float R = 1.3f * radius_px;
      const float ax = cx, ay = cy - R;
      const float bx = cx - 0.8660254f * R, by = cy + 0.5f * R;
      const float ex = cx + 0.8660254f * R, ey = cy + 0.5f * R;
      const auto side = [](float x1, float y1, float x2, float y2, float x, float y) {
        return (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1);
      };
      const float d1 = side(ax, ay, bx, by, px, py);
      const float d2 = side(bx, by, ex, ey, px, py);
      const float d3 = side(ex, ey, ax, ay, px, py);
      const bool has_neg = (d1 < 0) || (d2 < 0) || (d3 < 0);
      const bool has_pos = (d1 > 0) || (d2 > 0) || (d3 > 0);
      return !(has_neg && has_pos);
    }
  }
  return false;
}

namespace {

int nearest_bin(float hz) { return int(std::lround(double(hz) / kToneBinHz)); }

}  // namespace

void SceneSpec::validate() const {
  if (t_frames < 1) throw InputError("scene needs at least one frame");
  if (int(schedule.size()) != t_frames) throw InputError("schedule must have T rows");
  for (const auto& row : schedule)
    if (row.size() != shapes.size()) throw InputError("schedule row width must match shapes");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& s = shapes[i];
    if (int(s.positions.size()) != t_frames || int(s.visibility.size()) != t_frames)
      throw InputError("per-frame shape arrays must have T entries");
    for (int t = 0; t < t_frames; ++t) {
      const float e = s.extent();
      if (s.positions[t][0] - e < 0 || s.positions[t][0] + e > float(image_w) ||
          s.positions[t][1] - e < 0 || s.positions[t][1] + e > float(image_h))
        throw InputError("shape leaves the frame");
    }
    for (std::size_t j = i + 1; j < shapes.size(); ++j) {
      if (std::abs(nearest_bin(s.tone_hz) - nearest_bin(shapes[j].tone_hz)) < 2)
        throw InputError("tone frequencies must be at least 2 STFT bins apart");
    }
  }
  if (mode == Supervision::MS3) {
    bool changes = false;
    for (int t = 0; t + 1 < t_frames && !changes; ++t)
      changes = schedule[t] != schedule[t + 1];
    if (t_frames > 1 && !changes)
      throw InputError("MS3-like schedule must change at least once");
  }
}

namespace {

json shape_to_json(const ShapeSpec& s) {
  json pos = json::array();
  for (const auto& p : s.positions) pos.push_back(json::array({p[0], p[1]}));
  return json{{"kind", to_string(s.kind)},
              {"color", json::array({s.color[0], s.color[1], s.color[2]})},
              {"radius_px", s.radius_px},
              {"tone_hz", s.tone_hz},
              {"positions", pos},
              {"visibility", s.visibility}};
}

ShapeSpec shape_from_json(const json& j) {
  ShapeSpec s;
  s.kind = shape_kind_from_string(j.at("kind"));
  for (int c = 0; c < 3; ++c) s.color[c] = j.at("color")[c].get<float>();
  s.radius_px = j.at("radius_px").get<float>();
  s.tone_hz = j.at("tone_hz").get<float>();
  for (const auto& p : j.at("positions"))
    s.positions.push_back({p[0].get<float>(), p[1].get<float>()});
  s.visibility = j.at("visibility").get<std::vector<float>>();
  return s;
}

json scene_to_json(const SceneSpec& s) {
  json shapes = json::array();
  for (const auto& sh : s.shapes) shapes.push_back(shape_to_json(sh));
  json sched = json::array();
  for (const auto& row : s.schedule) sched.push_back(row);
  return json{{"t_frames", s.t_frames},
              {"image_size", json::array({s.image_h, s.image_w})},
              {"mode", to_string(s.mode)},
              {"seed", s.seed},
              {"shapes", shapes},
              {"schedule", sched}};
}

SceneSpec scene_from_json(const json& j) {
  SceneSpec s;
  s.t_frames = j.at("t_frames").get<int>();
  s.image_h = j.at("image_size")[0].get<int>();
  s.image_w = j.at("image_size")[1].get<int>();
  s.mode = supervision_from_string(j.at("mode"));
  s.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& sh : j.at("shapes")) s.shapes.push_back(shape_from_json(sh));
  for (const auto& row : j.at("schedule")) s.schedule.push_back(row.get<std::vector<std::uint8_t>>());
  s.validate();
  return s;
}

std::array<float, 3> hsv_to_rgb(float h, float s, float v) {
  const float c = v * s;
  const float hp = h * 6.0f;
  const float x = c * (1.0f - std::abs(std::fmod(hp, 2.0f) - 1.0f));
  float r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  const float m = v - c;
  return {r + m, g + m, b + m};
}

}  // namespace

std::string SceneSpec::to_json_text(int indent) const { return scene_to_json(*this).dump(indent); }

SceneSpec SceneSpec::from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw InputError("invalid scene JSON");
  return scene_from_json(j);
}

SceneSpec random_scene(Supervision mode, int t_frames, int image_h, int image_w,
                       std::uint64_t seed, const SceneOptions& opts) {
  Rng rng(seed ^ 0xA5C3E571D2B49F0DULL);
  SceneSpec scene;
  scene.t_frames = t_frames;
  scene.image_h = image_h;
  scene.image_w = image_w;
  scene.mode = mode;
  scene.seed = seed;

  const int n_shapes = mode == Supervision::S4
                           ? 1
                           : rng.range(opts.min_shapes_ms3, opts.max_shapes_ms3);

  // kinds: distinct by default so audio identifies the instance
  std::vector<ShapeKind> kinds{ShapeKind::circle, ShapeKind::square, ShapeKind::triangle};
  rng.shuffle(kinds);
  if (opts.allow_duplicate_kinds && n_shapes >= 2) kinds[1] = kinds[0];

  std::vector<int> used_bins;
  for (int k = 0; k < n_shapes; ++k) {
    ShapeSpec shape;
    shape.kind = kinds[std::size_t(k) % kinds.size()];
    shape.color = hsv_to_rgb(float(rng.u01()), 0.8f + 0.2f * float(rng.u01()),
                             0.8f + 0.2f * float(rng.u01()));
    // crowded scenes get smaller shapes so non-overlapping placement stays feasible
    float r_lo = opts.min_radius, r_hi = opts.max_radius;
    if (n_shapes >= 3) {
      r_lo *= 0.75f;
      r_hi *= 0.70f;
    }
    shape.radius_px = float(rng.uniform(r_lo, r_hi));

    const ToneBand band = tone_band(shape.kind);
    int bin = 0;
    for (int attempt = 0; attempt < 256; ++attempt) {
      bin = rng.range(band.lo_bin, band.hi_bin);
      bool ok = true;
      for (int u : used_bins) ok = ok && std::abs(bin - u) >= 2;
      if (ok) break;
      bin = 0;
    }
    if (bin == 0) throw InputError("could not place tone bins 2 apart");
    used_bins.push_back(bin);
    shape.tone_hz = float(bin * kToneBinHz);

    // trajectory: linear, fully inside the frame, not overlapping others;
    // radius and speed shrink every 100 rejections so placement terminates
    bool placed = false;
    float speed = opts.max_speed;
    for (int attempt = 0; attempt < 1200 && !placed; ++attempt) {
      if (attempt > 0 && attempt % 100 == 0) {
        shape.radius_px *= 0.88f;
        speed *= 0.9f;
      }
      const float e = shape.extent() + 1.0f;
      const float vx = float(rng.uniform(-speed, speed));
      const float vy = float(rng.uniform(-speed, speed));
      const float span_x = vx * float(t_frames - 1);
      const float span_y = vy * float(t_frames - 1);
      const float lo_x = e + std::max(0.0f, -span_x);
      const float hi_x = float(image_w) - e - std::max(0.0f, span_x);
      const float lo_y = e + std::max(0.0f, -span_y);
      const float hi_y = float(image_h) - e - std::max(0.0f, span_y);
      if (hi_x <= lo_x || hi_y <= lo_y) continue;
      const float x0 = float(rng.uniform(lo_x, hi_x));
      const float y0 = float(rng.uniform(lo_y, hi_y));
      std::vector<std::array<float, 2>> pos(t_frames);
      for (int t = 0; t < t_frames; ++t)
        pos[t] = {x0 + vx * float(t), y0 + vy * float(t)};
      bool clear = true;
      for (const auto& other : scene.shapes) {
        const float min_dist = shape.extent() + other.extent() + 2.0f;
        for (int t = 0; t < t_frames && clear; ++t) {
          const float dx = pos[t][0] - other.positions[t][0];
          const float dy = pos[t][1] - other.positions[t][1];
          clear = dx * dx + dy * dy >= min_dist * min_dist;
        }
        if (!clear) break;
      }
      if (clear) {
        shape.positions = std::move(pos);
        placed = true;
      }
    }
    if (!placed) throw InputError("could not place shapes without overlap");

    shape.visibility.resize(t_frames, 1.0f);
    for (int t = 0; t < t_frames; ++t)
      if (rng.coin(opts.fade_prob))
        shape.visibility[t] = float(rng.uniform(opts.fade_lo, opts.fade_hi));

    scene.shapes.push_back(std::move(shape));
  }

  // schedule
  scene.schedule.assign(t_frames, std::vector<std::uint8_t>(n_shapes, 0));
  if (mode == Supervision::S4) {
    for (auto& row : scene.schedule) row[0] = 1;
  } else {
    for (int attempt = 0; attempt < 1024; ++attempt) {
      int total = 0;
      for (int t = 0; t < t_frames; ++t)
        for (int k = 0; k < n_shapes; ++k) {
          scene.schedule[t][k] = rng.coin(opts.sounding_prob) ? 1 : 0;
          total += scene.schedule[t][k];
        }
      bool changes = t_frames == 1;
      for (int t = 0; t + 1 < t_frames && !changes; ++t)
        changes = scene.schedule[t] != scene.schedule[t + 1];
      if (total > 0 && changes) break;
    }
  }

  scene.validate();
  return scene;
}

ClipBatch generate_clip(const SceneSpec& spec) {
  spec.validate();
  const int T = spec.t_frames, H = spec.image_h, W = spec.image_w;
  Rng noise_rng(spec.seed ^ 0x5851F42D4C957F2DULL);
  const SceneOptions opts;  // rendering constants (background, gain)

  ClipBatch clip;
  clip.t_frames = T;
  clip.height = H;
  clip.width = W;
  clip.supervision = spec.mode;
  clip.frames.reserve(T);
  clip.gt_masks.reserve(T);

  for (int t = 0; t < T; ++t) {
    Tensor<float> frame(H * W, 3);
    for (int p = 0; p < H * W; ++p)
      for (int c = 0; c < 3; ++c)
        frame(p, c) = opts.background_base + opts.background_noise * float(noise_rng.u01());

    Tensor<float> mask(H * W, 1);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const float px = float(x) + 0.5f, py = float(y) + 0.5f;
        const int p = y * W + x;
        for (std::size_t k = 0; k < spec.shapes.size(); ++k) {
          const auto& shape = spec.shapes[k];
          if (!shape.contains(px, py, t)) continue;
          const float vis = shape.visibility[t];
          for (int c = 0; c < 3; ++c)
            frame(p, c) += vis * (shape.color[c] - frame(p, c));
          if (spec.schedule[t][k]) mask(p, 0) = 1.0f;
        }
      }
    }
    // quantize to the PNG range so in-memory and reloaded clips agree
    for (auto& v : frame.storage()) {
      float c = std::min(std::max(v, 0.0f), 1.0f);
      v = float(std::lrint(c * 255.0f)) / 255.0f;
    }
    clip.frames.push_back(std::move(frame));
    clip.gt_masks.push_back(std::move(mask));
  }

  clip.waveform.assign(std::size_t(T) * kSampleRate, 0.0f);
  for (int t = 0; t < T; ++t) {
    int sounding = 0;
    for (std::size_t k = 0; k < spec.shapes.size(); ++k) sounding += spec.schedule[t][k];
    if (sounding == 0) continue;
    const double amp = double(opts.tone_gain) / double(sounding);
    for (std::size_t k = 0; k < spec.shapes.size(); ++k) {
      if (!spec.schedule[t][k]) continue;
      const double omega = 2.0 * std::numbers::pi * double(spec.shapes[k].tone_hz);
      for (int n = 0; n < kSampleRate; ++n) {
        const std::size_t idx = std::size_t(t) * kSampleRate + n;
        const double tau = double(idx) / double(kSampleRate);
        clip.waveform[idx] += float(amp * std::sin(omega * tau));
      }
    }
  }

  clip.validate();
  return clip;
}

void write_clip(const std::string& dir, const ClipBatch& clip) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir, "cannot create clip directory");

  for (int t = 0; t < clip.t_frames; ++t) {
    ImageU8 img;
    img.height = clip.height;
    img.width = clip.width;
    img.channels = 3;
    img.pixels.resize(std::size_t(clip.height) * clip.width * 3);
    const auto& f = clip.frames[t];
    for (int p = 0; p < clip.height * clip.width; ++p)
      for (int c = 0; c < 3; ++c) {
        const float v = std::min(std::max(f(p, c), 0.0f), 1.0f);
        img.pixels[std::size_t(p) * 3 + c] = std::uint8_t(std::lrint(v * 255.0f));
      }
    write_png(dir + "/frame_" + std::to_string(t) + ".png", img);

    ImageU8 m;
    m.height = clip.height;
    m.width = clip.width;
    m.channels = 1;
    m.pixels.resize(std::size_t(clip.height) * clip.width);
    for (int p = 0; p < clip.height * clip.width; ++p)
      m.pixels[p] = clip.gt_masks[t](p, 0) > 0.5f ? 255 : 0;
    write_png(dir + "/mask_" + std::to_string(t) + ".png", m);
  }
  write_wav(dir + "/audio.wav", clip.waveform, kSampleRate);
}

std::string DatasetManifest::to_json_text(int indent) const {
  json clips_j = json::array();
  for (const auto& c : clips)
    clips_j.push_back(json{{"id", c.id}, {"split", c.split}, {"spec", scene_to_json(c.spec)}});
  return json{{"mode", to_string(mode)},
              {"seed", seed},
              {"t_frames", t_frames},
              {"image_size", json::array({image_h, image_w})},
              {"clips", clips_j}}
      .dump(indent);
}

DatasetManifest DatasetManifest::from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw InputError("invalid manifest JSON");
  DatasetManifest m;
  m.mode = supervision_from_string(j.at("mode"));
  m.seed = j.at("seed").get<std::uint64_t>();
  m.t_frames = j.at("t_frames").get<int>();
  m.image_h = j.at("image_size")[0].get<int>();
  m.image_w = j.at("image_size")[1].get<int>();
  for (const auto& c : j.at("clips")) {
    ManifestEntry e;
    e.id = c.at("id").get<std::string>();
    e.split = c.at("split").get<std::string>();
    e.spec = scene_from_json(c.at("spec"));
    m.clips.push_back(std::move(e));
  }
  return m;
}

DatasetManifest DatasetManifest::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open manifest");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

DatasetManifest generate_dataset(int n_clips, Supervision mode, int t_frames, int image_h,
                                 int image_w, std::uint64_t seed, const std::string& out_dir,
                                 const SceneOptions& opts) {
  if (n_clips < 1) throw InputError("n_clips must be >= 1");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir, "cannot create dataset directory");

  DatasetManifest manifest;
  manifest.mode = mode;
  manifest.seed = seed;
  manifest.t_frames = t_frames;
  manifest.image_h = image_h;
  manifest.image_w = image_w;

  Rng master(seed);
  std::vector<std::uint64_t> clip_seeds(n_clips);
  for (auto& s : clip_seeds) s = master.next_u64();

  // seeded 70/10/20 split by shuffled index
  std::vector<int> order(n_clips);
  for (int i = 0; i < n_clips; ++i) order[i] = i;
  Rng split_rng = master.fork(0x51A7);
  split_rng.shuffle(order);
  const int n_train = n_clips * 7 / 10;
  const int n_val = n_clips / 10;
  std::vector<std::string> split_of(n_clips);
  for (int i = 0; i < n_clips; ++i)
    split_of[order[i]] = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");

  for (int i = 0; i < n_clips; ++i) {
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "clip_%05d", i);
    ManifestEntry entry;
    entry.id = idbuf;
    entry.split = split_of[i];
    entry.spec = random_scene(mode, t_frames, image_h, image_w, clip_seeds[i], opts);
    const ClipBatch clip = generate_clip(entry.spec);
    write_clip(out_dir + "/" + entry.id, clip);
    manifest.clips.push_back(std::move(entry));
  }

  std::ofstream out(out_dir + "/manifest.json", std::ios::binary);
  if (!out) throw IoError(out_dir + "/manifest.json", "cannot write manifest");
  out << manifest.to_json_text(2) << "\n";
  return manifest;
}

}  // namespace avseg
