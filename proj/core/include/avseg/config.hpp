#pragma once

#include <cstdint>
#include <string>

namespace avseg {

enum class QueryMode { audio, audio_single_frame, vanilla };
enum class Supervision { S4, MS3 };

std::string to_string(QueryMode m);
std::string to_string(Supervision s);
QueryMode query_mode_from_string(const std::string& s);
Supervision supervision_from_string(const std::string& s);

// Model hyperparameters. JSON round-trips with exactly these field names;
// image_size serializes as [H, W].
struct ModelConfig {
  int T = 5;          // frames per clip
  int C_a = 128;      // audio embedding width
  int C_f = 64;       // common feature width
  int C_m = 64;       // audio-visual attention projection width
  int C_b = 64;       // temporal-bridge projection width
  int num_heads = 4;
  int N = 3;          // decoder stage count (3 layers per stage)
  int image_h = 64;
  int image_w = 64;
  double lambda_bce = 1.0;
  double lambda_dice = 1.0;
  double lambda_sim = 1.0;
  bool use_frame_positional_encoding = false;
  QueryMode query_mode = QueryMode::audio;
  bool abti_enabled = true;
  bool avsim_enabled = true;
  std::uint64_t seed = 0;

  int num_layers() const { return 3 * N; }
  // Pyramid level i in 1..4 has spatial size image / 2^(6-i).
  int level_h(int level) const { return image_h >> (6 - level); }
  int level_w(int level) const { return image_w >> (6 - level); }

  void validate() const;  // throws ConfigError

  std::string to_json_text(int indent = 2) const;
  static ModelConfig from_json_text(const std::string& text);
};

// Training hyperparameters.
struct TrainConfig {
  double lr = 5e-4;
  double weight_decay = 5e-2;
  int batch_size = 2;
  long long total_iters = 2000;
  double poly_power = 0.9;
  long long checkpoint_every = 0;  // 0: final checkpoint only
  long long eval_every = 0;        // 0: no in-training eval
  Supervision supervision = Supervision::MS3;

  // Polynomial decay: lr * (1 - i/total)^power.
  double lr_at(long long iter) const;

  void validate() const;

  std::string to_json_text(int indent = 2) const;
  static TrainConfig from_json_text(const std::string& text);
};

// Contents of the file passed to `train --config`: {"model": ..., "train": ...},
// both blocks optional (defaults apply).
struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  std::string to_json_text(int indent = 2) const;
  static RunConfig from_json_text(const std::string& text);
  static RunConfig from_file(const std::string& path);
};

}  // namespace avseg
