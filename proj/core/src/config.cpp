#include "avseg/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "avseg/error.hpp"
#include "json.hpp"

namespace avseg {

using nlohmann::json;

std::string to_string(QueryMode m) {
  switch (m) {
    case QueryMode::audio: return "audio";
    case QueryMode::audio_single_frame: return "audio_single_frame";
    case QueryMode::vanilla: return "vanilla";
  }
  throw ContractError("unknown query mode");
}

std::string to_string(Supervision s) {
  return s == Supervision::S4 ? "S4" : "MS3";
}

QueryMode query_mode_from_string(const std::string& s) {
  if (s == "audio") return QueryMode::audio;
  if (s == "audio_single_frame") return QueryMode::audio_single_frame;
  if (s == "vanilla") return QueryMode::vanilla;
  throw ConfigError("query_mode must be one of audio, audio_single_frame, vanilla; got '" + s +
                    "'");
}

Supervision supervision_from_string(const std::string& s) {
  if (s == "S4" || s == "s4") return Supervision::S4;
  if (s == "MS3" || s == "ms3") return Supervision::MS3;
  throw ConfigError("supervision must be S4 or MS3; got '" + s + "'");
}

void ModelConfig::validate() const {
  if (T < 1) throw ConfigError("T must be >= 1");
  if (N < 1) throw ConfigError("N must be >= 1");
  if (num_heads < 1) throw ConfigError("num_heads must be >= 1");
  if (C_a < 1 || C_f < 1 || C_m < 1 || C_b < 1)
    throw ConfigError("channel widths must be >= 1");
  if (C_f % num_heads != 0 || C_b % num_heads != 0)
    throw ConfigError("attention widths C_f and C_b must be divisible by num_heads");
  if (image_h < 32 || image_w < 32 || image_h % 32 != 0 || image_w % 32 != 0)
    throw ConfigError("image_size must be divisible by 32");
  if (C_f % 4 != 0)
    throw ConfigError("C_f must be divisible by 4 (2-D sinusoidal position encoding)");
}

namespace {

json model_to_json(const ModelConfig& c) {
  return json{{"T", c.T},
              {"C_a", c.C_a},
              {"C_f", c.C_f},
              {"C_m", c.C_m},
              {"C_b", c.C_b},
              {"num_heads", c.num_heads},
              {"N", c.N},
              {"image_size", json::array({c.image_h, c.image_w})},
              {"lambda_bce", c.lambda_bce},
              {"lambda_dice", c.lambda_dice},
              {"lambda_sim", c.lambda_sim},
              {"use_frame_positional_encoding", c.use_frame_positional_encoding},
              {"query_mode", to_string(c.query_mode)},
              {"abti_enabled", c.abti_enabled},
              {"avsim_enabled", c.avsim_enabled},
              {"seed", c.seed}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig c;
  c.T = j.value("T", c.T);
  c.C_a = j.value("C_a", c.C_a);
  c.C_f = j.value("C_f", c.C_f);
  c.C_m = j.value("C_m", c.C_m);
  c.C_b = j.value("C_b", c.C_b);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.N = j.value("N", c.N);
  if (j.contains("image_size")) {
    const auto& s = j.at("image_size");
    if (!s.is_array() || s.size() != 2) throw ConfigError("image_size must be [H, W]");
    c.image_h = s[0].get<int>();
    c.image_w = s[1].get<int>();
  }
  c.lambda_bce = j.value("lambda_bce", c.lambda_bce);
  c.lambda_dice = j.value("lambda_dice", c.lambda_dice);
  c.lambda_sim = j.value("lambda_sim", c.lambda_sim);
  c.use_frame_positional_encoding =
      j.value("use_frame_positional_encoding", c.use_frame_positional_encoding);
  if (j.contains("query_mode")) c.query_mode = query_mode_from_string(j.at("query_mode"));
  c.abti_enabled = j.value("abti_enabled", c.abti_enabled);
  c.avsim_enabled = j.value("avsim_enabled", c.avsim_enabled);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

json train_to_json(const TrainConfig& c) {
  return json{{"lr", c.lr},
              {"weight_decay", c.weight_decay},
              {"batch_size", c.batch_size},
              {"total_iters", c.total_iters},
              {"poly_power", c.poly_power},
              {"checkpoint_every", c.checkpoint_every},
              {"eval_every", c.eval_every},
              {"supervision", to_string(c.supervision)}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.total_iters = j.value("total_iters", c.total_iters);
  c.poly_power = j.value("poly_power", c.poly_power);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.eval_every = j.value("eval_every", c.eval_every);
  if (j.contains("supervision")) c.supervision = supervision_from_string(j.at("supervision"));
  c.validate();
  return c;
}

json parse(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("invalid JSON");
  return j;
}

}  // namespace

std::string ModelConfig::to_json_text(int indent) const {
  return model_to_json(*this).dump(indent);
}

ModelConfig ModelConfig::from_json_text(const std::string& text) {
  return model_from_json(parse(text));
}

double TrainConfig::lr_at(long long iter) const {
  const double frac = 1.0 - double(iter) / double(total_iters);
  return lr * std::pow(frac < 0.0 ? 0.0 : frac, poly_power);
}

void TrainConfig::validate() const {
  if (total_iters < 1) throw ConfigError("total_iters must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
}

std::string TrainConfig::to_json_text(int indent) const {
  return train_to_json(*this).dump(indent);
}

TrainConfig TrainConfig::from_json_text(const std::string& text) {
  return train_from_json(parse(text));
}

std::string RunConfig::to_json_text(int indent) const {
  return json{{"model", model_to_json(model)}, {"train", train_to_json(train)}}.dump(indent);
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  const json j = parse(text);
  RunConfig rc;
  if (j.contains("model")) rc.model = model_from_json(j.at("model"));
  if (j.contains("train")) rc.train = train_from_json(j.at("train"));
  return rc;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

}  // namespace avseg
