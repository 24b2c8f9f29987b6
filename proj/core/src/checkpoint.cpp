#include "avseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "avseg/error.hpp"
#include "json.hpp"

namespace avseg {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'A', 'V', 'S', 'E', 'G', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  json tensors = json::array();
  for (const auto& [name, t] : data.tensors)
    tensors.push_back(json{{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
  const std::string header = json{{"model_config", json::parse(data.model_config.to_json_text(-1))},
                                  {"iteration", data.iteration},
                                  {"tensors", tensors}}
                                 .dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open checkpoint for writing");
  out.write(kMagic, 8);
  const std::uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), 4);
  const std::uint64_t hlen = header.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(header.data(), std::streamsize(header.size()));
  for (const auto& [name, t] : data.tensors)
    out.write(reinterpret_cast<const char*>(t.data()), std::streamsize(t.numel() * 4));
  if (!out) throw IoError(path, "checkpoint write failed");
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open checkpoint");

  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw InputError("not a checkpoint file: " + path);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (version != kVersion) throw InputError("unsupported checkpoint version in " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  std::string header(hlen, '\0');
  in.read(header.data(), std::streamsize(hlen));
  if (!in) throw InputError("truncated checkpoint header: " + path);

  json j = json::parse(header, nullptr, false);
  if (j.is_discarded()) throw InputError("corrupt checkpoint header: " + path);

  CheckpointData data;
  data.model_config = ModelConfig::from_json_text(j.at("model_config").dump());
  data.iteration = j.at("iteration").get<long long>();
  for (const auto& t : j.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const int rows = t.at("rows").get<int>();
    const int cols = t.at("cols").get<int>();
    Tensor<float> tensor(rows, cols);
    in.read(reinterpret_cast<char*>(tensor.data()), std::streamsize(tensor.numel() * 4));
    if (!in) throw InputError("truncated checkpoint payload: " + path);
    data.tensors.emplace_back(name, std::move(tensor));
  }
  return data;
}

}  // namespace avseg
