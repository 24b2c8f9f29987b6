#pragma once

#include <string>
#include <utility>
#include <vector>

#include "avseg/config.hpp"
#include "avseg/tensor.hpp"

namespace avseg {

// Checkpoint container:
//   bytes 0..7   magic "AVSEGCKP"
//   u32 LE       format version (1)
//   u64 LE       JSON header length
//   header       UTF-8 JSON: {"model_config": ..., "iteration": ...,
//                             "tensors": [{"name","rows","cols"}, ...]}
//   payload      32-bit LE floats, tensors concatenated in header order
struct CheckpointData {
  ModelConfig model_config;
  long long iteration = 0;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
};

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

}  // namespace avseg
