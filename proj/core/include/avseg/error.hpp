#pragma once

#include <stdexcept>
#include <string>

namespace avseg {

// Invalid configuration values (bad widths, indivisible image sizes, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed runtime inputs (wrong waveform length, bad file contents, ...).
struct InputError : std::runtime_error {
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller violated an API contract (frame-index mismatch, non-scalar
// backward target, aggregation on the finest level, ...).
struct ContractError : std::logic_error {
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Filesystem failures, always carrying the offending path.
struct IoError : std::runtime_error {
  IoError(const std::string& path, const std::string& msg)
      : std::runtime_error(msg + ": " + path), path(path) {}
  std::string path;
};

// Training diverged; carries enough context to find the offending batch.
struct TrainDivergence : std::runtime_error {
  TrainDivergence(const std::string& msg, long long iter, std::string batch_ids)
      : std::runtime_error(msg), iter(iter), batch_ids(std::move(batch_ids)) {}
  long long iter;
  std::string batch_ids;
};

}  // namespace avseg
