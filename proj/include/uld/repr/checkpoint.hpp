#pragma once

// Single-file checkpoints: magic, manifest length, JSON manifest, then the
// arrays as raw little-endian fp64 in manifest order.

#include "uld/repr/encoder.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace uld::repr {

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointArray {
  std::string name;
  Tensor::Matrix value;
};

struct Checkpoint {
  nlohmann::json manifest;  // caller fields plus "format_version" and "arrays"
  std::vector<CheckpointArray> arrays;

  const Tensor::Matrix& at(const std::string& name) const;
  /// Copies arrays into `dst` by name; every destination must be present
  /// with an identical shape.
  void load_into(const std::vector<NamedTensor>& dst) const;
};

std::vector<CheckpointArray> snapshot(const std::vector<NamedTensor>& tensors);

/// Writes via a temporary file and rename, so readers never see a torn file.
void write_checkpoint(const std::filesystem::path& path, nlohmann::json manifest,
                      const std::vector<CheckpointArray>& arrays);
Checkpoint read_checkpoint(const std::filesystem::path& path);

void save_encoder(const std::filesystem::path& path, const EncoderStack& stack);
EncoderStack load_encoder(const std::filesystem::path& path);

}  // namespace uld::repr
