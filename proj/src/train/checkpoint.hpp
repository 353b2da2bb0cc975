#pragma once

#include <map>
#include <string>

#include "core/tensor.hpp"
#include "json.hpp"

namespace sologan {

// Single-file archive: named float arrays plus a JSON metadata document.
// Layout: magic, format version, metadata, array table, FNV-1a trailer.
struct CheckpointBundle {
  nlohmann::json meta;
  std::map<std::string, Tensor<float>> arrays;
};

inline constexpr uint32_t kCheckpointFormatVersion = 1;

void save_checkpoint(const CheckpointBundle& bundle, const std::string& path);

// Throws ErrorCode::checkpoint_corrupt on truncation/garbage, and
// ErrorCode::checkpoint_version on a format version mismatch. Nothing is
// applied anywhere on failure; the bundle is returned fully parsed.
CheckpointBundle load_checkpoint(const std::string& path);

}  // namespace sologan
