#pragma once

#include <filesystem>

#include "json.hpp"

#include "stflow/model.hpp"

namespace stflow {

// Checkpoint container:
//   8 bytes   "STFCKPT1"
//   u64 LE    header length in bytes
//   header    UTF-8 JSON: {"format": 1, "config": {...}, "meta": {...},
//             "params": [{"name", "shape", "offset", "bytes"}, ...]}
//   payload   concatenated FTEN tensors; offsets are relative to the
//             first payload byte.
struct Checkpoint {
    ModelConfig config;
    ModelState<float> state;
    nlohmann::json meta = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace stflow
