#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "amsps/config.hpp"
#include "amsps/optimizer.hpp"

namespace amsps {

// "AMSC" | u32 version | u64 header length | JSON header | float64 matrix
// records (parameters, then first and second moments, in tensor order).

inline constexpr char kCheckpointMagic[4] = {'A', 'M', 'S', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  ModelState state;
  std::uint64_t dataset_fingerprint = 0;
  std::vector<std::string> vocabulary;
};

ModelDims model_dims(const ModelParams& p);

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

/// Atomic: written to a temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace amsps
