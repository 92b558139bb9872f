#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "aimdit/model.hpp"

namespace aimdit {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian):
//   "AIMC" | u32 version | u32 n | n bytes config JSON
//   | u32 count | count x (u32 name_len | name | u32 rank | rank x u32 dim | f32 data)
//   | u32 CRC32 of all preceding bytes
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  // {"model": ModelConfig, ...}; extra keys are echoed verbatim.
  nlohmann::json config;
  std::vector<std::pair<std::string, nn::Tensor>> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const AimditModel& model, nlohmann::json config_echo = {});
Checkpoint read_checkpoint(const std::filesystem::path& path);
AimditModel model_from_checkpoint(const Checkpoint& ckpt);

// Rounds every parameter to float32 so the in-memory model equals what a
// checkpoint stores.
void quantize_parameters(AimditModel& model);

}  // namespace aimdit
