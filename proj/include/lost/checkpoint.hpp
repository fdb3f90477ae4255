#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lost/config.hpp"
#include "lost/model.hpp"

namespace lost {

/// Binary layout, all integers little-endian:
///   "LOST1" | u32 version | u64 len + config text
///   u64 tensor count, then per tensor:
///     u32 name len + name | u8 dtype (1 = f32, 2 = f64) | u8 rank | u64 dims[rank] | data
///   u64 index-list count, then per list: u32 name len + name | u64 k | u64 idx[k]
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
std::vector<std::uint8_t> encode_checkpoint(const Model<T>& model, const ExperimentConfig& cfg);

template <class T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model,
                     const ExperimentConfig& cfg);

template <class T>
struct LoadedCheckpoint {
  ExperimentConfig config;
  Model<T> model;
};

/// Rebuilds the model skeleton from the config echo, then checks every tensor
/// name, shape and index list against it. Throws InputError on any mismatch.
template <class T>
LoadedCheckpoint<T> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

template <class T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace lost
