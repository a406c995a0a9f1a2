#pragma once

#include "t2v/denoiser.hpp"
#include "t2v/sampler.hpp"
#include "t2v/schedule.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace t2v {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Trained model state. The schedule is stored by descriptor and regenerated on load.
struct Checkpoint
{
  std::uint32_t version = kCheckpointVersion;
  DenoiserConfig denoiser{};
  ScheduleDescriptor schedule{};
  DenoiserParams params;
  long training_step = 0;
  BackgroundColor background;
  std::uint64_t train_seed = 0;
};

/// Binary layout, all integers little-endian u32:
///   "T2VD" | version | config length | canonical config text |
///   parameter count | per parameter: name length, name, rank, dims..., float32 data |
///   CRC32 of every preceding byte.
std::string encode_checkpoint(Checkpoint const &ckpt);
Checkpoint decode_checkpoint(std::string const &bytes);

void checkpoint_save(Checkpoint const &ckpt, std::filesystem::path const &path);
Checkpoint checkpoint_load(std::filesystem::path const &path);

std::uint32_t crc32(std::string_view bytes);

} // namespace t2v
