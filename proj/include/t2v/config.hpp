#pragma once

#include "t2v/adam.hpp"
#include "t2v/denoiser.hpp"
#include "t2v/diffusion.hpp"
#include "t2v/sampler.hpp"
#include "t2v/schedule.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace t2v {

struct TrainSettings
{
  AdamConfig adam{};
  int steps = 3000;
  int batch_size = 16;
  int warmup_steps = 100;
  int decay_steps = 3000;  ///< cosine decay to 0.1 lr at this global step; 0 keeps lr constant
  std::uint64_t seed = 1;
  int log_every = 100;
  int checkpoint_every = 0;  ///< 0: only the final checkpoint
};

/// Every user-facing setting of the command-line tool.
struct RunConfig
{
  ScheduleDescriptor schedule{};
  int inference_steps = 100;
  DenoiserConfig denoiser{};
  TrainSettings train{};
  SamplerConfig sampler{};
  bool background_override = false;
  std::filesystem::path manifest;
  int synthetic_pairs = 0;  ///< used when no manifest is given
  std::uint64_t synthetic_seed = 7;
  std::filesystem::path output_dir = "out";
};

/// Canonical `key=value` text: one line per key, keys sorted.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::string const &text);
std::string format_key_values(KeyValues const &kv);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);
double parse_double(std::string const &text, std::string const &key);
long long parse_int(std::string const &text, std::string const &key);

std::string to_string(VarianceMode mode);
VarianceMode parse_variance_mode(std::string const &text);

std::string format_background(BackgroundColor const &c);
BackgroundColor parse_background(std::string const &text);

/// Applies one setting; throws ConfigError for unknown keys or bad values.
void apply_setting(RunConfig &config, std::string const &key, std::string const &value);

/// Reads `key = value` lines (`#` comments) into `config`.
void apply_config_file(RunConfig &config, std::filesystem::path const &path);

/// Names accepted by apply_setting.
std::vector<std::string> setting_names();

/// Schedule actually walked at inference time.
NoiseSchedule inference_schedule(RunConfig const &config);

} // namespace t2v
