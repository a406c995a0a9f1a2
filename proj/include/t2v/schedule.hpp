#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace t2v {

/// Variance schedule of the forward noising process.
///
/// Arrays are stored 0-based: `betas[i]` is the variance of diffusion step i+1.
/// The diffusion routines accept 1-based step numbers t in [0, T] where t = 0
/// is the clean data and use the accessors below, which treat alpha_bar(0) = 1.
struct NoiseSchedule
{
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;
  std::vector<double> posterior_variances;
  /// For rescaled schedules: storage index in the parent schedule of each step.
  std::optional<std::vector<int>> original_indices;

  int num_steps() const { return static_cast<int>(betas.size()); }

  double beta(int t) const { return betas.at(static_cast<std::size_t>(t - 1)); }
  double alpha(int t) const { return alphas.at(static_cast<std::size_t>(t - 1)); }
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars.at(static_cast<std::size_t>(t - 1)); }
  double posterior_variance(int t) const { return posterior_variances.at(static_cast<std::size_t>(t - 1)); }

  /// Timestep fed to the network at step t: the parent schedule's step number
  /// for rescaled schedules, t itself otherwise.
  int model_timestep(int t) const;
};

/// Builds a schedule from raw betas, deriving every other array. Throws RangeError
/// unless every beta lies in (0, 1).
NoiseSchedule schedule_from_betas(std::vector<double> betas);

NoiseSchedule linear_schedule(int num_steps, double beta_start = 1e-4, double beta_end = 0.02);

/// Squared-cosine alpha_bar profile with per-step betas clipped to 0.999.
NoiseSchedule cosine_schedule(int num_steps, double offset = 0.008);

/// Selects `num_steps` evenly spaced timesteps of `full` (both ends kept) and
/// recomputes betas so the cumulative products hit the parent alpha_bars exactly.
NoiseSchedule rescale_schedule(NoiseSchedule const &full, int num_steps);

/// Evenly spaced storage indices used by rescale_schedule.
std::vector<int> spaced_indices(int full_steps, int num_steps);

inline constexpr double kSnrCap = 1e12;

/// alpha_bar / (1 - alpha_bar) at storage index `index`, capped at kSnrCap.
double snr(NoiseSchedule const &schedule, int index);

/// Checks every structural invariant; returns a description of the first violation.
std::optional<std::string> validate_schedule(NoiseSchedule const &schedule);

/// Schedule family and parameters, as persisted in checkpoints.
struct ScheduleDescriptor
{
  std::string family = "linear";
  int num_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  double cosine_offset = 0.008;
};

NoiseSchedule make_schedule(ScheduleDescriptor const &descriptor);

} // namespace t2v
