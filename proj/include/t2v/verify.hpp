#pragma once

#include "t2v/denoiser.hpp"
#include "t2v/schedule.hpp"

#include <string>
#include <vector>

namespace t2v {

struct SuiteResult
{
  std::string name;
  bool passed = false;
  std::string detail;
  double elapsed_ms = 0.0;
};

/// Structural invariants plus snr monotonicity for one schedule.
SuiteResult schedule_suite(NoiseSchedule const &schedule, std::string const &name = "schedule");

struct GradientCheck
{
  double max_relative_error = 0.0;
  std::string worst_parameter;
  long checked = 0;
};

/// Compares tape gradients of L_simple against central differences for every
/// parameter element, in double precision. Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradientCheck gradient_check(DenoiserConfig const &config, std::uint64_t seed, double step = 1e-4, double floor = 1e-6);

/// A small configuration for gradient checks: 8x8 images, width 4, depth 1.
DenoiserConfig tiny_config();

/// Runs every verification suite in order.
std::vector<SuiteResult> run_verification();

} // namespace t2v
