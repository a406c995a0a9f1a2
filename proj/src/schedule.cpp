#include "t2v/schedule.hpp"

#include "t2v/errors.hpp"

#include <cmath>
#include <numbers>

namespace t2v {

int NoiseSchedule::model_timestep(int t) const
{
  if (original_indices) { return original_indices->at(static_cast<std::size_t>(t - 1)) + 1; }
  return t;
}

NoiseSchedule schedule_from_betas(std::vector<double> betas)
{
  if (betas.empty()) { throw RangeError("schedule needs at least one step"); }
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) { throw RangeError("beta outside (0, 1): " + std::to_string(b)); }
  }
  NoiseSchedule s;
  s.betas = std::move(betas);
  std::size_t const n = s.betas.size();
  s.alphas.resize(n);
  s.alpha_bars.resize(n);
  s.posterior_variances.resize(n);
  double running = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    s.alphas[i] = 1.0 - s.betas[i];
    running = (i == 0) ? s.alphas[0] : running * s.alphas[i];
    s.alpha_bars[i] = running;
  }
  s.posterior_variances[0] = s.betas[0];
  for (std::size_t i = 1; i < n; ++i) {
    s.posterior_variances[i] = s.betas[i] * (1.0 - s.alpha_bars[i - 1]) / (1.0 - s.alpha_bars[i]);
  }
  return s;
}

NoiseSchedule linear_schedule(int num_steps, double beta_start, double beta_end)
{
  if (num_steps < 1) { throw RangeError("linear schedule: T must be >= 1"); }
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw RangeError("linear schedule: need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(num_steps));
  for (int i = 0; i < num_steps; ++i) {
    double const frac = num_steps == 1 ? 0.0 : static_cast<double>(i) / (num_steps - 1);
    betas[static_cast<std::size_t>(i)] = beta_start + frac * (beta_end - beta_start);
  }
  return schedule_from_betas(std::move(betas));
}

NoiseSchedule cosine_schedule(int num_steps, double offset)
{
  if (num_steps < 1) { throw RangeError("cosine schedule: T must be >= 1"); }
  if (!(offset > 0.0 && offset < 1.0)) { throw RangeError("cosine schedule: offset must lie in (0, 1)"); }
  auto profile = [&](double t) {
    double const c = std::cos((t / num_steps + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
    return c * c;
  };
  std::vector<double> betas(static_cast<std::size_t>(num_steps));
  for (int i = 0; i < num_steps; ++i) {
    double const b = 1.0 - profile(i + 1) / profile(i);
    betas[static_cast<std::size_t>(i)] = std::min(b, 0.999);
  }
  return schedule_from_betas(std::move(betas));
}

std::vector<int> spaced_indices(int full_steps, int num_steps)
{
  if (num_steps < 1 || num_steps > full_steps) {
    throw RangeError("rescale: step count must lie in [1, " + std::to_string(full_steps) + "]");
  }
  if (num_steps == 1) { return {full_steps - 1}; }
  std::vector<int> out(static_cast<std::size_t>(num_steps));
  long const span = full_steps - 1;
  long const denom = num_steps - 1;
  for (long i = 0; i < num_steps; ++i) {
    // round(i * span / denom), halves go up
    out[static_cast<std::size_t>(i)] = static_cast<int>((2 * i * span + denom) / (2 * denom));
  }
  return out;
}

namespace {

// Finds beta with fl(prev * fl(1 - beta)) == target, starting from the exact ratio.
double matching_beta(double prev, double target)
{
  double beta = 1.0 - target / prev;
  for (int iter = 0; iter < 512; ++iter) {
    double const product = prev * (1.0 - beta);
    if (product == target) { return beta; }
    beta = std::nextafter(beta, product > target ? 1.0 : 0.0);
  }
  return 1.0 - target / prev;
}

} // namespace

NoiseSchedule rescale_schedule(NoiseSchedule const &full, int num_steps)
{
  std::vector<int> const picks = spaced_indices(full.num_steps(), num_steps);
  std::vector<double> betas(picks.size());
  double prev = 1.0;
  for (std::size_t i = 0; i < picks.size(); ++i) {
    double const target = full.alpha_bars[static_cast<std::size_t>(picks[i])];
    betas[i] = matching_beta(prev, target);
    prev = prev * (1.0 - betas[i]);
  }
  NoiseSchedule out = schedule_from_betas(std::move(betas));
  if (full.original_indices) {
    std::vector<int> composed(picks.size());
    for (std::size_t i = 0; i < picks.size(); ++i) {
      composed[i] = (*full.original_indices)[static_cast<std::size_t>(picks[i])];
    }
    out.original_indices = std::move(composed);
  } else {
    out.original_indices = picks;
  }
  return out;
}

double snr(NoiseSchedule const &schedule, int index)
{
  if (index < 0 || index >= schedule.num_steps()) {
    throw IndexError("snr: step index " + std::to_string(index) + " out of range");
  }
  double const ab = schedule.alpha_bars[static_cast<std::size_t>(index)];
  double const noise = 1.0 - ab;
  if (noise < 1e-12) { return kSnrCap; }
  return std::min(ab / noise, kSnrCap);
}

std::optional<std::string> validate_schedule(NoiseSchedule const &s)
{
  std::size_t const n = s.betas.size();
  if (n == 0) { return "empty schedule"; }
  if (s.alphas.size() != n || s.alpha_bars.size() != n || s.posterior_variances.size() != n) {
    return "array length mismatch";
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::string const at = " at index " + std::to_string(i);
    if (!(s.betas[i] > 0.0 && s.betas[i] < 1.0)) { return "beta range violation" + at; }
    if (s.alphas[i] != 1.0 - s.betas[i]) { return "alpha != 1 - beta" + at; }
    double const expected = i == 0 ? s.alphas[0] : s.alpha_bars[i - 1] * s.alphas[i];
    if (s.alpha_bars[i] != expected) { return "alpha_bar is not the running product" + at; }
    if (i > 0 && !(s.alpha_bars[i] < s.alpha_bars[i - 1])) { return "alpha_bar not strictly decreasing" + at; }
    if (!(s.posterior_variances[i] > 0.0 && s.posterior_variances[i] <= s.betas[i])) {
      return "posterior variance outside (0, beta]" + at;
    }
  }
  if (s.original_indices) {
    auto const &idx = *s.original_indices;
    if (idx.size() != n) { return "original_indices length mismatch"; }
    for (std::size_t i = 1; i < n; ++i) {
      if (idx[i] <= idx[i - 1]) { return "original_indices not strictly increasing"; }
    }
  }
  return std::nullopt;
}

NoiseSchedule make_schedule(ScheduleDescriptor const &d)
{
  if (d.family == "linear") { return linear_schedule(d.num_steps, d.beta_start, d.beta_end); }
  if (d.family == "cosine") { return cosine_schedule(d.num_steps, d.cosine_offset); }
  throw ConfigError("unknown schedule family '" + d.family + "'");
}

} // namespace t2v
