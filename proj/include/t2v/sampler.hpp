#pragma once

#include "t2v/data.hpp"
#include "t2v/diffusion.hpp"
#include "t2v/predictor.hpp"
#include "t2v/random.hpp"
#include "t2v/schedule.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <span>
#include <vector>

namespace t2v {

/// Constant per-channel background colour in IO range.
struct BackgroundColor
{
  std::vector<float> channels;
};

struct SamplerConfig
{
  int t_start = 60;  ///< launch step in the (rescaled) chain; 0 returns the coarse image
  double threshold = 0.1;
  BackgroundColor background{{synthetic::kBackground[0], synthetic::kBackground[1], synthetic::kBackground[2]}};
  VarianceMode variance_mode = VarianceMode::Beta;
  std::uint64_t seed = 0;
  int snapshot_stride = 0;  ///< 0 disables tracing
};

/// Receives x_t (model range) for every traced step t.
template <typename Scalar> using TraceFn = std::function<void(int t, Tensor<Scalar> const &x_t)>;

/// Binary mask, 1 where the condition strictly exceeds `threshold`. Multi-channel
/// conditions are averaged first.
template <typename Scalar> Tensor<Scalar> make_mask(Tensor<Scalar> const &condition, double threshold)
{
  Shape const s = condition.shape();
  if ((condition.data() < Scalar(-1e-6)).any() || (condition.data() > Scalar(1 + 1e-6)).any()) {
    throw RangeError("make_mask: condition outside [0, 1]");
  }
  Tensor<Scalar> mask(Shape{s.n, 1, s.h, s.w});
  Eigen::Index const hw = s.pixels();
  for (int n = 0; n < s.n; ++n) {
    for (Eigen::Index p = 0; p < hw; ++p) {
      Scalar v = 0;
      for (int c = 0; c < s.c; ++c) { v += condition.sample_block(n)[Eigen::Index(c) * hw + p]; }
      v /= Scalar(s.c);
      mask.sample_block(n)[p] = v > Scalar(threshold) ? Scalar(1) : Scalar(0);
    }
  }
  return mask;
}

/// y_c = m * y + (1 - m) * c, replicating a single-channel y across the colour channels.
template <typename Scalar>
Tensor<Scalar> make_coarse(Tensor<Scalar> const &condition, Tensor<Scalar> const &mask, BackgroundColor const &background)
{
  Shape const s = condition.shape();
  int const channels = static_cast<int>(background.channels.size());
  Shape const sm = mask.shape();
  if (sm.n != s.n || sm.c != 1 || sm.h != s.h || sm.w != s.w) { throw ShapeError("make_coarse: mask not aligned with condition"); }
  if (s.c != 1 && s.c != channels) { throw ShapeError("make_coarse: condition channels incompatible with background"); }
  Tensor<Scalar> out(Shape{s.n, channels, s.h, s.w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < channels; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          Scalar const m = mask(n, 0, y, x);
          Scalar const v = condition(n, s.c == 1 ? 0 : c, y, x);
          out(n, c, y, x) = m * v + (Scalar(1) - m) * Scalar(background.channels[static_cast<std::size_t>(c)]);
        }
  return out;
}

/// Per-channel median of the one-pixel border ring, clamped to [0, 1].
BackgroundColor estimate_background(TensorF const &image);

/// One ancestral step x_t -> x_{t-1}; no noise is added at t = 1. The condition
/// is passed to the model unchanged (model range).
template <typename Scalar>
Tensor<Scalar> p_sample_step(NoisePredictor<Scalar> const &model, Tensor<Scalar> const &x_t, Tensor<Scalar> const &condition,
                             int t, NoiseSchedule const &sched, VarianceMode mode, std::span<Rng> streams)
{
  check_step(sched, t, 1, "p_sample_step");
  std::vector<int> const timesteps(static_cast<std::size_t>(x_t.shape().n), sched.model_timestep(t));
  Tensor<Scalar> out = reverse_mean(x_t, model.predict(x_t, condition, timesteps), t, sched);
  if (t > 1) {
    Tensor<Scalar> const z = randn<Scalar>(x_t.shape(), streams);
    out.data() += z.data() * Scalar(std::sqrt(reverse_variance(sched, t, mode)));
  }
  return out;
}

namespace detail {

template <typename Scalar>
Tensor<Scalar> run_chain(NoisePredictor<Scalar> const &model, Tensor<Scalar> x, Tensor<Scalar> const &condition, int from,
                         NoiseSchedule const &sched, VarianceMode mode, std::span<Rng> streams, int stride,
                         TraceFn<Scalar> const &trace)
{
  for (int t = from; t >= 1; --t) {
    if (trace && stride > 0 && t % stride == 0) { trace(t, x); }
    x = p_sample_step(model, x, condition, t, sched, mode, streams);
  }
  return x;
}

} // namespace detail

/// Reverse chain over the whole schedule from pure noise. `condition` is in IO
/// range; the result is in model range.
template <typename Scalar>
Tensor<Scalar> sample_full(NoisePredictor<Scalar> const &model, Tensor<Scalar> const &condition, int out_channels,
                           NoiseSchedule const &sched, VarianceMode mode, std::span<Rng> streams, int snapshot_stride = 0,
                           TraceFn<Scalar> const &trace = {})
{
  Shape const s = condition.shape();
  Tensor<Scalar> x = randn<Scalar>(Shape{s.n, out_channels, s.h, s.w}, streams);
  return detail::run_chain(model, std::move(x), to_model_range(condition), sched.num_steps(), sched, mode, streams,
                           snapshot_stride, trace);
}

/// Coarse-start inference: mask the condition, composite the coarse image, noise
/// it to step t_start and run only the last t_start reverse steps.
/// `condition` is in IO range; the result is in model range.
template <typename Scalar>
Tensor<Scalar> t2v_skip_sample(NoisePredictor<Scalar> const &model, Tensor<Scalar> const &condition, SamplerConfig const &config,
                               NoiseSchedule const &sched, std::span<Rng> streams, TraceFn<Scalar> const &trace = {})
{
  if (config.t_start < 0 || config.t_start > sched.num_steps()) {
    throw ConfigError("t_start " + std::to_string(config.t_start) + " outside [0, " + std::to_string(sched.num_steps()) + "]");
  }
  if (!(config.threshold >= 0.0 && config.threshold < 1.0)) { throw ConfigError("threshold must lie in [0, 1)"); }
  for (float c : config.background.channels) {
    if (!(c >= 0.0f && c <= 1.0f)) { throw ConfigError("background channels must lie in [0, 1]"); }
  }
  Tensor<Scalar> const coarse = to_model_range(make_coarse(condition, make_mask(condition, config.threshold), config.background));
  if (config.t_start == 0) { return coarse; }
  Tensor<Scalar> const eps = randn<Scalar>(coarse.shape(), streams);
  Tensor<Scalar> x = q_sample(coarse, config.t_start, eps, sched);
  return detail::run_chain(model, std::move(x), to_model_range(condition), config.t_start, sched, config.variance_mode, streams,
                           config.snapshot_stride, trace);
}

} // namespace t2v
