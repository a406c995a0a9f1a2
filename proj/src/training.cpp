#include "t2v/training.hpp"

#include "t2v/adam.hpp"
#include "t2v/diffusion.hpp"
#include "t2v/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace t2v {

Checkpoint initial_checkpoint(RunConfig const &config, std::vector<PairedSample> const &pairs)
{
  validate(config.denoiser);
  Checkpoint ckpt;
  ckpt.denoiser = config.denoiser;
  ckpt.schedule = config.schedule;
  ckpt.params = init_params(config.denoiser);
  ckpt.train_seed = config.train.seed;
  if (config.background_override || pairs.empty()) {
    ckpt.background = config.sampler.background;
  } else {
    ckpt.background = estimate_background(pairs.front().target);
  }
  return ckpt;
}

TensorF condition_batch(std::vector<TensorF> const &conditions, int channels)
{
  std::vector<TensorF> parts;
  parts.reserve(conditions.size());
  for (TensorF const &c : conditions) {
    Shape const s = c.shape();
    if (s.c == channels) {
      parts.push_back(c);
      continue;
    }
    if (s.c != 1) { throw ShapeError("condition has " + std::to_string(s.c) + " channels, model expects " + std::to_string(channels)); }
    TensorF rep(Shape{s.n, channels, s.h, s.w});
    for (int n = 0; n < s.n; ++n)
      for (int ch = 0; ch < channels; ++ch) rep.sample_block(n).segment(Eigen::Index(ch) * s.pixels(), s.pixels()) = c.sample_block(n);
    parts.push_back(std::move(rep));
  }
  return stack_batch<float>(parts);
}

TrainingSet make_training_set(std::vector<PairedSample> const &pairs, DenoiserConfig const &config)
{
  if (pairs.empty()) { throw ConfigError("training set is empty"); }
  std::vector<TensorF> targets;
  std::vector<TensorF> conditions;
  for (auto const &p : pairs) {
    if (p.target.shape().h != config.image_size || p.target.shape().c != config.visible_channels) {
      throw ShapeError(p.id + ": image does not match the model configuration");
    }
    targets.push_back(p.target);
    conditions.push_back(p.condition);
  }
  return {to_model_range(stack_batch<float>(targets)), to_model_range(condition_batch(conditions, config.condition_channels))};
}

namespace {

TensorF gather(TensorF const &src, std::vector<int> const &rows)
{
  Shape s = src.shape();
  s.n = static_cast<int>(rows.size());
  TensorF out(s);
  for (int i = 0; i < s.n; ++i) { out.sample_block(i) = src.sample_block(rows[static_cast<std::size_t>(i)]); }
  return out;
}

} // namespace

Checkpoint train_denoiser(Checkpoint ckpt, std::vector<PairedSample> const &pairs, TrainSettings const &settings,
                          TrainLogFn const &log, CheckpointFn const &on_checkpoint)
{
  if (settings.steps < 0 || settings.batch_size < 1) { throw ConfigError("train: steps must be >= 0 and batch >= 1"); }
  NoiseSchedule const sched = make_schedule(ckpt.schedule);
  TrainingSet const data = make_training_set(pairs, ckpt.denoiser);
  int const count = data.targets.shape().n;
  AdamState<float> state;
  double running = 1.0;
  for (int local = 0; local < settings.steps; ++local) {
    long const step = ckpt.training_step + 1;
    Rng rng(derive_seed(settings.seed, "step" + std::to_string(step)));
    std::uniform_int_distribution<int> pick(0, count - 1);
    std::uniform_int_distribution<int> timestep(1, sched.num_steps());
    std::vector<int> rows(static_cast<std::size_t>(settings.batch_size));
    std::vector<int> ts(rows.size());
    for (auto &r : rows) { r = pick(rng); }
    for (auto &t : ts) { t = timestep(rng); }
    TensorF const x0 = gather(data.targets, rows);
    TensorF const y = gather(data.conditions, rows);
    TensorF const eps = randn<float>(x0.shape(), rng);

    LossAndGrad<float> const lg = training_loss_and_grad(ckpt.denoiser, ckpt.params, x0, y, ts, eps, sched);
    AdamConfig adam = settings.adam;
    if (settings.warmup_steps > 0) { adam.lr *= std::min(1.0, static_cast<double>(step) / settings.warmup_steps); }
    if (settings.decay_steps > settings.warmup_steps && step > settings.warmup_steps) {
      double const span = settings.decay_steps - settings.warmup_steps;
      double const progress = std::min(1.0, (step - settings.warmup_steps) / span);
      adam.lr *= 0.1 + 0.9 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    }
    adam_step<float>(ckpt.params.tensors, lg.grads, state, adam);
    ckpt.training_step = step;

    running = local == 0 ? lg.loss : 0.98 * running + 0.02 * lg.loss;
    if (log && settings.log_every > 0 && (step % settings.log_every == 0 || local + 1 == settings.steps)) {
      log({step, lg.loss, running, adam.lr});
    }
    if (on_checkpoint && settings.checkpoint_every > 0 && step % settings.checkpoint_every == 0) { on_checkpoint(ckpt); }
  }
  return ckpt;
}

double evaluate_loss(NoisePredictor<float> const &model, std::vector<PairedSample> const &pairs, DenoiserConfig const &config,
                     NoiseSchedule const &sched, std::uint64_t seed, int draws)
{
  TrainingSet const data = make_training_set(pairs, config);
  Rng rng(seed);
  std::uniform_int_distribution<int> timestep(1, sched.num_steps());
  double total = 0.0;
  for (int d = 0; d < draws; ++d) {
    std::vector<int> ts(static_cast<std::size_t>(data.targets.shape().n));
    for (auto &t : ts) { t = timestep(rng); }
    TensorF const eps = randn<float>(data.targets.shape(), rng);
    total += training_loss(model, data.targets, data.conditions, ts, eps, sched);
  }
  return total / draws;
}

} // namespace t2v
