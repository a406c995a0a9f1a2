#pragma once

#include "t2v/checkpoint.hpp"
#include "t2v/config.hpp"
#include "t2v/data.hpp"

#include <functional>
#include <vector>

namespace t2v {

struct TrainingLog
{
  long step = 0;
  double loss = 0.0;
  double running_loss = 0.0;  ///< exponential moving average, factor 0.98
  double lr = 0.0;
};

using TrainLogFn = std::function<void(TrainingLog const &)>;
using CheckpointFn = std::function<void(Checkpoint const &)>;

/// Fresh model state for `config`; the background colour is estimated from the
/// first training target unless the config overrides it.
Checkpoint initial_checkpoint(RunConfig const &config, std::vector<PairedSample> const &pairs);

/// Model-range batch tensors for a set of pairs.
struct TrainingSet
{
  TensorF targets;     ///< [N, visible, H, W]
  TensorF conditions;  ///< [N, condition_channels, H, W]
};
TrainingSet make_training_set(std::vector<PairedSample> const &pairs, DenoiserConfig const &config);

/// Condition(s) in IO range, replicated to the model's condition channel count.
TensorF condition_batch(std::vector<TensorF> const &conditions, int channels);

/// Runs `settings.steps` optimizer steps of L_simple starting from `start`:
/// draw a batch, t ~ U{1..T}, eps ~ N(0, I), step on |eps - eps_theta(x_t, y, t)|^2.
/// Per-step randomness derives from (settings.seed, global step) so a resumed run
/// sees the same draws as an uninterrupted one.
Checkpoint train_denoiser(Checkpoint start, std::vector<PairedSample> const &pairs, TrainSettings const &settings,
                          TrainLogFn const &log = {}, CheckpointFn const &on_checkpoint = {});

/// Mean L_simple over `draws` (t, eps) realizations per pair.
double evaluate_loss(NoisePredictor<float> const &model, std::vector<PairedSample> const &pairs, DenoiserConfig const &config,
                     NoiseSchedule const &sched, std::uint64_t seed, int draws = 4);

} // namespace t2v
