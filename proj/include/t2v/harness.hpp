#pragma once

#include "t2v/data.hpp"
#include "t2v/predictor.hpp"
#include "t2v/sampler.hpp"
#include "t2v/schedule.hpp"

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace t2v {

struct TranslationRow
{
  std::string id;
  std::optional<double> psnr_db;  ///< absent without a ground-truth target
  std::optional<double> ssim;
  long steps_executed = 0;
  double wall_clock_ms = 0.0;
};

struct TranslationReport
{
  std::vector<TranslationRow> rows;

  double mean_psnr() const;
  double mean_ssim() const;
  double mean_wall_clock_ms() const;
};

/// `id,psnr_db,ssim,steps_executed,wall_clock_ms`, one row per image, then a `mean` row.
void write_csv(std::ostream &out, TranslationReport const &report);

struct TranslateOptions
{
  SamplerConfig sampler{};
  bool full_chain = false;
  int batch_size = 64;
  int condition_channels = 1;
  int visible_channels = 3;
};

/// Called for traced states: (image id, step, x_t in IO range).
using SnapshotFn = std::function<void(std::string const &id, int t, TensorF const &image)>;

struct TranslationOutput
{
  std::vector<TensorF> images;  ///< IO range
  TranslationReport report;
};

/// Translates each condition with the coarse-start sampler (or the full chain).
/// Image i uses an rng stream derived from (sampler seed, id i), so results do not
/// depend on batching. Wall-clock covers the sampling loop only and is split evenly
/// across the images of a batch.
TranslationOutput translate(NoisePredictor<float> const &model, NoiseSchedule const &sched, std::vector<std::string> const &ids,
                            std::vector<TensorF> const &conditions, std::vector<TensorF> const *targets,
                            TranslateOptions const &options, SnapshotFn const &snapshot = {});

struct BenchmarkRow
{
  std::string label;  ///< t_start value, or "full"
  int t_start = 0;
  long steps_executed = 0;
  double mean_psnr_db = 0.0;
  double mean_ssim = 0.0;
  double mean_wall_clock_ms = 0.0;
  int images = 0;
};

/// Default launch steps 40, 50, ..., 100 scaled to a chain of `chain_length` steps.
std::vector<int> default_t_starts(int chain_length);

/// One row per launch step plus a final full-chain row.
std::vector<BenchmarkRow> benchmark(NoisePredictor<float> const &model, NoiseSchedule const &sched,
                                    std::vector<PairedSample> const &pairs, std::vector<int> const &t_starts,
                                    TranslateOptions const &options);

/// `t_start,steps_executed,mean_psnr_db,mean_ssim,mean_wall_clock_ms,images`
void write_csv(std::ostream &out, std::vector<BenchmarkRow> const &rows);

} // namespace t2v
