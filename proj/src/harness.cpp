#include "t2v/harness.hpp"

#include "t2v/metrics.hpp"
#include "t2v/random.hpp"
#include "t2v/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

namespace t2v {

namespace {

template <typename Get> double mean_of(std::vector<TranslationRow> const &rows, Get get)
{
  double sum = 0.0;
  int n = 0;
  for (auto const &r : rows) {
    if (auto v = get(r)) {
      sum += *v;
      ++n;
    }
  }
  return n ? sum / n : std::nan("");
}

std::string fmt(double v)
{
  if (std::isnan(v)) { return ""; }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

} // namespace

double TranslationReport::mean_psnr() const { return mean_of(rows, [](auto const &r) { return r.psnr_db; }); }
double TranslationReport::mean_ssim() const { return mean_of(rows, [](auto const &r) { return r.ssim; }); }
double TranslationReport::mean_wall_clock_ms() const
{
  return mean_of(rows, [](auto const &r) { return std::optional<double>(r.wall_clock_ms); });
}

void write_csv(std::ostream &out, TranslationReport const &report)
{
  out << "id,psnr_db,ssim,steps_executed,wall_clock_ms\n";
  long steps = 0;
  for (auto const &r : report.rows) {
    out << r.id << ',' << (r.psnr_db ? fmt(*r.psnr_db) : "") << ',' << (r.ssim ? fmt(*r.ssim) : "") << ',' << r.steps_executed
        << ',' << fmt(r.wall_clock_ms) << '\n';
    steps += r.steps_executed;
  }
  double const mean_steps = report.rows.empty() ? 0.0 : static_cast<double>(steps) / report.rows.size();
  out << "mean," << fmt(report.mean_psnr()) << ',' << fmt(report.mean_ssim()) << ',' << fmt(mean_steps) << ','
      << fmt(report.mean_wall_clock_ms()) << '\n';
}

TranslationOutput translate(NoisePredictor<float> const &model, NoiseSchedule const &sched, std::vector<std::string> const &ids,
                            std::vector<TensorF> const &conditions, std::vector<TensorF> const *targets,
                            TranslateOptions const &options, SnapshotFn const &snapshot)
{
  if (ids.size() != conditions.size() || (targets && targets->size() != conditions.size())) {
    throw ShapeError("translate: ids, conditions and targets must have equal length");
  }
  int const batch = std::max(1, options.batch_size);
  TranslationOutput out;
  for (std::size_t begin = 0; begin < conditions.size(); begin += static_cast<std::size_t>(batch)) {
    std::size_t const end = std::min(conditions.size(), begin + static_cast<std::size_t>(batch));
    std::vector<TensorF> const group(conditions.begin() + static_cast<long>(begin), conditions.begin() + static_cast<long>(end));
    TensorF const y = condition_batch(group, options.condition_channels);
    std::vector<Rng> streams;
    for (std::size_t i = begin; i < end; ++i) { streams.emplace_back(derive_seed(options.sampler.seed, ids[i])); }

    TraceFn<float> trace;
    int const stride = options.sampler.snapshot_stride;
    if (snapshot && stride > 0) {
      trace = [&](int t, TensorF const &x) {
        TensorF const io = to_io_range(x);
        for (int n = 0; n < io.shape().n; ++n) { snapshot(ids[begin + static_cast<std::size_t>(n)], t, io.sample(n)); }
      };
    }

    CountingPredictor<float> counter(model);
    auto const start = std::chrono::steady_clock::now();
    TensorF result = options.full_chain
                       ? sample_full<float>(counter, y, options.visible_channels, sched, options.sampler.variance_mode, streams,
                                            stride, trace)
                       : t2v_skip_sample<float>(counter, y, options.sampler, sched, streams, trace);
    double const elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result = to_io_range(result);

    double const per_image = elapsed / static_cast<double>(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      TensorF image = result.sample(static_cast<int>(i - begin));
      TranslationRow row{ids[i], std::nullopt, std::nullopt, counter.calls(), per_image};
      if (targets) {
        row.psnr_db = psnr_gray(image, (*targets)[i]);
        row.ssim = ssim(image, (*targets)[i]);
      }
      out.report.rows.push_back(std::move(row));
      out.images.push_back(std::move(image));
    }
  }
  return out;
}

std::vector<int> default_t_starts(int chain_length)
{
  std::vector<int> out;
  for (int tr = 40; tr <= 100; tr += 10) {
    int const scaled = static_cast<int>(std::lround(tr * chain_length / 100.0));
    if (scaled >= 1 && (out.empty() || out.back() != scaled)) { out.push_back(scaled); }
  }
  return out;
}

std::vector<BenchmarkRow> benchmark(NoisePredictor<float> const &model, NoiseSchedule const &sched,
                                    std::vector<PairedSample> const &pairs, std::vector<int> const &t_starts,
                                    TranslateOptions const &options)
{
  std::vector<std::string> ids;
  std::vector<TensorF> conditions;
  std::vector<TensorF> targets;
  for (auto const &p : pairs) {
    ids.push_back(p.id);
    conditions.push_back(p.condition);
    targets.push_back(p.target);
  }
  std::vector<BenchmarkRow> rows;
  auto run = [&](std::string label, int t_start, bool full) {
    TranslateOptions opt = options;
    opt.full_chain = full;
    opt.sampler.t_start = t_start;
    opt.sampler.snapshot_stride = 0;
    TranslationOutput const res = translate(model, sched, ids, conditions, &targets, opt);
    BenchmarkRow row;
    row.label = std::move(label);
    row.t_start = t_start;
    row.steps_executed = res.report.rows.empty() ? 0 : res.report.rows.front().steps_executed;
    row.mean_psnr_db = res.report.mean_psnr();
    row.mean_ssim = res.report.mean_ssim();
    row.mean_wall_clock_ms = res.report.mean_wall_clock_ms();
    row.images = static_cast<int>(res.report.rows.size());
    rows.push_back(std::move(row));
  };
  for (int tr : t_starts) { run(std::to_string(tr), tr, false); }
  run("full", sched.num_steps(), true);
  return rows;
}

void write_csv(std::ostream &out, std::vector<BenchmarkRow> const &rows)
{
  out << "t_start,steps_executed,mean_psnr_db,mean_ssim,mean_wall_clock_ms,images\n";
  for (auto const &r : rows) {
    out << r.label << ',' << r.steps_executed << ',' << fmt(r.mean_psnr_db) << ',' << fmt(r.mean_ssim) << ','
        << fmt(r.mean_wall_clock_ms) << ',' << r.images << '\n';
  }
}

} // namespace t2v
