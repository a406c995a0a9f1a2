#include "t2v/checkpoint.hpp"
#include "t2v/config.hpp"
#include "t2v/errors.hpp"
#include "t2v/harness.hpp"
#include "t2v/schedule.hpp"
#include "t2v/training.hpp"
#include "t2v/verify.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace {

using namespace t2v;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerify = 3;

struct Common
{
  std::string config_file;
  std::vector<std::string> overrides;
};

void add_common(CLI::App *cmd, Common &c)
{
  cmd->add_option("-c,--config", c.config_file, "key = value settings file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "override a setting, key=value (repeatable)");
}

RunConfig build_config(Common const &c)
{
  RunConfig config;
  if (!c.config_file.empty()) { apply_config_file(config, c.config_file); }
  for (auto const &kv : c.overrides) {
    auto const eq = kv.find('=');
    if (eq == std::string::npos) { throw ConfigError("--set expects key=value, got '" + kv + "'"); }
    apply_setting(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return config;
}

std::vector<PairedSample> dataset(RunConfig const &config)
{
  if (!config.manifest.empty()) { return load_pairs(load_manifest(config.manifest)); }
  if (config.synthetic_pairs > 0) {
    std::vector<PairedSample> pairs;
    for (auto &s : generate_synthetic_dataset(config.synthetic_pairs, config.synthetic_seed, config.denoiser.image_size)) {
      pairs.push_back(std::move(s.pair));
    }
    return pairs;
  }
  throw ConfigError("no dataset: set data.manifest or data.synthetic_pairs");
}

TranslateOptions translate_options(RunConfig const &config, Checkpoint const &ckpt)
{
  TranslateOptions opt;
  opt.sampler = config.sampler;
  if (!config.background_override) { opt.sampler.background = ckpt.background; }
  opt.condition_channels = ckpt.denoiser.condition_channels;
  opt.visible_channels = ckpt.denoiser.visible_channels;
  return opt;
}

NoiseSchedule schedule_for(Checkpoint const &ckpt, int inference_steps)
{
  NoiseSchedule const full = make_schedule(ckpt.schedule);
  return inference_steps == full.num_steps() ? full : rescale_schedule(full, inference_steps);
}

int cmd_train(Common const &common, std::string const &resume, std::string const &out_path)
{
  RunConfig const config = build_config(common);
  validate(config.denoiser);
  std::vector<PairedSample> const pairs = dataset(config);
  Checkpoint start = resume.empty() ? initial_checkpoint(config, pairs) : checkpoint_load(resume);
  std::filesystem::create_directories(config.output_dir);
  std::filesystem::path const final_path = out_path.empty() ? config.output_dir / "model.t2vd" : std::filesystem::path(out_path);

  std::fprintf(stderr, "training on %zu pairs from step %ld for %d steps\n", pairs.size(), start.training_step,
               config.train.steps);
  Checkpoint const done = train_denoiser(
    std::move(start), pairs, config.train,
    [](TrainingLog const &log) {
      std::fprintf(stderr, "step %ld loss %.5f running %.5f lr %.2e\n", log.step, log.loss, log.running_loss, log.lr);
    },
    [&](Checkpoint const &c) {
      auto const path = config.output_dir / ("model_step" + std::to_string(c.training_step) + ".t2vd");
      checkpoint_save(c, path);
    });
  checkpoint_save(done, final_path);
  std::fprintf(stderr, "wrote %s\n", final_path.string().c_str());
  return 0;
}

int cmd_translate(Common const &common, std::string const &ckpt_path, std::vector<std::string> const &inputs,
                  std::string const &report_path, bool full)
{
  RunConfig const config = build_config(common);
  Checkpoint const ckpt = checkpoint_load(ckpt_path);
  NoiseSchedule const sched = schedule_for(ckpt, config.inference_steps);
  TranslateOptions options = translate_options(config, ckpt);
  options.full_chain = full;

  std::vector<std::string> ids;
  std::vector<TensorF> conditions;
  std::vector<TensorF> targets;
  int failures = 0;
  auto report_failure = [&](std::string const &what, std::exception const &e) {
    std::fprintf(stderr, "skipping %s: %s\n", what.c_str(), e.what());
    ++failures;
  };
  if (!config.manifest.empty()) {
    for (auto const &entry : load_manifest(config.manifest).entries) {
      try {
        TensorF cond = load_image(entry.condition);
        TensorF target = load_image(entry.target);
        conditions.push_back(std::move(cond));
        targets.push_back(std::move(target));
        ids.push_back(entry.id);
      } catch (Error const &e) {
        report_failure(entry.id, e);
      }
    }
  }
  for (auto const &path : inputs) {
    try {
      conditions.push_back(load_image(path));
      ids.push_back(std::filesystem::path(path).stem().string());
    } catch (Error const &e) {
      report_failure(path, e);
    }
  }
  bool const have_targets = !targets.empty() && targets.size() == conditions.size();
  if (conditions.empty()) { throw DecodeError("no decodable input images"); }
  for (auto const &c : conditions) {
    if (c.shape().h != ckpt.denoiser.image_size || c.shape().w != ckpt.denoiser.image_size) {
      throw ShapeError("input size " + c.shape().str() + " does not match the model's " + std::to_string(ckpt.denoiser.image_size));
    }
  }

  Denoiser<float> const model(ckpt.denoiser, ckpt.params);
  std::filesystem::path const out_dir = config.output_dir;
  std::filesystem::create_directories(out_dir);
  SnapshotFn snapshot;
  if (options.sampler.snapshot_stride > 0) {
    std::filesystem::create_directories(out_dir / "trace");
    snapshot = [&](std::string const &id, int t, TensorF const &image) {
      char name[32];
      std::snprintf(name, sizeof name, "_t%04d.ppm", t);
      save_image(image, out_dir / "trace" / (id + name));
    };
  }
  TranslationOutput const result = translate(model, sched, ids, conditions, have_targets ? &targets : nullptr, options, snapshot);
  for (std::size_t i = 0; i < ids.size(); ++i) { save_image(result.images[i], out_dir / (ids[i] + ".ppm")); }

  std::filesystem::path const csv = report_path.empty() ? out_dir / "report.csv" : std::filesystem::path(report_path);
  std::ofstream out(csv, std::ios::trunc);
  if (!out) { throw IoError("cannot write report '" + csv.string() + "'"); }
  write_csv(out, result.report);
  std::fprintf(stderr, "translated %zu images, report %s\n", ids.size(), csv.string().c_str());
  return failures ? kExitData : 0;
}

int cmd_benchmark(Common const &common, std::string const &ckpt_path, std::vector<int> t_starts, std::string const &csv_path)
{
  RunConfig const config = build_config(common);
  Checkpoint const ckpt = checkpoint_load(ckpt_path);
  NoiseSchedule const sched = schedule_for(ckpt, config.inference_steps);
  std::vector<PairedSample> const pairs = dataset(config);
  if (t_starts.empty()) { t_starts = default_t_starts(sched.num_steps()); }
  Denoiser<float> const model(ckpt.denoiser, ckpt.params);
  std::vector<BenchmarkRow> const rows = benchmark(model, sched, pairs, t_starts, translate_options(config, ckpt));
  if (csv_path.empty() || csv_path == "-") {
    write_csv(std::cout, rows);
  } else {
    std::ofstream out(csv_path, std::ios::trunc);
    if (!out) { throw IoError("cannot write '" + csv_path + "'"); }
    write_csv(out, rows);
  }
  return 0;
}

int cmd_inspect(Common const &common, int rescale)
{
  RunConfig const config = build_config(common);
  NoiseSchedule sched = make_schedule(config.schedule);
  if (rescale > 0 && rescale != sched.num_steps()) { sched = rescale_schedule(sched, rescale); }
  std::printf("t,beta,alpha_bar,posterior_variance,snr\n");
  for (int t = 1; t <= sched.num_steps(); ++t) {
    std::printf("%d,%.17g,%.17g,%.17g,%.17g\n", t, sched.beta(t), sched.alpha_bar(t), sched.posterior_variance(t), snr(sched, t - 1));
  }
  return 0;
}

int cmd_verify()
{
  bool ok = true;
  for (auto const &r : run_verification()) {
    std::printf("%-20s %s %10.1f ms  %s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL", r.elapsed_ms, r.detail.c_str());
    ok = ok && r.passed;
  }
  return ok ? 0 : kExitVerify;
}

int cmd_generate(int count, std::uint64_t seed, int size, std::string const &prefix, std::string const &dir)
{
  if (count <= 0) { throw ConfigError("--count must be positive"); }
  std::vector<PairedSample> pairs;
  for (auto &s : generate_synthetic_dataset(count, seed, size, prefix)) { pairs.push_back(std::move(s.pair)); }
  write_dataset(pairs, dir);
  std::fprintf(stderr, "wrote %d pairs to %s\n", count, dir.c_str());
  return 0;
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Conditional diffusion for thermal-to-visible image translation"};
  app.require_subcommand(1);

  Common common;

  std::string resume;
  std::string train_out;
  auto *train = app.add_subcommand("train", "train a denoiser and write a checkpoint");
  add_common(train, common);
  train->add_option("--resume", resume, "continue from a checkpoint")->check(CLI::ExistingFile);
  train->add_option("-o,--output", train_out, "checkpoint path (default <output.dir>/model.t2vd)");

  std::string ckpt_path;
  std::vector<std::string> inputs;
  std::string report;
  bool full = false;
  std::optional<int> t_start;
  std::optional<int> trace;
  auto *translate_cmd = app.add_subcommand("translate", "translate thermal images to visible");
  add_common(translate_cmd, common);
  translate_cmd->add_option("-m,--checkpoint", ckpt_path, "trained checkpoint")->required();
  translate_cmd->add_option("inputs", inputs, "condition images (PGM/PPM)");
  translate_cmd->add_option("--report", report, "CSV report path (default <output.dir>/report.csv)");
  translate_cmd->add_flag("--full", full, "run the full reverse chain from noise");
  translate_cmd->add_option("--t-start", t_start, "launch step of the coarse-start sampler");
  translate_cmd->add_option("--trace", trace, "dump x_t every N steps")->expected(0, 1)->default_str("10");

  std::vector<int> t_starts;
  std::string bench_csv;
  auto *bench = app.add_subcommand("benchmark", "sweep launch steps against the full chain");
  add_common(bench, common);
  bench->add_option("-m,--checkpoint", ckpt_path, "trained checkpoint")->required();
  bench->add_option("--t-starts", t_starts, "launch steps (default 40..100 scaled to the chain)")->delimiter(',');
  bench->add_option("-o,--output", bench_csv, "CSV path (default stdout)");

  int rescale = 0;
  auto *inspect = app.add_subcommand("inspect-schedule", "print the noise schedule as CSV");
  add_common(inspect, common);
  inspect->add_option("--rescale", rescale, "respace to this many steps");

  auto *verify_cmd = app.add_subcommand("verify", "run the built-in verification suites");

  int count = 0;
  std::uint64_t seed = 7;
  int size = 16;
  std::string prefix = "syn";
  std::string dir;
  auto *generate = app.add_subcommand("generate", "write a synthetic paired dataset");
  generate->add_option("-n,--count", count, "number of pairs")->required();
  generate->add_option("--seed", seed, "generator seed");
  generate->add_option("--size", size, "image side length");
  generate->add_option("--prefix", prefix, "id prefix");
  generate->add_option("-o,--output", dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (CLI::ParseError const &e) {
    int const code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train) { return cmd_train(common, resume, train_out); }
    if (*translate_cmd) {
      if (t_start) { common.overrides.push_back("sampler.t_start=" + std::to_string(*t_start)); }
      if (translate_cmd->count("--trace")) {
        common.overrides.push_back("sampler.snapshot_stride=" + std::to_string(trace.value_or(10)));
      }
      if (inputs.empty() && build_config(common).manifest.empty()) {
        throw ConfigError("translate needs input images or data.manifest");
      }
      return cmd_translate(common, ckpt_path, inputs, report, full);
    }
    if (*bench) { return cmd_benchmark(common, ckpt_path, t_starts, bench_csv); }
    if (*inspect) { return cmd_inspect(common, rescale); }
    if (*verify_cmd) { return cmd_verify(); }
    if (*generate) { return cmd_generate(count, seed, size, prefix, dir); }
  } catch (ConfigError const &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (std::exception const &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
