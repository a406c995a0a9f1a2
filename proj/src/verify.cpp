#include "t2v/verify.hpp"

#include "t2v/diffusion.hpp"
#include "t2v/oracle.hpp"
#include "t2v/random.hpp"
#include "t2v/sampler.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>

namespace t2v {

namespace {

SuiteResult timed(std::string name, std::function<std::string()> const &body)
{
  SuiteResult r;
  r.name = std::move(name);
  auto const start = std::chrono::steady_clock::now();
  try {
    r.detail = body();
    r.passed = r.detail.empty();
    if (r.passed) { r.detail = "ok"; }
  } catch (std::exception const &e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::string merge(std::vector<SuiteResult> const &parts)
{
  for (auto const &p : parts) {
    if (!p.passed) { return p.name + ": " + p.detail; }
  }
  return {};
}

} // namespace

SuiteResult schedule_suite(NoiseSchedule const &s, std::string const &name)
{
  return timed(name, [&]() -> std::string {
    if (auto err = validate_schedule(s)) { return *err; }
    for (int i = 1; i < s.num_steps(); ++i) {
      if (!(snr(s, i) < snr(s, i - 1))) { return "snr not strictly decreasing at index " + std::to_string(i); }
    }
    return {};
  });
}

DenoiserConfig tiny_config()
{
  DenoiserConfig c;
  c.image_size = 8;
  c.visible_channels = 3;
  c.condition_channels = 1;
  c.base_width = 4;
  c.depth = 1;
  c.time_embed_dim = 8;
  c.groups = 2;
  c.seed = 11;
  return c;
}

GradientCheck gradient_check(DenoiserConfig const &config, std::uint64_t seed, double step, double floor)
{
  Rng rng(seed);
  ParamSet<double> params = init_params(config).cast<double>();
  // Perturb every tensor so no gradient path is trivially zero (the output conv starts at zero).
  for (auto &t : params.tensors) { t.data() += randn<double>(t.shape(), rng).data() * 0.2; }

  NoiseSchedule const sched = linear_schedule(1000);
  int const batch = 2;
  Shape const sx{batch, config.visible_channels, config.image_size, config.image_size};
  Shape const sy{batch, config.condition_channels, config.image_size, config.image_size};
  TensorD const x0 = randn<double>(sx, rng);
  TensorD const y = randn<double>(sy, rng);
  TensorD const eps = randn<double>(sx, rng);
  std::vector<int> const ts{37, 640};

  LossAndGrad<double> const analytic = training_loss_and_grad(config, params, x0, y, ts, eps, sched);
  TensorD const xt = q_sample(x0, ts, eps, sched);
  auto loss = [&]() { return (eps_theta(config, params, xt, y, ts).data() - eps.data()).square().mean(); };

  GradientCheck out;
  for (std::size_t p = 0; p < params.size(); ++p) {
    TensorD &tensor = params.tensors[p];
    for (Eigen::Index i = 0; i < tensor.size(); ++i) {
      double const saved = tensor[i];
      tensor[i] = saved + step;
      double const up = loss();
      tensor[i] = saved - step;
      double const down = loss();
      tensor[i] = saved;
      double const numeric = (up - down) / (2.0 * step);
      double const a = analytic.grads[p][i];
      double const rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      if (rel > out.max_relative_error) {
        out.max_relative_error = rel;
        out.worst_parameter = params.names[p] + "[" + std::to_string(i) + "]";
      }
      ++out.checked;
    }
  }
  return out;
}

std::vector<SuiteResult> run_verification()
{
  std::vector<SuiteResult> results;
  NoiseSchedule const full = linear_schedule(1000, 1e-4, 0.02);

  results.push_back(timed("schedule", [&]() -> std::string {
    NoiseSchedule const rescaled = rescale_schedule(full, 100);
    std::string err = merge({schedule_suite(full, "linear"), schedule_suite(cosine_schedule(1000), "cosine"),
                             schedule_suite(rescaled, "rescaled")});
    if (!err.empty()) { return err; }
    if (!(full.alpha_bars.back() < 1e-4)) { return "terminal alpha_bar not below 1e-4"; }
    if (rescaled.alpha_bars.back() != full.alpha_bars.back()) { return "rescaling changed the terminal alpha_bar"; }
    return {};
  }));

  results.push_back(timed("forward-process", [&]() -> std::string {
    int const t = 10;
    int const samples = 10000;
    TensorD const x0(Shape{1, 1, 2, 2}, (Eigen::ArrayXd(4) << 0.8, -0.3, 0.0, 0.5).finished());
    Rng rng(101);
    TensorD x(Shape{samples, 1, 2, 2});
    for (int n = 0; n < samples; ++n) { x.sample_block(n) = x0.data(); }
    for (int s = 1; s <= t; ++s) {
      TensorD const z = randn<double>(x.shape(), rng);
      x.data() = x.data() * std::sqrt(1.0 - full.beta(s)) + z.data() * std::sqrt(full.beta(s));
    }
    double const ab = full.alpha_bar(t);
    for (int p = 0; p < 4; ++p) {
      Eigen::ArrayXd v(samples);
      for (int n = 0; n < samples; ++n) { v[n] = x.sample_block(n)[p]; }
      double const mean = v.mean();
      double const var = (v - mean).square().sum() / (samples - 1);
      double const target_var = 1.0 - ab;
      if (std::abs(mean - std::sqrt(ab) * x0[p]) > 3.0 * std::sqrt(target_var / samples)) { return "mean outside 3 SE"; }
      if (std::abs(var - target_var) > 3.0 * target_var * std::sqrt(2.0 / (samples - 1))) { return "variance outside 3 SE"; }
    }
    TensorF const img = randn<float>(Shape{4, 3, 8, 8}, rng);
    TensorF const eps = randn<float>(img.shape(), rng);
    for (int step : {1, 10, 100, 500}) {
      TensorF const back = predict_x0_from_eps(q_sample(img, step, eps, full), step, eps, full);
      if ((back.data() - img.data()).abs().maxCoeff() > 1e-5f) { return "inversion error above 1e-5 at t=" + std::to_string(step); }
    }
    return {};
  }));

  results.push_back(timed("posterior-identity", [&]() -> std::string {
    Rng rng(202);
    std::uniform_int_distribution<int> pick(1, full.num_steps());
    for (int trial = 0; trial < 1000; ++trial) {
      int const t = pick(rng);
      TensorD const x0 = randn<double>(Shape{1, 3, 2, 2}, rng);
      TensorD const xt = randn<double>(x0.shape(), rng);
      double const ab = full.alpha_bar(t);
      TensorD const eps(x0.shape(), (xt.data() - std::sqrt(ab) * x0.data()) / std::sqrt(1.0 - ab));
      TensorD const via_eps = reverse_mean(xt, eps, t, full);
      TensorD const weighted = posterior_moments(x0, xt, t, full).mean;
      if ((via_eps.data() - weighted.data()).abs().maxCoeff() > 1e-6) { return "mean forms disagree at t=" + std::to_string(t); }
    }
    return {};
  }));

  results.push_back(timed("gradient", [&]() -> std::string {
    GradientCheck const g = gradient_check(tiny_config(), 303);
    if (g.max_relative_error >= 1e-5) {
      std::ostringstream os;
      os << "relative error " << g.max_relative_error << " at " << g.worst_parameter;
      return os.str();
    }
    return {};
  }));

  results.push_back(timed("oracle-sampling", [&]() -> std::string {
    int const chains = 10000;
    double const sigma = 0.5;
    GaussianData<double> data{TensorD(Shape{1, 1, 2, 2}, (Eigen::ArrayXd(4) << 0.3, -0.2, 0.5, 0.0).finished()), sigma};
    GaussianOracle<double> oracle(data, full);
    std::vector<Rng> streams;
    for (int i = 0; i < chains; ++i) { streams.emplace_back(derive_seed(404, std::to_string(i))); }
    TensorD const dummy(Shape{chains, 1, 2, 2});
    TensorD const x = sample_full<double>(oracle, dummy, 1, full, VarianceMode::Beta, streams);
    for (int p = 0; p < 4; ++p) {
      Eigen::ArrayXd v(chains);
      for (int n = 0; n < chains; ++n) { v[n] = x.sample_block(n)[p]; }
      double const mean = v.mean();
      double const var = (v - mean).square().sum() / (chains - 1);
      if (std::abs(mean - data.mean[p]) > 3.0 * sigma / std::sqrt(chains)) { return "mean outside 3 sigma/sqrt(N)"; }
      if (std::abs(var / (sigma * sigma) - 1.0) > 0.05) { return "variance off by more than 5%"; }
    }
    Rng rng(505);
    TensorD const x0 = TensorD(Shape{1, 1, 2, 2}, data.mean.data() + randn<double>(Shape{1, 1, 2, 2}, rng).data() * sigma);
    VlbTerms const terms = vlb_terms<double>(oracle, x0, dummy.sample(0), full, VarianceMode::Beta, rng);
    if (terms.prior >= 1e-3) { return "prior term not below 1e-3"; }
    for (double k : terms.kl) {
      if (!(k >= 0.0)) { return "negative KL term"; }
    }
    if (!(terms.decoder >= 0.0)) { return "negative decoder term"; }
    return {};
  }));

  return results;
}

} // namespace t2v
