#pragma once

#include "t2v/denoiser.hpp"
#include "t2v/predictor.hpp"
#include "t2v/random.hpp"
#include "t2v/schedule.hpp"

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

// Forward-process identities. Step numbers t are 1-based with t = 0 meaning the
// clean image, so alpha_bar(0) = 1.
//
// The noising identity used throughout is x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps,
// the only form whose moments agree with q(x_t | x_0) = N(sqrt(abar_t) x_0, (1 - abar_t) I).

namespace t2v {

/// Reverse-transition variance: beta_t, or the forward posterior variance.
enum class VarianceMode
{
  Beta,
  Posterior
};

inline void check_step(NoiseSchedule const &s, int t, int lowest, char const *what)
{
  if (t < lowest || t > s.num_steps()) {
    throw IndexError(std::string(what) + ": step " + std::to_string(t) + " outside [" + std::to_string(lowest) + ", " +
                     std::to_string(s.num_steps()) + "]");
  }
}

template <typename Scalar>
Tensor<Scalar> q_sample(Tensor<Scalar> const &x0, int t, Tensor<Scalar> const &eps, NoiseSchedule const &sched)
{
  require_same_shape(x0, eps, "q_sample");
  check_step(sched, t, 0, "q_sample");
  double const ab = sched.alpha_bar(t);
  return Tensor<Scalar>(x0.shape(), x0.data() * Scalar(std::sqrt(ab)) + eps.data() * Scalar(std::sqrt(1.0 - ab)));
}

/// Per-sample steps: sample n is noised to timesteps[n].
template <typename Scalar>
Tensor<Scalar> q_sample(Tensor<Scalar> const &x0, std::span<int const> timesteps, Tensor<Scalar> const &eps,
                        NoiseSchedule const &sched)
{
  require_same_shape(x0, eps, "q_sample");
  if (static_cast<int>(timesteps.size()) != x0.shape().n) { throw ShapeError("q_sample: need one step per sample"); }
  Tensor<Scalar> out(x0.shape());
  for (int n = 0; n < x0.shape().n; ++n) {
    int const t = timesteps[static_cast<std::size_t>(n)];
    check_step(sched, t, 0, "q_sample");
    double const ab = sched.alpha_bar(t);
    out.sample_block(n) = x0.sample_block(n) * Scalar(std::sqrt(ab)) + eps.sample_block(n) * Scalar(std::sqrt(1.0 - ab));
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> predict_x0_from_eps(Tensor<Scalar> const &xt, int t, Tensor<Scalar> const &eps, NoiseSchedule const &sched)
{
  require_same_shape(xt, eps, "predict_x0_from_eps");
  check_step(sched, t, 0, "predict_x0_from_eps");
  double const ab = sched.alpha_bar(t);
  if (ab < 1e-12) { throw RangeError("predict_x0_from_eps: alpha_bar underflows at step " + std::to_string(t)); }
  return Tensor<Scalar>(xt.shape(), (xt.data() - eps.data() * Scalar(std::sqrt(1.0 - ab))) / Scalar(std::sqrt(ab)));
}

template <typename Scalar> struct PosteriorMoments
{
  Tensor<Scalar> mean;
  double variance = 0.0;
};

/// Moments of q(x_{t-1} | x_t, x_0) in the alpha_bar-weighted form.
template <typename Scalar>
PosteriorMoments<Scalar> posterior_moments(Tensor<Scalar> const &x0, Tensor<Scalar> const &xt, int t, NoiseSchedule const &sched)
{
  require_same_shape(x0, xt, "posterior_moments");
  check_step(sched, t, 1, "posterior_moments");
  double const ab = sched.alpha_bar(t);
  double const ab_prev = sched.alpha_bar(t - 1);
  double const c0 = std::sqrt(ab_prev) * sched.beta(t) / (1.0 - ab);
  double const ct = std::sqrt(sched.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
  return {Tensor<Scalar>(x0.shape(), x0.data() * Scalar(c0) + xt.data() * Scalar(ct)), sched.posterior_variance(t)};
}

/// Mean of the reverse step written through the noise: (x_t - beta_t / sqrt(1 - abar_t) eps) / sqrt(alpha_t).
template <typename Scalar>
Tensor<Scalar> reverse_mean(Tensor<Scalar> const &xt, Tensor<Scalar> const &eps, int t, NoiseSchedule const &sched)
{
  require_same_shape(xt, eps, "reverse_mean");
  check_step(sched, t, 1, "reverse_mean");
  double const coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
  double const inv_root_alpha = 1.0 / std::sqrt(sched.alpha(t));
  return Tensor<Scalar>(xt.shape(), (xt.data() - eps.data() * Scalar(coef)) * Scalar(inv_root_alpha));
}

inline double reverse_variance(NoiseSchedule const &sched, int t, VarianceMode mode)
{
  return mode == VarianceMode::Beta ? sched.beta(t) : sched.posterior_variance(t);
}

/// Network timesteps for schedule steps.
inline std::vector<int> model_timesteps(NoiseSchedule const &sched, std::span<int const> steps)
{
  std::vector<int> out(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) { out[i] = sched.model_timestep(steps[i]); }
  return out;
}

/// L_simple with an arbitrary predictor (value only).
template <typename Scalar>
double training_loss(NoisePredictor<Scalar> const &model, Tensor<Scalar> const &x0, Tensor<Scalar> const &condition,
                     std::span<int const> timesteps, Tensor<Scalar> const &eps, NoiseSchedule const &sched)
{
  for (int t : timesteps) { check_step(sched, t, 1, "training_loss"); }
  Tensor<Scalar> const xt = q_sample(x0, timesteps, eps, sched);
  std::vector<int> const model_t = model_timesteps(sched, timesteps);
  Tensor<Scalar> const pred = model.predict(xt, condition, model_t);
  require_same_shape(pred, eps, "training_loss");
  return static_cast<double>((pred.data() - eps.data()).square().mean());
}

template <typename Scalar> struct LossAndGrad
{
  double loss = 0.0;
  std::vector<Tensor<Scalar>> grads;
};

/// L_simple of the denoiser plus its gradient with respect to every parameter.
template <typename Scalar>
LossAndGrad<Scalar> training_loss_and_grad(DenoiserConfig const &config, ParamSet<Scalar> const &params,
                                           Tensor<Scalar> const &x0, Tensor<Scalar> const &condition,
                                           std::span<int const> timesteps, Tensor<Scalar> const &eps,
                                           NoiseSchedule const &sched)
{
  for (int t : timesteps) { check_step(sched, t, 1, "training_loss"); }
  Tape<Scalar> tape;
  std::vector<Var<Scalar>> vars;
  vars.reserve(params.size());
  for (auto const &p : params.tensors) { vars.push_back(tape.leaf(p, true)); }
  std::vector<int> const model_t = model_timesteps(sched, timesteps);
  Var<Scalar> const xt = tape.leaf(q_sample(x0, timesteps, eps, sched));
  Var<Scalar> const pred = denoiser_forward<Scalar>(config, params.names, vars, xt, tape.leaf(condition), model_t);
  Var<Scalar> const loss = mse_loss(pred, tape.leaf(eps));
  tape.backward(loss);
  LossAndGrad<Scalar> out;
  out.loss = static_cast<double>(loss.value()[0]);
  for (auto const &v : vars) { out.grads.push_back(tape.grad_or_zero(v.id)); }
  return out;
}

/// Mean per-element KL(N(m1, v1) || N(m2, v2)) with scalar variances.
template <typename A, typename B> double gaussian_kl(A const &m1, double v1, B const &m2, double v2)
{
  double const mean_sq = (m1.template cast<double>() - m2.template cast<double>()).square().mean();
  return std::max(0.0, 0.5 * (std::log(v2 / v1) + (v1 + mean_sq) / v2 - 1.0));
}

inline double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Mean negative log-likelihood of x0 in [-1, 1] under N(mean, variance) discretized
/// into 256 bins of width 2/255; the outer bins extend to infinity.
template <typename A, typename B> double discretized_gaussian_nll(A const &x0, B const &mean, double variance)
{
  double const inv_std = 1.0 / std::sqrt(variance);
  double const half_bin = 1.0 / 255.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    double const x = static_cast<double>(x0[i]);
    double const m = static_cast<double>(mean[i]);
    double const upper = x > 1.0 - 1e-3 ? 1.0 : standard_normal_cdf((x - m + half_bin) * inv_std);
    double const lower = x < -1.0 + 1e-3 ? 0.0 : standard_normal_cdf((x - m - half_bin) * inv_std);
    total -= std::log(std::max(upper - lower, 1e-12));
  }
  return total / static_cast<double>(x0.size());
}

/// Variational-bound decomposition, in nats per element.
struct VlbTerms
{
  std::vector<double> kl;  ///< kl[t - 2] = L_{t-1} for t = 2..T
  double prior = 0.0;      ///< L_T
  double decoder = 0.0;    ///< L_0
  double total() const
  {
    double s = prior + decoder;
    for (double v : kl) { s += v; }
    return s;
  }
};

/// Prior term: KL(q(x_T | x_0) || N(0, I)).
template <typename Scalar> double prior_kl(Tensor<Scalar> const &x0, NoiseSchedule const &sched)
{
  double const ab = sched.alpha_bar(sched.num_steps());
  typename Tensor<Scalar>::Array const mean = x0.data() * Scalar(std::sqrt(ab));
  return gaussian_kl(mean, 1.0 - ab, Tensor<Scalar>::Array::Zero(mean.size()).eval(), 1.0);
}

/// Diagnostic bound terms for one realization of x_t per step. Never used for training.
template <typename Scalar>
VlbTerms vlb_terms(NoisePredictor<Scalar> const &model, Tensor<Scalar> const &x0, Tensor<Scalar> const &condition,
                   NoiseSchedule const &sched, VarianceMode mode, Rng &rng)
{
  VlbTerms out;
  int const steps = sched.num_steps();
  std::vector<int> tvec(static_cast<std::size_t>(x0.shape().n));
  for (int t = 1; t <= steps; ++t) {
    Tensor<Scalar> const eps = randn<Scalar>(x0.shape(), rng);
    Tensor<Scalar> const xt = q_sample(x0, t, eps, sched);
    std::fill(tvec.begin(), tvec.end(), sched.model_timestep(t));
    Tensor<Scalar> const mean = reverse_mean(xt, model.predict(xt, condition, tvec), t, sched);
    if (t == 1) {
      out.decoder = discretized_gaussian_nll(x0.data(), mean.data(), reverse_variance(sched, 1, mode));
    } else {
      PosteriorMoments<Scalar> const q = posterior_moments(x0, xt, t, sched);
      out.kl.push_back(gaussian_kl(q.mean.data(), q.variance, mean.data(), reverse_variance(sched, t, mode)));
    }
  }
  out.prior = prior_kl(x0, sched);
  return out;
}

} // namespace t2v
