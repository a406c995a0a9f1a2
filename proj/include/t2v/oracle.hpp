#pragma once

#include "t2v/predictor.hpp"
#include "t2v/schedule.hpp"

#include <cmath>

namespace t2v {

/// Isotropic Gaussian data distribution N(mean, std^2 I).
template <typename Scalar> struct GaussianData
{
  Tensor<Scalar> mean;  ///< [1, C, H, W]
  double std = 1.0;
};

struct Marginal
{
  double mean_scale = 1.0;  ///< marginal mean = mean_scale * mu0
  double variance = 1.0;
};

/// Closed form of q(x_t) when x_0 ~ N(mu0, std^2): N(sqrt(abar) mu0, abar std^2 + 1 - abar).
inline Marginal analytic_marginal(int t, double data_std, NoiseSchedule const &sched)
{
  double const ab = sched.alpha_bar(t);
  return {std::sqrt(ab), ab * data_std * data_std + (1.0 - ab)};
}

/// E[eps | x_t] = sqrt(1 - abar) (x_t - sqrt(abar) mu0) / (abar std^2 + 1 - abar).
template <typename Scalar>
Tensor<Scalar> gaussian_eps_star(Tensor<Scalar> const &xt, int t, GaussianData<Scalar> const &data, NoiseSchedule const &sched)
{
  if (xt.per_sample() != data.mean.size()) { throw ShapeError("gaussian_eps_star: x_t does not match the data mean"); }
  double const ab = sched.alpha_bar(t);
  double const gain = std::sqrt(1.0 - ab) / (ab * data.std * data.std + 1.0 - ab);
  Tensor<Scalar> out(xt.shape());
  for (int n = 0; n < xt.shape().n; ++n) {
    out.sample_block(n) = (xt.sample_block(n) - data.mean.data() * Scalar(std::sqrt(ab))) * Scalar(gain);
  }
  return out;
}

/// Residual per-element variance of eps given x_t, i.e. L_simple of the ideal predictor.
inline double gaussian_residual_variance(int t, double data_std, NoiseSchedule const &sched)
{
  double const ab = sched.alpha_bar(t);
  return 1.0 - (1.0 - ab) / (ab * data_std * data_std + 1.0 - ab);
}

/// Drop-in replacement for the trained network; the condition is ignored.
/// Timesteps index `schedule`, which must be the training (unrescaled) schedule.
template <typename Scalar> class GaussianOracle : public NoisePredictor<Scalar>
{
public:
  GaussianOracle(GaussianData<Scalar> data, NoiseSchedule schedule)
    : data_(std::move(data))
    , schedule_(std::move(schedule))
  {
    if (!(data_.std > 0.0)) { throw RangeError("GaussianOracle: std must be positive"); }
  }

  Tensor<Scalar> predict(Tensor<Scalar> const &x_t, Tensor<Scalar> const &, std::span<int const> timesteps) const override
  {
    Tensor<Scalar> out(x_t.shape());
    for (int n = 0; n < x_t.shape().n; ++n) {
      out.sample_block(n) = gaussian_eps_star(x_t.sample(n), timesteps[static_cast<std::size_t>(n)], data_, schedule_).data();
    }
    return out;
  }

  GaussianData<Scalar> const &data() const { return data_; }

private:
  GaussianData<Scalar> data_;
  NoiseSchedule schedule_;
};

} // namespace t2v
