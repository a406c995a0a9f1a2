#pragma once

#include "t2v/tensor.hpp"

#include <memory>
#include <span>

namespace t2v {

/// Anything that can stand in for the conditional noise predictor eps(x_t, y, t).
///
/// `timesteps` holds one network timestep per batch element, numbered in the
/// training schedule (see NoiseSchedule::model_timestep).
template <typename Scalar> class NoisePredictor
{
public:
  virtual ~NoisePredictor() = default;
  virtual Tensor<Scalar> predict(Tensor<Scalar> const &x_t, Tensor<Scalar> const &condition,
                                 std::span<int const> timesteps) const = 0;
};

/// Forwards to another predictor and counts batched evaluations.
template <typename Scalar> class CountingPredictor : public NoisePredictor<Scalar>
{
public:
  explicit CountingPredictor(NoisePredictor<Scalar> const &inner)
    : inner_(inner)
  {
  }

  Tensor<Scalar> predict(Tensor<Scalar> const &x_t, Tensor<Scalar> const &condition,
                         std::span<int const> timesteps) const override
  {
    ++calls_;
    return inner_.predict(x_t, condition, timesteps);
  }

  long calls() const { return calls_; }
  void reset() { calls_ = 0; }

private:
  NoisePredictor<Scalar> const &inner_;
  mutable long calls_ = 0;
};

} // namespace t2v
