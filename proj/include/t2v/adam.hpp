#pragma once

#include "t2v/tensor.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace t2v {

struct AdamConfig
{
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar> struct AdamState
{
  std::vector<Tensor<Scalar>> first_moment;
  std::vector<Tensor<Scalar>> second_moment;
  long step = 0;
};

/// One bias-corrected adaptive-moment update, applied in place.
template <typename Scalar>
void adam_step(std::span<Tensor<Scalar>> params, std::span<Tensor<Scalar> const> grads, AdamState<Scalar> &state,
               AdamConfig const &cfg)
{
  if (params.size() != grads.size()) { throw ShapeError("adam_step: parameter/gradient count mismatch"); }
  if (state.first_moment.empty()) {
    for (auto const &p : params) {
      state.first_moment.emplace_back(p.shape());
      state.second_moment.emplace_back(p.shape());
    }
  }
  if (state.first_moment.size() != params.size()) { throw ShapeError("adam_step: optimizer state does not match parameters"); }
  ++state.step;
  double const c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  double const c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  auto const b1 = static_cast<Scalar>(cfg.beta1);
  auto const b2 = static_cast<Scalar>(cfg.beta2);
  auto const step_size = static_cast<Scalar>(cfg.lr / c1);
  auto const root_c2 = static_cast<Scalar>(std::sqrt(c2));
  auto const eps = static_cast<Scalar>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i], grads[i], "adam_step");
    auto &m = state.first_moment[i].data();
    auto &v = state.second_moment[i].data();
    auto const &g = grads[i].data();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    params[i].data() -= step_size * m / (v.sqrt() / root_c2 + eps);
  }
}

} // namespace t2v
