#pragma once

#include "t2v/autodiff.hpp"
#include "t2v/predictor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace t2v {

struct DenoiserConfig
{
  int image_size = 16;
  int visible_channels = 3;
  int condition_channels = 1;
  int base_width = 32;
  int depth = 2;
  int time_embed_dim = 64;
  int groups = 8;
  std::uint64_t seed = 0;

  /// Channel width at resolution level `level` (level `depth` is the bottleneck).
  int width(int level) const { return base_width * (level + 1); }
};

/// Throws ConfigError describing the first violated constraint.
void validate(DenoiserConfig const &config);

/// Ordered, uniquely named parameter tensors.
template <typename Scalar> struct ParamSet
{
  std::vector<std::string> names;
  std::vector<Tensor<Scalar>> tensors;

  std::size_t size() const { return tensors.size(); }
  Eigen::Index total_elements() const
  {
    Eigen::Index n = 0;
    for (auto const &t : tensors) { n += t.size(); }
    return n;
  }
  int index_of(std::string const &name) const
  {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) { return static_cast<int>(i); }
    }
    throw IndexError("no parameter named '" + name + "'");
  }
  Tensor<Scalar> const &operator[](std::string const &name) const { return tensors[static_cast<std::size_t>(index_of(name))]; }
  Tensor<Scalar> &operator[](std::string const &name) { return tensors[static_cast<std::size_t>(index_of(name))]; }

  template <typename Other> ParamSet<Other> cast() const
  {
    ParamSet<Other> out;
    out.names = names;
    for (auto const &t : tensors) { out.tensors.push_back(t.template cast<Other>()); }
    return out;
  }
};

using DenoiserParams = ParamSet<float>;

enum class InitKind
{
  Kaiming,
  Zero,
  One
};

struct ParamSpec
{
  std::string name;
  Shape shape;
  int fan_in = 1;
  InitKind init = InitKind::Zero;
};

/// Every parameter of the network in creation order.
std::vector<ParamSpec> parameter_layout(DenoiserConfig const &config);

/// Fan-in scaled normal init from config.seed; the output convolution starts at zero.
DenoiserParams init_params(DenoiserConfig const &config);

/// Sinusoidal embedding: sin(t * f_k) then cos(t * f_k), f_k log-spaced from 1 to 1e-4.
Eigen::VectorXd time_embedding(double t, int dim);

namespace detail {

template <typename Scalar> struct ParamLookup
{
  std::unordered_map<std::string, Var<Scalar>> vars;
  Var<Scalar> operator()(std::string const &name) const
  {
    auto it = vars.find(name);
    if (it == vars.end()) { throw IndexError("denoiser: missing parameter '" + name + "'"); }
    return it->second;
  }
};

template <typename Scalar>
Var<Scalar> norm_act(ParamLookup<Scalar> const &p, std::string const &prefix, Var<Scalar> x, int groups)
{
  return silu(group_normalize(x, p(prefix + ".scale"), p(prefix + ".shift"), groups));
}

template <typename Scalar>
Var<Scalar> res_block(ParamLookup<Scalar> const &p, std::string const &name, Var<Scalar> x, Var<Scalar> temb_act, int groups)
{
  Var<Scalar> h = conv2d(norm_act(p, name + ".norm1", x, groups), p(name + ".conv1.weight"), p(name + ".conv1.bias"), 1, 1);
  h = add_channel_bias(h, linear(temb_act, p(name + ".time.weight"), p(name + ".time.bias")));
  h = conv2d(norm_act(p, name + ".norm2", h, groups), p(name + ".conv2.weight"), p(name + ".conv2.bias"), 1, 1);
  Var<Scalar> skip = x;
  if (x.shape().c != h.shape().c) { skip = conv2d(x, p(name + ".skip.weight"), p(name + ".skip.bias")); }
  return skip + h;
}

} // namespace detail

/// U-Net noise predictor: the noisy visible image is concatenated channel-wise
/// with the condition; each residual block adds a projection of the time embedding.
template <typename Scalar>
Var<Scalar> denoiser_forward(DenoiserConfig const &config, std::span<std::string const> names,
                             std::span<Var<Scalar> const> params, Var<Scalar> x_t, Var<Scalar> condition,
                             std::span<int const> timesteps)
{
  Shape const sx = x_t.shape();
  Shape const sy = condition.shape();
  if (sx.c != config.visible_channels || sy.c != config.condition_channels || sx.n != sy.n || sx.h != sy.h ||
      sx.w != sy.w || sx.h != config.image_size || sx.w != config.image_size) {
    throw ShapeError("denoiser: inputs " + sx.str() + " / " + sy.str() + " do not match the configuration");
  }
  if (static_cast<int>(timesteps.size()) != sx.n) { throw ShapeError("denoiser: need one timestep per batch element"); }

  detail::ParamLookup<Scalar> p;
  for (std::size_t i = 0; i < names.size(); ++i) { p.vars.emplace(names[i], params[i]); }
  Tape<Scalar> &tape = *x_t.tape;

  Tensor<Scalar> sinusoid(Shape{sx.n, config.time_embed_dim, 1, 1});
  for (int b = 0; b < sx.n; ++b) {
    sinusoid.sample_block(b) = time_embedding(timesteps[static_cast<std::size_t>(b)], config.time_embed_dim).template cast<Scalar>().array();
  }
  Var<Scalar> temb = linear(tape.leaf(std::move(sinusoid)), p("time.fc1.weight"), p("time.fc1.bias"));
  temb = linear(silu(temb), p("time.fc2.weight"), p("time.fc2.bias"));
  Var<Scalar> const temb_act = silu(temb);

  int const g = config.groups;
  Var<Scalar> h = conv2d(concat_channels(x_t, condition), p("in.weight"), p("in.bias"), 1, 1);
  std::vector<Var<Scalar>> skips;
  for (int level = 0; level < config.depth; ++level) {
    h = detail::res_block(p, "enc" + std::to_string(level), h, temb_act, g);
    skips.push_back(h);
    h = average_downsample(h, 2);
  }
  h = detail::res_block(p, std::string("mid"), h, temb_act, g);
  for (int level = config.depth - 1; level >= 0; --level) {
    h = concat_channels(nearest_upsample(h, 2), skips[static_cast<std::size_t>(level)]);
    h = detail::res_block(p, "dec" + std::to_string(level), h, temb_act, g);
  }
  return conv2d(detail::norm_act(p, std::string("out.norm"), h, g), p("out.weight"), p("out.bias"), 1, 1);
}

/// Inference-only forward pass.
template <typename Scalar>
Tensor<Scalar> eps_theta(DenoiserConfig const &config, ParamSet<Scalar> const &params, Tensor<Scalar> const &x_t,
                         Tensor<Scalar> const &condition, std::span<int const> timesteps)
{
  Tape<Scalar> tape(false);
  std::vector<Var<Scalar>> vars;
  vars.reserve(params.size());
  for (auto const &t : params.tensors) { vars.push_back(tape.leaf(t)); }
  Var<Scalar> out = denoiser_forward<Scalar>(config, params.names, vars, tape.leaf(x_t), tape.leaf(condition), timesteps);
  return out.value();
}

/// The trained network exposed through the predictor interface.
template <typename Scalar> class Denoiser : public NoisePredictor<Scalar>
{
public:
  Denoiser(DenoiserConfig config, ParamSet<Scalar> params)
    : config_(std::move(config))
    , params_(std::move(params))
  {
  }

  Tensor<Scalar> predict(Tensor<Scalar> const &x_t, Tensor<Scalar> const &condition,
                         std::span<int const> timesteps) const override
  {
    return eps_theta(config_, params_, x_t, condition, timesteps);
  }

  DenoiserConfig const &config() const { return config_; }
  ParamSet<Scalar> const &params() const { return params_; }

private:
  DenoiserConfig config_;
  ParamSet<Scalar> params_;
};

} // namespace t2v
