#include "t2v/denoiser.hpp"

#include <random>

namespace t2v {

void validate(DenoiserConfig const &c)
{
  if (c.depth < 0) { throw ConfigError("denoiser: depth must be >= 0"); }
  if (c.image_size < 1 || c.image_size % (1 << c.depth) != 0) {
    throw ConfigError("denoiser: image_size must be divisible by 2^depth");
  }
  if (c.visible_channels < 1 || c.condition_channels < 1) { throw ConfigError("denoiser: channel counts must be positive"); }
  if (c.groups < 1 || c.base_width < 1 || c.base_width % c.groups != 0) {
    throw ConfigError("denoiser: base_width must be a positive multiple of groups");
  }
  if (c.time_embed_dim < 2 || c.time_embed_dim % 2 != 0) { throw ConfigError("denoiser: time_embed_dim must be even"); }
}

namespace {

void add_conv(std::vector<ParamSpec> &out, std::string const &name, int cin, int cout, int k, InitKind init = InitKind::Kaiming)
{
  out.push_back({name + ".weight", Shape{cout, cin, k, k}, cin * k * k, init});
  out.push_back({name + ".bias", Shape{cout, 1, 1, 1}, 1, InitKind::Zero});
}

void add_linear(std::vector<ParamSpec> &out, std::string const &name, int in, int out_dim)
{
  out.push_back({name + ".weight", Shape{out_dim, in, 1, 1}, in, InitKind::Kaiming});
  out.push_back({name + ".bias", Shape{out_dim, 1, 1, 1}, 1, InitKind::Zero});
}

void add_norm(std::vector<ParamSpec> &out, std::string const &name, int channels)
{
  out.push_back({name + ".scale", Shape{channels, 1, 1, 1}, 1, InitKind::One});
  out.push_back({name + ".shift", Shape{channels, 1, 1, 1}, 1, InitKind::Zero});
}

void add_res_block(std::vector<ParamSpec> &out, std::string const &name, int cin, int cout, int temb)
{
  add_norm(out, name + ".norm1", cin);
  add_conv(out, name + ".conv1", cin, cout, 3);
  add_linear(out, name + ".time", temb, cout);
  add_norm(out, name + ".norm2", cout);
  add_conv(out, name + ".conv2", cout, cout, 3);
  if (cin != cout) { add_conv(out, name + ".skip", cin, cout, 1); }
}

} // namespace

std::vector<ParamSpec> parameter_layout(DenoiserConfig const &c)
{
  validate(c);
  std::vector<ParamSpec> out;
  int const temb = c.time_embed_dim;
  add_linear(out, "time.fc1", temb, temb);
  add_linear(out, "time.fc2", temb, temb);
  add_conv(out, "in", c.visible_channels + c.condition_channels, c.width(0), 3);
  for (int level = 0; level < c.depth; ++level) {
    int const cin = level == 0 ? c.width(0) : c.width(level - 1);
    add_res_block(out, "enc" + std::to_string(level), cin, c.width(level), temb);
  }
  add_res_block(out, "mid", c.depth == 0 ? c.width(0) : c.width(c.depth - 1), c.width(c.depth), temb);
  for (int level = c.depth - 1; level >= 0; --level) {
    int const below = c.width(level + 1);
    add_res_block(out, "dec" + std::to_string(level), below + c.width(level), c.width(level), temb);
  }
  add_norm(out, "out.norm", c.width(0));
  add_conv(out, "out", c.width(0), c.visible_channels, 3, InitKind::Zero);
  return out;
}

DenoiserParams init_params(DenoiserConfig const &config)
{
  DenoiserParams params;
  std::mt19937_64 rng(config.seed);
  for (ParamSpec const &spec : parameter_layout(config)) {
    TensorF t(spec.shape);
    switch (spec.init) {
    case InitKind::Zero: break;
    case InitKind::One: t.data().setOnes(); break;
    case InitKind::Kaiming: {
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / spec.fan_in));
      for (Eigen::Index i = 0; i < t.size(); ++i) { t[i] = static_cast<float>(normal(rng)); }
      break;
    }
    }
    params.names.push_back(spec.name);
    params.tensors.push_back(std::move(t));
  }
  return params;
}

Eigen::VectorXd time_embedding(double t, int dim)
{
  if (dim < 2 || dim % 2 != 0) { throw RangeError("time_embedding: dimension must be even and >= 2"); }
  if (t < 0) { throw RangeError("time_embedding: timestep must be non-negative"); }
  int const half = dim / 2;
  Eigen::VectorXd out(dim);
  for (int k = 0; k < half; ++k) {
    double const freq = half == 1 ? 1.0 : std::exp(-std::log(1e4) * k / (half - 1));
    out[k] = std::sin(t * freq);
    out[half + k] = std::cos(t * freq);
  }
  return out;
}

} // namespace t2v
