#include "t2v/config.hpp"

#include "t2v/errors.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace t2v {

namespace {

std::string trim(std::string const &s)
{
  auto const first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) { return {}; }
  auto const last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

} // namespace

KeyValues parse_key_values(std::string const &text)
{
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) { line.erase(hash); }
    line = trim(line);
    if (line.empty()) { continue; }
    auto const eq = line.find('=');
    if (eq == std::string::npos) { throw ConfigError("expected key = value, got '" + line + "'"); }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::string format_key_values(KeyValues const &kv)
{
  std::string out;
  for (auto const &[k, v] : kv) { out += k + "=" + v + "\n"; }
  return out;
}

std::string format_double(double v)
{
  char buf[64];
  auto const res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string const &text, std::string const &key)
{
  double v = 0.0;
  auto const res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw ConfigError("'" + key + "': expected a number, got '" + text + "'");
  }
  return v;
}

long long parse_int(std::string const &text, std::string const &key)
{
  long long v = 0;
  auto const res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw ConfigError("'" + key + "': expected an integer, got '" + text + "'");
  }
  return v;
}

std::string to_string(VarianceMode mode) { return mode == VarianceMode::Beta ? "beta" : "posterior"; }

VarianceMode parse_variance_mode(std::string const &text)
{
  if (text == "beta") { return VarianceMode::Beta; }
  if (text == "posterior") { return VarianceMode::Posterior; }
  throw ConfigError("variance mode must be 'beta' or 'posterior', got '" + text + "'");
}

std::string format_background(BackgroundColor const &c)
{
  std::string out;
  for (std::size_t i = 0; i < c.channels.size(); ++i) {
    if (i) { out += ","; }
    char buf[32];
    auto const res = std::to_chars(buf, buf + sizeof buf, c.channels[i]);
    out.append(buf, res.ptr);
  }
  return out;
}

BackgroundColor parse_background(std::string const &text)
{
  BackgroundColor c;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::string const field = trim(part);
    float v = 0.0f;
    auto const res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
      throw ConfigError("background: expected a number, got '" + field + "'");
    }
    if (!(v >= 0.0f && v <= 1.0f)) { throw ConfigError("background channel outside [0, 1]"); }
    c.channels.push_back(v);
  }
  if (c.channels.empty()) { throw ConfigError("background needs at least one channel"); }
  return c;
}

namespace {

using Setter = std::function<void(RunConfig &, std::string const &, std::string const &)>;

std::map<std::string, Setter> const &setters()
{
  static std::map<std::string, Setter> const table = [] {
    std::map<std::string, Setter> m;
    auto as_int = [](std::string const &v, std::string const &k) { return static_cast<int>(parse_int(v, k)); };
    auto as_seed = [](std::string const &v, std::string const &k) {
      long long const s = parse_int(v, k);
      if (s < 0) { throw ConfigError("'" + k + "' must be non-negative"); }
      return static_cast<std::uint64_t>(s);
    };
    m["schedule.family"] = [](RunConfig &c, auto const &, auto const &v) { c.schedule.family = v; };
    m["schedule.steps"] = [=](RunConfig &c, auto const &k, auto const &v) { c.schedule.num_steps = as_int(v, k); };
    m["schedule.beta_start"] = [](RunConfig &c, auto const &k, auto const &v) { c.schedule.beta_start = parse_double(v, k); };
    m["schedule.beta_end"] = [](RunConfig &c, auto const &k, auto const &v) { c.schedule.beta_end = parse_double(v, k); };
    m["schedule.cosine_offset"] = [](RunConfig &c, auto const &k, auto const &v) { c.schedule.cosine_offset = parse_double(v, k); };
    m["inference.steps"] = [=](RunConfig &c, auto const &k, auto const &v) { c.inference_steps = as_int(v, k); };
    m["model.image_size"] = [=](RunConfig &c, auto const &k, auto const &v) { c.denoiser.image_size = as_int(v, k); };
    m["model.condition_channels"] = [=](RunConfig &c, auto const &k, auto const &v) { c.denoiser.condition_channels = as_int(v, k); };
    m["model.base_width"] = [=](RunConfig &c, auto const &k, auto const &v) { c.denoiser.base_width = as_int(v, k); };
    m["model.depth"] = [=](RunConfig &c, auto const &k, auto const &v) { c.denoiser.depth = as_int(v, k); };
    m["model.time_embed_dim"] = [=](RunConfig &c, auto const &k, auto const &v) { c.denoiser.time_embed_dim = as_int(v, k); };
    m["model.groups"] = [=](RunConfig &c, auto const &k, auto const &v) { c.denoiser.groups = as_int(v, k); };
    m["model.seed"] = [=](RunConfig &c, auto const &k, auto const &v) { c.denoiser.seed = as_seed(v, k); };
    m["train.lr"] = [](RunConfig &c, auto const &k, auto const &v) { c.train.adam.lr = parse_double(v, k); };
    m["train.beta1"] = [](RunConfig &c, auto const &k, auto const &v) { c.train.adam.beta1 = parse_double(v, k); };
    m["train.beta2"] = [](RunConfig &c, auto const &k, auto const &v) { c.train.adam.beta2 = parse_double(v, k); };
    m["train.steps"] = [=](RunConfig &c, auto const &k, auto const &v) { c.train.steps = as_int(v, k); };
    m["train.batch"] = [=](RunConfig &c, auto const &k, auto const &v) { c.train.batch_size = as_int(v, k); };
    m["train.warmup"] = [=](RunConfig &c, auto const &k, auto const &v) { c.train.warmup_steps = as_int(v, k); };
    m["train.decay_steps"] = [=](RunConfig &c, auto const &k, auto const &v) { c.train.decay_steps = as_int(v, k); };
    m["train.seed"] = [=](RunConfig &c, auto const &k, auto const &v) { c.train.seed = as_seed(v, k); };
    m["train.log_every"] = [=](RunConfig &c, auto const &k, auto const &v) { c.train.log_every = as_int(v, k); };
    m["train.checkpoint_every"] = [=](RunConfig &c, auto const &k, auto const &v) { c.train.checkpoint_every = as_int(v, k); };
    m["sampler.t_start"] = [=](RunConfig &c, auto const &k, auto const &v) { c.sampler.t_start = as_int(v, k); };
    m["sampler.threshold"] = [](RunConfig &c, auto const &k, auto const &v) { c.sampler.threshold = parse_double(v, k); };
    m["sampler.background"] = [](RunConfig &c, auto const &, auto const &v) {
      c.sampler.background = parse_background(v);
      c.background_override = true;
    };
    m["sampler.variance"] = [](RunConfig &c, auto const &, auto const &v) { c.sampler.variance_mode = parse_variance_mode(v); };
    m["sampler.seed"] = [=](RunConfig &c, auto const &k, auto const &v) { c.sampler.seed = as_seed(v, k); };
    m["sampler.snapshot_stride"] = [=](RunConfig &c, auto const &k, auto const &v) { c.sampler.snapshot_stride = as_int(v, k); };
    m["data.manifest"] = [](RunConfig &c, auto const &, auto const &v) { c.manifest = v; };
    m["data.synthetic_pairs"] = [=](RunConfig &c, auto const &k, auto const &v) { c.synthetic_pairs = as_int(v, k); };
    m["data.synthetic_seed"] = [=](RunConfig &c, auto const &k, auto const &v) { c.synthetic_seed = as_seed(v, k); };
    m["output.dir"] = [](RunConfig &c, auto const &, auto const &v) { c.output_dir = v; };
    return m;
  }();
  return table;
}

} // namespace

void apply_setting(RunConfig &config, std::string const &key, std::string const &value)
{
  auto const &table = setters();
  auto it = table.find(key);
  if (it == table.end()) { throw ConfigError("unknown setting '" + key + "'"); }
  it->second(config, key, value);
}

void apply_config_file(RunConfig &config, std::filesystem::path const &path)
{
  std::ifstream in(path);
  if (!in) { throw ConfigError("cannot open config file '" + path.string() + "'"); }
  std::stringstream buffer;
  buffer << in.rdbuf();
  for (auto const &[k, v] : parse_key_values(buffer.str())) { apply_setting(config, k, v); }
}

std::vector<std::string> setting_names()
{
  std::vector<std::string> out;
  for (auto const &[k, _] : setters()) { out.push_back(k); }
  return out;
}

NoiseSchedule inference_schedule(RunConfig const &config)
{
  NoiseSchedule const full = make_schedule(config.schedule);
  if (config.inference_steps == full.num_steps()) { return full; }
  return rescale_schedule(full, config.inference_steps);
}

} // namespace t2v
