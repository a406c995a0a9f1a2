#include "t2v/checkpoint.hpp"

#include "t2v/config.hpp"
#include "t2v/errors.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace t2v {

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes a little-endian host");

std::uint32_t crc32(std::string_view bytes)
{
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, reinterpret_cast<Bytef const *>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

namespace {

constexpr char kMagic[4] = {'T', '2', 'V', 'D'};

void put_u32(std::string &out, std::uint32_t v)
{
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

class Reader
{
public:
  explicit Reader(std::string_view bytes)
    : bytes_(bytes)
  {
  }

  std::uint32_t u32()
  {
    std::uint32_t v = 0;
    std::memcpy(&v, take(4).data(), 4);
    return v;
  }
  std::string_view take(std::size_t n)
  {
    if (bytes_.size() - pos_ < n) { throw DecodeError("checkpoint: truncated payload"); }
    std::string_view const out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == bytes_.size(); }

private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

KeyValues to_key_values(Checkpoint const &c)
{
  KeyValues kv;
  kv["background"] = format_background(c.background);
  kv["model.base_width"] = std::to_string(c.denoiser.base_width);
  kv["model.condition_channels"] = std::to_string(c.denoiser.condition_channels);
  kv["model.depth"] = std::to_string(c.denoiser.depth);
  kv["model.groups"] = std::to_string(c.denoiser.groups);
  kv["model.image_size"] = std::to_string(c.denoiser.image_size);
  kv["model.seed"] = std::to_string(c.denoiser.seed);
  kv["model.time_embed_dim"] = std::to_string(c.denoiser.time_embed_dim);
  kv["model.visible_channels"] = std::to_string(c.denoiser.visible_channels);
  kv["schedule.beta_end"] = format_double(c.schedule.beta_end);
  kv["schedule.beta_start"] = format_double(c.schedule.beta_start);
  kv["schedule.cosine_offset"] = format_double(c.schedule.cosine_offset);
  kv["schedule.family"] = c.schedule.family;
  kv["schedule.steps"] = std::to_string(c.schedule.num_steps);
  kv["train.seed"] = std::to_string(c.train_seed);
  kv["train.step"] = std::to_string(c.training_step);
  return kv;
}

std::string const &field(KeyValues const &kv, std::string const &key)
{
  auto it = kv.find(key);
  if (it == kv.end()) { throw DecodeError("checkpoint: config lacks '" + key + "'"); }
  return it->second;
}

int int_field(KeyValues const &kv, std::string const &key) { return static_cast<int>(parse_int(field(kv, key), key)); }

// Trailing unit axes are dropped; rank is at least 1.
std::vector<std::uint32_t> dims_of(Shape const &s)
{
  std::vector<std::uint32_t> d{std::uint32_t(s.n), std::uint32_t(s.c), std::uint32_t(s.h), std::uint32_t(s.w)};
  while (d.size() > 1 && d.back() == 1) { d.pop_back(); }
  return d;
}

} // namespace

std::string encode_checkpoint(Checkpoint const &ckpt)
{
  if (ckpt.params.names.size() != ckpt.params.tensors.size()) { throw Error("checkpoint: parameter names/tensors mismatch"); }
  std::string out(kMagic, 4);
  put_u32(out, ckpt.version);
  std::string const config = format_key_values(to_key_values(ckpt));
  put_u32(out, static_cast<std::uint32_t>(config.size()));
  out += config;
  put_u32(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    std::string const &name = ckpt.params.names[i];
    TensorF const &t = ckpt.params.tensors[i];
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    std::vector<std::uint32_t> const dims = dims_of(t.shape());
    put_u32(out, static_cast<std::uint32_t>(dims.size()));
    for (std::uint32_t d : dims) { put_u32(out, d); }
    out.append(reinterpret_cast<char const *>(t.ptr()), static_cast<std::size_t>(t.size()) * sizeof(float));
  }
  put_u32(out, crc32(out));
  return out;
}

Checkpoint decode_checkpoint(std::string const &bytes)
{
  if (bytes.size() < 16) { throw DecodeError("checkpoint: file too short"); }
  std::string_view const body(bytes.data(), bytes.size() - 4);
  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + body.size(), 4);
  if (crc32(body) != stored) { throw DecodeError("checkpoint: CRC mismatch"); }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) { throw DecodeError("checkpoint: bad magic bytes"); }
  Reader header(body.substr(4, 4));
  std::uint32_t const version = header.u32();
  if (version != kCheckpointVersion) {
    throw DecodeError("checkpoint: unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }

  Reader r(body.substr(8));
  Checkpoint ckpt;
  ckpt.version = version;
  KeyValues const kv = parse_key_values(std::string(r.take(r.u32())));
  ckpt.denoiser.image_size = int_field(kv, "model.image_size");
  ckpt.denoiser.visible_channels = int_field(kv, "model.visible_channels");
  ckpt.denoiser.condition_channels = int_field(kv, "model.condition_channels");
  ckpt.denoiser.base_width = int_field(kv, "model.base_width");
  ckpt.denoiser.depth = int_field(kv, "model.depth");
  ckpt.denoiser.time_embed_dim = int_field(kv, "model.time_embed_dim");
  ckpt.denoiser.groups = int_field(kv, "model.groups");
  ckpt.denoiser.seed = static_cast<std::uint64_t>(parse_int(field(kv, "model.seed"), "model.seed"));
  ckpt.schedule.family = field(kv, "schedule.family");
  ckpt.schedule.num_steps = int_field(kv, "schedule.steps");
  ckpt.schedule.beta_start = parse_double(field(kv, "schedule.beta_start"), "schedule.beta_start");
  ckpt.schedule.beta_end = parse_double(field(kv, "schedule.beta_end"), "schedule.beta_end");
  ckpt.schedule.cosine_offset = parse_double(field(kv, "schedule.cosine_offset"), "schedule.cosine_offset");
  ckpt.training_step = static_cast<long>(parse_int(field(kv, "train.step"), "train.step"));
  ckpt.train_seed = static_cast<std::uint64_t>(parse_int(field(kv, "train.seed"), "train.seed"));
  ckpt.background = parse_background(field(kv, "background"));

  std::vector<ParamSpec> const layout = parameter_layout(ckpt.denoiser);
  std::uint32_t const count = r.u32();
  if (count != layout.size()) { throw DecodeError("checkpoint: parameter count does not match the architecture"); }
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(r.take(r.u32()));
    std::uint32_t const rank = r.u32();
    if (rank < 1 || rank > 4) { throw DecodeError("checkpoint: invalid rank for '" + name + "'"); }
    std::uint32_t dims[4] = {1, 1, 1, 1};
    for (std::uint32_t d = 0; d < rank; ++d) { dims[d] = r.u32(); }
    Shape const shape{int(dims[0]), int(dims[1]), int(dims[2]), int(dims[3])};
    if (name != layout[i].name || !(shape == layout[i].shape)) {
      throw DecodeError("checkpoint: parameter '" + name + "' does not match the architecture");
    }
    TensorF t(shape);
    std::string_view const raw = r.take(static_cast<std::size_t>(t.size()) * sizeof(float));
    std::memcpy(t.ptr(), raw.data(), raw.size());
    ckpt.params.names.push_back(std::move(name));
    ckpt.params.tensors.push_back(std::move(t));
  }
  if (!r.done()) { throw DecodeError("checkpoint: trailing bytes before CRC"); }
  return ckpt;
}

void checkpoint_save(Checkpoint const &ckpt, std::filesystem::path const &path)
{
  std::string const bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) { throw IoError("cannot write checkpoint '" + path.string() + "'"); }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) { throw IoError("write failed for '" + path.string() + "'"); }
}

Checkpoint checkpoint_load(std::filesystem::path const &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) { throw IoError("cannot open checkpoint '" + path.string() + "'"); }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_checkpoint(buffer.str());
}

} // namespace t2v
