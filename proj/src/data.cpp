#include "t2v/data.hpp"

#include "t2v/errors.hpp"
#include "t2v/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace t2v {

namespace {

struct Tint
{
  float r, g, b;
};

// Cool blue for the faintest shapes, warm orange for the brightest; scaled to unit luma.
Tint tint_for(float intensity)
{
  float const w = std::clamp((intensity - 0.4f) / 0.4f, 0.0f, 1.0f);
  float const r = 0.60f + 0.40f * w;
  float const g = 0.80f - 0.05f * w;
  float const b = 1.00f - 0.45f * w;
  float const luma = 0.299f * r + 0.587f * g + 0.114f * b;
  return {r / luma, g / luma, b / luma};
}

} // namespace

SyntheticScene generate_synthetic_scene(std::uint64_t seed, int size)
{
  if (size < 8) { throw RangeError("synthetic pair: size must be >= 8"); }
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> shape_count(1, 3);

  Shape const gray{1, 1, size, size};
  TensorF condition = TensorF::constant(gray, synthetic::kConditionBackground);
  TensorF foreground(gray);
  TensorF target(Shape{1, 3, size, size});
  for (int c = 0; c < 3; ++c) {
    target.data().segment(Eigen::Index(c) * size * size, Eigen::Index(size) * size).setConstant(synthetic::kBackground[c]);
  }

  int const shapes = shape_count(rng);
  for (int k = 0; k < shapes; ++k) {
    bool const ellipse = unit(rng) < 0.5;
    double const cx = (0.2 + 0.6 * unit(rng)) * size;
    double const cy = (0.2 + 0.6 * unit(rng)) * size;
    double const rx = (0.12 + 0.18 * unit(rng)) * size;
    double const ry = (0.12 + 0.18 * unit(rng)) * size;
    float const peak = static_cast<float>(0.4 + 0.4 * unit(rng));
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double const dx = (x + 0.5 - cx) / rx;
        double const dy = (y + 0.5 - cy) / ry;
        double const r2 = ellipse ? dx * dx + dy * dy : std::max(dx * dx, dy * dy);
        if (r2 > 1.0) { continue; }
        // thermal-like falloff from the centre, never below 0.65 * peak
        float const value = peak * static_cast<float>(1.0 - 0.35 * r2);
        Tint const tint = tint_for(value);
        condition(0, 0, y, x) = value;
        foreground(0, 0, y, x) = 1.0f;
        target(0, 0, y, x) = std::min(1.0f, value * tint.r);
        target(0, 1, y, x) = std::min(1.0f, value * tint.g);
        target(0, 2, y, x) = std::min(1.0f, value * tint.b);
      }
    }
  }
  SyntheticScene scene;
  scene.pair = PairedSample{std::move(condition), std::move(target), "syn-" + std::to_string(seed)};
  scene.foreground = std::move(foreground);
  return scene;
}

PairedSample generate_synthetic_pair(std::uint64_t seed, int size) { return generate_synthetic_scene(seed, size).pair; }

std::vector<SyntheticScene> generate_synthetic_dataset(int count, std::uint64_t seed, int size, std::string const &prefix)
{
  std::vector<SyntheticScene> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    std::string const id = prefix + std::to_string(i);
    SyntheticScene scene = generate_synthetic_scene(derive_seed(seed, id), size);
    scene.pair.id = id;
    out.push_back(std::move(scene));
  }
  return out;
}

bool is_held_out(std::string const &id, double held_out_fraction)
{
  return static_cast<double>(derive_seed(0, id) % 1000000) < held_out_fraction * 1e6;
}

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string next_token(std::string const &bytes, std::size_t &pos)
{
  while (pos < bytes.size()) {
    char const ch = bytes[pos];
    if (ch == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') { ++pos; }
    } else if (std::isspace(static_cast<unsigned char>(ch))) {
      ++pos;
    } else {
      break;
    }
  }
  std::size_t const start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos])) && bytes[pos] != '#') { ++pos; }
  if (start == pos) { throw DecodeError("pnm: truncated header"); }
  return bytes.substr(start, pos - start);
}

int header_int(std::string const &bytes, std::size_t &pos, char const *what)
{
  std::string const tok = next_token(bytes, pos);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) ||
      tok.size() > 9) {
    throw DecodeError(std::string("pnm: invalid ") + what + " '" + tok + "'");
  }
  return std::stoi(tok);
}

} // namespace

TensorF decode_pnm(std::string const &bytes)
{
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw DecodeError("pnm: unsupported magic number (expected P5 or P6)");
  }
  int const channels = bytes[1] == '5' ? 1 : 3;
  std::size_t pos = 2;
  int const width = header_int(bytes, pos, "width");
  int const height = header_int(bytes, pos, "height");
  int const maxval = header_int(bytes, pos, "maxval");
  if (width < 1 || height < 1) { throw DecodeError("pnm: empty image"); }
  if (maxval < 1 || maxval > 65535) { throw DecodeError("pnm: maxval out of range"); }
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw DecodeError("pnm: missing whitespace after header");
  }
  ++pos;
  int const bytes_per_sample = maxval > 255 ? 2 : 1;
  std::size_t const needed = std::size_t(width) * height * channels * bytes_per_sample;
  if (bytes.size() - pos < needed) { throw DecodeError("pnm: truncated pixel data"); }

  TensorF out(Shape{1, channels, height, width});
  auto const *raster = reinterpret_cast<unsigned char const *>(bytes.data() + pos);
  float const scale = 1.0f / static_cast<float>(maxval);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        std::size_t const i = (std::size_t(y) * width + x) * channels + c;
        int const v = bytes_per_sample == 1 ? raster[i] : (raster[2 * i] << 8) | raster[2 * i + 1];
        if (v > maxval) { throw DecodeError("pnm: sample exceeds maxval"); }
        out(0, c, y, x) = static_cast<float>(v) * scale;
      }
    }
  }
  return out;
}

TensorF load_image(std::filesystem::path const &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) { throw IoError("cannot open image '" + path.string() + "'"); }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return decode_pnm(buffer.str());
  } catch (DecodeError const &e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
}

std::string encode_pnm(TensorF const &image)
{
  Shape const s = image.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3)) { throw ShapeError("pnm: need a single 1- or 3-channel image, got " + s.str()); }
  std::string out = (s.c == 1 ? "P5\n" : "P6\n") + std::to_string(s.w) + " " + std::to_string(s.h) + "\n255\n";
  std::size_t const header = out.size();
  out.resize(header + std::size_t(s.c) * s.h * s.w);
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      for (int c = 0; c < s.c; ++c) {
        float const v = std::clamp(image(0, c, y, x), 0.0f, 1.0f);
        out[header + (std::size_t(y) * s.w + x) * s.c + c] = static_cast<char>(static_cast<unsigned char>(std::floor(v * 255.0f + 0.5f)));
      }
    }
  }
  return out;
}

void save_image(TensorF const &image, std::filesystem::path const &path)
{
  std::string const bytes = encode_pnm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) { throw IoError("cannot write image '" + path.string() + "'"); }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) { throw IoError("write failed for '" + path.string() + "'"); }
}

DatasetManifest load_manifest(std::filesystem::path const &path)
{
  std::ifstream in(path);
  if (!in) { throw IoError("cannot open manifest '" + path.string() + "'"); }
  DatasetManifest manifest;
  manifest.root = path.parent_path();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) { line.erase(hash); }
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) { line.pop_back(); }
    if (line.find_first_not_of(" \t") == std::string::npos) { continue; }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) { fields.push_back(field); }
    if (fields.size() != 3 || fields[0].empty()) {
      throw DecodeError(path.string() + ":" + std::to_string(line_no) + ": expected id<TAB>condition<TAB>target");
    }
    auto resolve = [&](std::string const &p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp : manifest.root / fp;
    };
    manifest.entries.push_back({fields[0], resolve(fields[1]), resolve(fields[2])});
  }
  return manifest;
}

void save_manifest(DatasetManifest const &manifest, std::filesystem::path const &path)
{
  std::ofstream out(path, std::ios::trunc);
  if (!out) { throw IoError("cannot write manifest '" + path.string() + "'"); }
  out << "# id\tcondition\ttarget\n";
  for (auto const &e : manifest.entries) {
    out << e.id << '\t' << e.condition.lexically_relative(manifest.root).string() << '\t'
        << e.target.lexically_relative(manifest.root).string() << '\n';
  }
}

std::vector<PairedSample> load_pairs(DatasetManifest const &manifest)
{
  std::vector<PairedSample> pairs;
  for (auto const &e : manifest.entries) {
    PairedSample p{load_image(e.condition), load_image(e.target), e.id};
    Shape const sc = p.condition.shape();
    Shape const st = p.target.shape();
    if (sc.c != 1 || st.c != 3) { throw DecodeError(e.id + ": condition must be PGM and target PPM"); }
    if (sc.h != st.h || sc.w != st.w || sc.h != sc.w) { throw DecodeError(e.id + ": images must be square and aligned"); }
    if (manifest.image_size != 0 && sc.h != manifest.image_size) { throw DecodeError(e.id + ": unexpected image size"); }
    if (!pairs.empty() && sc.h != pairs.front().condition.shape().h) { throw DecodeError(e.id + ": image sizes differ"); }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

DatasetManifest write_dataset(std::vector<PairedSample> const &pairs, std::filesystem::path const &dir)
{
  std::filesystem::create_directories(dir);
  DatasetManifest manifest;
  manifest.root = dir;
  for (auto const &p : pairs) {
    ManifestEntry e{p.id, dir / (p.id + "_thermal.pgm"), dir / (p.id + "_visible.ppm")};
    save_image(p.condition, e.condition);
    save_image(p.target, e.target);
    manifest.entries.push_back(std::move(e));
  }
  if (!pairs.empty()) { manifest.image_size = pairs.front().condition.shape().h; }
  save_manifest(manifest, dir / "manifest.tsv");
  return manifest;
}

} // namespace t2v
