#pragma once

#include "t2v/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace t2v {

/// One aligned (condition, target) pair in IO range [0, 1].
struct PairedSample
{
  TensorF condition;  ///< [1, 1, H, W] thermal intensity
  TensorF target;     ///< [1, 3, H, W] visible image
  std::string id;
};

/// Generator output: the pair plus the ground truth used to build it.
struct SyntheticScene
{
  PairedSample pair;
  TensorF foreground;  ///< [1, 1, H, W] binary shape coverage
};

namespace synthetic {
/// Target background colour shared by every generated scene.
inline constexpr float kBackground[3] = {0.06f, 0.05f, 0.08f};
/// Condition intensity off the shapes.
inline constexpr float kConditionBackground = 0.02f;
/// Lowest condition intensity on a shape.
inline constexpr float kMinForeground = 0.25f;
} // namespace synthetic

/// Dark background with one to three bright ellipses or rectangles. The condition
/// carries a radially shaded intensity per shape; the target is that intensity
/// rendered with a temperature-dependent tint whose luma equals the condition.
SyntheticScene generate_synthetic_scene(std::uint64_t seed, int size);
PairedSample generate_synthetic_pair(std::uint64_t seed, int size);

/// `count` scenes with ids "<prefix><index>", each seeded from (seed, id).
std::vector<SyntheticScene> generate_synthetic_dataset(int count, std::uint64_t seed, int size, std::string const &prefix = "syn");

/// Deterministic id-hash split; true when `id` belongs to the held-out fraction.
bool is_held_out(std::string const &id, double held_out_fraction);

/// Reads binary PGM (P5, one channel) or PPM (P6, three channels) as [1, C, H, W] in [0, 1].
TensorF load_image(std::filesystem::path const &path);
TensorF decode_pnm(std::string const &bytes);

/// Writes P5 for one channel and P6 for three, rounding x * 255 half-up after clamping.
void save_image(TensorF const &image, std::filesystem::path const &path);
std::string encode_pnm(TensorF const &image);

template <typename Scalar> Tensor<Scalar> to_model_range(Tensor<Scalar> const &img)
{
  return Tensor<Scalar>(img.shape(), img.data() * Scalar(2) - Scalar(1));
}

template <typename Scalar> Tensor<Scalar> to_io_range(Tensor<Scalar> const &img)
{
  return Tensor<Scalar>(img.shape(), ((img.data() + Scalar(1)) / Scalar(2)).min(Scalar(1)).max(Scalar(0)));
}

struct ManifestEntry
{
  std::string id;
  std::filesystem::path condition;
  std::filesystem::path target;
};

struct DatasetManifest
{
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;
  int image_size = 0;
};

/// Parses `id<TAB>condition<TAB>target` lines; `#` starts a comment. Relative
/// paths resolve against the manifest's directory.
DatasetManifest load_manifest(std::filesystem::path const &path);
void save_manifest(DatasetManifest const &manifest, std::filesystem::path const &path);

/// Decodes every entry in manifest order, checking alignment and size.
std::vector<PairedSample> load_pairs(DatasetManifest const &manifest);

/// Writes the scenes as PGM/PPM files plus a manifest under `dir`.
DatasetManifest write_dataset(std::vector<PairedSample> const &pairs, std::filesystem::path const &dir);

} // namespace t2v
