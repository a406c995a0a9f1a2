#pragma once

#include "t2v/tensor.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace t2v {

using Rng = std::mt19937_64;

template <typename Scalar> void fill_normal(Eigen::Ref<typename Tensor<Scalar>::Array> out, Rng &rng)
{
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < out.size(); ++i) { out[i] = static_cast<Scalar>(normal(rng)); }
}

template <typename Scalar> Tensor<Scalar> randn(Shape shape, Rng &rng)
{
  Tensor<Scalar> t(shape);
  fill_normal<Scalar>(t.data(), rng);
  return t;
}

/// Standard normal tensor whose sample n is drawn from streams[n].
template <typename Scalar> Tensor<Scalar> randn(Shape shape, std::span<Rng> streams)
{
  if (static_cast<int>(streams.size()) != shape.n) { throw ShapeError("randn: need one stream per batch element"); }
  Tensor<Scalar> t(shape);
  for (int n = 0; n < shape.n; ++n) { fill_normal<Scalar>(t.sample_block(n), streams[static_cast<std::size_t>(n)]); }
  return t;
}

/// Stable 64-bit seed for (base seed, label), independent of std::hash.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label)
{
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char ch : label) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  // splitmix finalizer
  h += 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return h ^ (h >> 31);
}

} // namespace t2v
