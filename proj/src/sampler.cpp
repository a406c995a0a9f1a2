#include "t2v/sampler.hpp"

namespace t2v {

BackgroundColor estimate_background(TensorF const &image)
{
  Shape const s = image.shape();
  if (s.h < 3 || s.w < 3) { throw RangeError("estimate_background: image smaller than 3x3"); }
  BackgroundColor out;
  std::vector<float> ring;
  for (int c = 0; c < s.c; ++c) {
    ring.clear();
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) {
        if (y == 0 || x == 0 || y == s.h - 1 || x == s.w - 1) { ring.push_back(image(0, c, y, x)); }
      }
    }
    std::sort(ring.begin(), ring.end());
    std::size_t const mid = ring.size() / 2;
    float const median = ring.size() % 2 ? ring[mid] : 0.5f * (ring[mid - 1] + ring[mid]);
    out.channels.push_back(std::clamp(median, 0.0f, 1.0f));
  }
  return out;
}

} // namespace t2v
