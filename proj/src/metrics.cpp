#include "t2v/metrics.hpp"

#include <cmath>

namespace t2v {

Eigen::ArrayXXd luma(TensorF const &image)
{
  Shape const s = image.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3)) { throw ShapeError("luma: expected one 1- or 3-channel image, got " + s.str()); }
  Eigen::ArrayXXd out(s.h, s.w);
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      out(y, x) = s.c == 1 ? double(image(0, 0, y, x))
                           : 0.299 * image(0, 0, y, x) + 0.587 * image(0, 1, y, x) + 0.114 * image(0, 2, y, x);
    }
  }
  return out;
}

double psnr_gray(TensorF const &a, TensorF const &b)
{
  require_same_shape(a, b, "psnr_gray");
  double const mse = (luma(a) - luma(b)).square().mean();
  if (mse < 1e-10) { return kPsnrCap; }
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(TensorF const &a, TensorF const &b)
{
  require_same_shape(a, b, "ssim");
  constexpr int window = 8;
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  Shape const s = a.shape();
  if (s.h < window || s.w < window) { throw RangeError("ssim: images must be at least 8x8"); }
  Eigen::ArrayXXd const la = luma(a);
  Eigen::ArrayXXd const lb = luma(b);
  double total = 0.0;
  int count = 0;
  for (int y = 0; y + window <= s.h; ++y) {
    for (int x = 0; x + window <= s.w; ++x) {
      auto const wa = la.block(y, x, window, window);
      auto const wb = lb.block(y, x, window, window);
      double const mu_a = wa.mean();
      double const mu_b = wb.mean();
      double const var_a = (wa - mu_a).square().mean();
      double const var_b = (wb - mu_b).square().mean();
      double const cov = ((wa - mu_a) * (wb - mu_b)).mean();
      total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      ++count;
    }
  }
  return total / count;
}

} // namespace t2v
