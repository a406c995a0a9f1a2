#pragma once

#include "t2v/tensor.hpp"

namespace t2v {

struct QualityScores
{
  double psnr_db = 0.0;
  double ssim = 0.0;
};

inline constexpr double kPsnrCap = 99.0;

/// Luma plane (0.299 R + 0.587 G + 0.114 B) of a [1, 3, H, W] image; single-channel
/// images pass through.
Eigen::ArrayXXd luma(TensorF const &image);

/// PSNR of the luma planes with peak 1; returns kPsnrCap when MSE < 1e-10.
double psnr_gray(TensorF const &a, TensorF const &b);

/// Single-scale SSIM of the luma planes over every 8x8 uniform window.
double ssim(TensorF const &a, TensorF const &b);

inline QualityScores quality(TensorF const &a, TensorF const &b) { return {psnr_gray(a, b), ssim(a, b)}; }

} // namespace t2v
