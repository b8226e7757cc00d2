#pragma once

#include <array>
#include <cstddef>

#include "sdpadv/autodiff.hpp"

SDPADV_NAMESPACE_BEGIN

/// Top two rows of the 3x3 affine matrix, stored (a, b, e, c, d, f):
///   [a b e]
///   [c d f]
/// Convention: theta maps OUTPUT coordinates to INPUT sampling coordinates
/// (pull-based warping), so a positive `e` samples further right and the
/// content appears shifted left.
struct AffineParams {
  std::array<Real, 6> values{1, 0, 0, 0, 1, 0};

  static constexpr AffineParams identity() { return {}; }
  Real deviation_norm() const;  // ||theta - theta_I||_2
};

/// [B,6] tensor of identity transforms.
Tensor identity_thetas(std::size_t batch);

/// Normalized sampling grid [B,H,W,2] (x then y): output pixel (i,j) at
/// normalized (mu,nu) = linspace(-1,1) samples source (a mu + b nu + e, c mu + d nu + f).
Var make_grid(Var theta, std::size_t height, std::size_t width);

/// Bilinear sampling of image[B,C,H,W] at normalized grid[B,Ho,Wo,2].
/// Coordinates map to pixels via p = (g+1)(size-1)/2; samples outside the
/// image read as zero. Differentiable in both image and grid.
Var bilinear_sample(Var image, Var grid);

/// Same grid expressed directly in source pixel coordinates. Algebraically
/// identical to make_grid followed by the normalized-to-pixel map, but the
/// identity transform lands exactly on integer pixel centres.
Var make_pixel_grid(Var theta, std::size_t height, std::size_t width);

/// Bilinear sampling at a grid already in pixel coordinates.
Var sample_pixels(Var image, Var pixel_grid);

/// x_T = t_theta(x): warp image[B,C,H,W] by theta[B,6].
Var transform(Var theta, Var image);

SDPADV_NAMESPACE_END
