#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

#include "smfn/tensor.hpp"

namespace smfn {

/// Single-channel image plane, row-major (row = latitude for ERP frames).
using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Keys cubic convolution kernel, a = -0.5.
double cubic_kernel(double x, double a = -0.5);

/// Source taps and normalised weights for one output sample of a 1-d
/// bicubic resize. When shrinking, the kernel is stretched by src/dst.
struct ResampleTaps {
  std::vector<std::ptrdiff_t> index;  // already clamped to [0, src)
  std::vector<double> weight;
};

std::vector<ResampleTaps> bicubic_taps(std::size_t src, std::size_t dst);

/// Separable antialiased bicubic resize with border replication. Data
/// preparation only; not differentiable.
Plane bicubic_resize(const Plane& image, std::size_t out_h, std::size_t out_w);

template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& image, std::size_t out_h, std::size_t out_w);

/// Half-pixel bilinear resize of a plane (same sampling as the
/// differentiable tensor op).
Plane bilinear_resize(const Plane& image, std::size_t out_h, std::size_t out_w);

/// (B, C, H, W) plane access helpers.
template <typename T>
Plane tensor_plane(const Tensor<T>& t, std::size_t batch = 0, std::size_t channel = 0);

template <typename T>
Tensor<T> plane_tensor(const Plane& p);

}  // namespace smfn
