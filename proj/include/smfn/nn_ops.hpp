#pragma once

#include <cstddef>
#include <vector>

#include "smfn/autodiff.hpp"

namespace smfn {

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Owning convolution parameters: kernel (out, in, kH, kW) and bias (out).
template <typename T>
struct ConvWeights {
  Tensor<T> kernel;
  Tensor<T> bias;
  ConvGeometry geometry;

  ConvWeights(std::size_t out_channels, std::size_t in_channels, std::size_t kernel_size, ConvGeometry geo = {});
  ConvWeights(Tensor<T> kernel_, Tensor<T> bias_, ConvGeometry geo = {});

  std::size_t out_channels() const { return kernel.dim(0); }
  std::size_t in_channels() const { return kernel.dim(1); }
};

/// Convolution parameters bound to a tape.
template <typename T>
struct BoundConv {
  Var<T> kernel;
  Var<T> bias;
  ConvGeometry geometry;

  std::size_t out_channels() const { return kernel.dim(0); }
  std::size_t in_channels() const { return kernel.dim(1); }
};

template <typename T>
BoundConv<T> bind(Tape<T>& tape, ConvWeights<T>& w) {
  return {tape.leaf(w.kernel), tape.leaf(w.bias), w.geometry};
}

/// Output extent (extent + 2 pad - k) / stride + 1 using floor division;
/// throws when the window does not fit at all.
std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, ConvGeometry geo);

/// Regular-grid convolution with zero padding.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias, ConvGeometry geo);

template <typename T>
Var<T> conv2d(const Var<T>& input, const BoundConv<T>& conv) {
  return conv2d(input, conv.kernel, conv.bias, conv.geometry);
}

/// 4-neighbour bilinear read of feature[batch, channel] at fractional (y, x).
/// Each out-of-bounds corner contributes zero.
template <typename T>
T bilinear_sample(const Tensor<T>& feature, T y, T x, std::size_t channel, std::size_t batch);

/// Deformable convolution. `offsets` is (B, 2 kH kW, Hout, Wout) holding a
/// (dy, dx) pair per kernel tap in row-major tap order.
template <typename T>
Var<T> deformable_conv2d(const Var<T>& input, const Var<T>& offsets, const Var<T>& kernel, const Var<T>& bias,
                         ConvGeometry geo);

template <typename T>
Var<T> deformable_conv2d(const Var<T>& input, const Var<T>& offsets, const BoundConv<T>& conv) {
  return deformable_conv2d(input, offsets, conv.kernel, conv.bias, conv.geometry);
}

enum class Activation { Relu, Sigmoid };

template <typename T>
Var<T> pointwise_activation(const Var<T>& input, Activation kind);

template <typename T>
Var<T> relu(const Var<T>& x) { return pointwise_activation(x, Activation::Relu); }
template <typename T>
Var<T> sigmoid(const Var<T>& x) { return pointwise_activation(x, Activation::Sigmoid); }

/// (B, s^2 C, H, W) -> (B, C, sH, sW),
/// out[b, c, h s + i, w s + j] = in[b, c s^2 + i s + j, h, w].
template <typename T>
Var<T> pixel_shuffle(const Var<T>& input, std::size_t s);

/// Inverse of pixel_shuffle.
template <typename T>
Var<T> pixel_unshuffle(const Var<T>& input, std::size_t s);

/// Half-pixel-centre bilinear resize with border clamping. Differentiable in
/// the image.
template <typename T>
Var<T> bilinear_resize(const Var<T>& image, std::size_t out_h, std::size_t out_w);

/// Per-pixel max over channels, (B, C, H, W) -> (B, 1, H, W).
template <typename T>
Var<T> channel_max(const Var<T>& input);

template <typename T>
Var<T> channel_mean(const Var<T>& input) {
  return reduce(input, ReduceKind::Mean, {1});
}

// ---------------------------------------------------------------------------
// Composite blocks

template <typename T>
struct ChannelAttentionParams {
  BoundConv<T> squeeze;  // 1x1, C -> C / ratio
  BoundConv<T> excite;   // 1x1, C / ratio -> C
};

template <typename T>
struct SpatialAttentionParams {
  BoundConv<T> conv;  // 7x7, 2 -> 1, pad 3
};

template <typename T>
struct ResidualBlockParams {
  BoundConv<T> first;
  BoundConv<T> second;
};

template <typename T>
struct DenseBlockParams {
  std::vector<BoundConv<T>> layers;  // 3x3, each emits `growth` channels
  BoundConv<T> transition;           // 1x1 back to the block width
};

/// Global average pool -> 1x1 squeeze -> ReLU -> 1x1 excite -> sigmoid.
/// Returns a (B, C, 1, 1) map.
template <typename T>
Var<T> channel_attention(const Var<T>& features, const ChannelAttentionParams<T>& p, std::size_t reduce_ratio);

/// Channel mean and max planes -> 7x7 conv -> sigmoid. Returns (B, 1, H, W).
template <typename T>
Var<T> spatial_attention(const Var<T>& features, const SpatialAttentionParams<T>& p);

/// features * (channel map + spatial map).
template <typename T>
Var<T> mixed_attention(const Var<T>& features, const ChannelAttentionParams<T>& ca, const SpatialAttentionParams<T>& sa,
                       std::size_t reduce_ratio);

/// x + conv(relu(conv(x))).
template <typename T>
Var<T> residual_block(const Var<T>& features, const ResidualBlockParams<T>& p);

/// Densely connected 3x3 layers (ReLU each), 1x1 transition, residual add.
template <typename T>
Var<T> residual_dense_block(const Var<T>& features, const DenseBlockParams<T>& p);

}  // namespace smfn
