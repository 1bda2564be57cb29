#include <algorithm>
#include <cmath>

#include "smfn/nn_ops.hpp"

namespace smfn {

namespace {

void require_rank4(const Shape& s, const char* op) {
  if (s.size() != 4) throw ValidationError(std::string(op) + ": expected a 4-d tensor, got " + shape_string(s));
}

// Gather-style permutation op: out[i] = in[index[i]].
template <typename T>
Var<T> permute_elements(const Var<T>& input, Shape out_shape, std::vector<std::size_t> index) {
  Tensor<T> out(std::move(out_shape));
  const auto& in = input.value();
  for (std::size_t i = 0; i < index.size(); ++i) out[i] = in[index[i]];
  const std::size_t id = input.id();
  return input.tape()->record(std::move(out), {id}, [id, index = std::move(index)](Tape<T>& t, std::span<const T> g) {
    auto d = t.grad_of(id);
    for (std::size_t i = 0; i < index.size(); ++i) d[index[i]] += g[i];
  });
}

struct LinearTap {
  std::size_t i0, i1;
  double frac;
};

std::vector<LinearTap> half_pixel_taps(std::size_t src, std::size_t dst) {
  std::vector<LinearTap> taps(dst);
  const double ratio = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t o = 0; o < dst; ++o) {
    double s = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(s));
    const std::size_t i1 = std::min(i0 + 1, src - 1);
    taps[o] = {i0, i1, s - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

template <typename T>
Var<T> pointwise_activation(const Var<T>& input, Activation kind) {
  Tensor<T> out(input.shape());
  const auto& in = input.value();
  if (kind == Activation::Relu) {
    for (std::size_t i = 0; i < in.numel(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
  } else {
    for (std::size_t i = 0; i < in.numel(); ++i) out[i] = T(1) / (T(1) + std::exp(-in[i]));
  }
  const std::size_t id = input.id();
  const std::size_t out_id = input.tape()->size();
  return input.tape()->record(std::move(out), {id}, [=](Tape<T>& t, std::span<const T> g) {
    auto d = t.grad_of(id);
    if (kind == Activation::Relu) {
      const auto& x = t.value(id);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] > T(0)) d[i] += g[i];
    } else {
      const auto& y = t.value(out_id);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * y[i] * (T(1) - y[i]);
    }
  });
}

template <typename T>
Var<T> pixel_shuffle(const Var<T>& input, std::size_t s) {
  const Shape& in = input.shape();
  require_rank4(in, "pixel_shuffle");
  if (s == 0 || in[1] % (s * s) != 0)
    throw ValidationError("pixel_shuffle: channel extent " + std::to_string(in[1]) + " is not divisible by " +
                          std::to_string(s * s));
  const std::size_t B = in[0], C = in[1] / (s * s), H = in[2], W = in[3];
  Shape out_shape{B, C, H * s, W * s};
  std::vector<std::size_t> index(shape_numel(out_shape));
  std::size_t o = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H * s; ++y)
        for (std::size_t x = 0; x < W * s; ++x) {
          const std::size_t ic = c * s * s + (y % s) * s + (x % s);
          index[o++] = ((b * in[1] + ic) * H + y / s) * W + x / s;
        }
  return permute_elements(input, std::move(out_shape), std::move(index));
}

template <typename T>
Var<T> pixel_unshuffle(const Var<T>& input, std::size_t s) {
  const Shape& in = input.shape();
  require_rank4(in, "pixel_unshuffle");
  if (s == 0 || in[2] % s != 0 || in[3] % s != 0)
    throw ValidationError("pixel_unshuffle: spatial extents must be divisible by " + std::to_string(s));
  const std::size_t B = in[0], C = in[1], H = in[2] / s, W = in[3] / s;
  Shape out_shape{B, C * s * s, H, W};
  std::vector<std::size_t> index(shape_numel(out_shape));
  std::size_t o = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t oc = 0; oc < C * s * s; ++oc)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const std::size_t c = oc / (s * s), i = (oc / s) % s, j = oc % s;
          index[o++] = ((b * C + c) * in[2] + y * s + i) * in[3] + x * s + j;
        }
  return permute_elements(input, std::move(out_shape), std::move(index));
}

template <typename T>
Var<T> bilinear_resize(const Var<T>& image, std::size_t out_h, std::size_t out_w) {
  const Shape& in = image.shape();
  require_rank4(in, "bilinear_resize");
  if (out_h == 0 || out_w == 0) throw ValidationError("bilinear_resize: target extents must be >= 1");
  const std::size_t planes = in[0] * in[1], H = in[2], W = in[3];
  const auto ty = half_pixel_taps(H, out_h);
  const auto tx = half_pixel_taps(W, out_w);

  Tensor<T> out(Shape{in[0], in[1], out_h, out_w});
  const auto& src = image.value();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* s = src.data().data() + p * H * W;
    T* d = out.data().data() + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[oy];
      const T fy = static_cast<T>(a.frac);
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[ox];
        const T fx = static_cast<T>(b.frac);
        const T top = (T(1) - fx) * s[a.i0 * W + b.i0] + fx * s[a.i0 * W + b.i1];
        const T bot = (T(1) - fx) * s[a.i1 * W + b.i0] + fx * s[a.i1 * W + b.i1];
        d[oy * out_w + ox] = (T(1) - fy) * top + fy * bot;
      }
    }
  }
  const std::size_t id = image.id();
  return image.tape()->record(std::move(out), {id}, [=](Tape<T>& t, std::span<const T> g) {
    auto dg = t.grad_of(id);
    for (std::size_t p = 0; p < planes; ++p) {
      T* d = dg.data() + p * H * W;
      const T* gp = g.data() + p * out_h * out_w;
      for (std::size_t oy = 0; oy < out_h; ++oy) {
        const auto& a = ty[oy];
        const T fy = static_cast<T>(a.frac);
        for (std::size_t ox = 0; ox < out_w; ++ox) {
          const auto& b = tx[ox];
          const T fx = static_cast<T>(b.frac);
          const T v = gp[oy * out_w + ox];
          d[a.i0 * W + b.i0] += v * (T(1) - fy) * (T(1) - fx);
          d[a.i0 * W + b.i1] += v * (T(1) - fy) * fx;
          d[a.i1 * W + b.i0] += v * fy * (T(1) - fx);
          d[a.i1 * W + b.i1] += v * fy * fx;
        }
      }
    }
  });
}

template <typename T>
Var<T> channel_max(const Var<T>& input) {
  const Shape& in = input.shape();
  require_rank4(in, "channel_max");
  const std::size_t B = in[0], C = in[1], HW = in[2] * in[3];
  Tensor<T> out(Shape{B, 1, in[2], in[3]});
  std::vector<std::size_t> argmax(B * HW);
  const auto& x = input.value();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t p = 0; p < HW; ++p) {
      std::size_t best = b * C * HW + p;
      for (std::size_t c = 1; c < C; ++c) {
        const std::size_t i = (b * C + c) * HW + p;
        if (x[i] > x[best]) best = i;
      }
      argmax[b * HW + p] = best;
      out[b * HW + p] = x[best];
    }
  const std::size_t id = input.id();
  return input.tape()->record(std::move(out), {id}, [id, argmax = std::move(argmax)](Tape<T>& t, std::span<const T> g) {
    auto d = t.grad_of(id);
    for (std::size_t i = 0; i < argmax.size(); ++i) d[argmax[i]] += g[i];
  });
}

template <typename T>
Var<T> channel_attention(const Var<T>& features, const ChannelAttentionParams<T>& p, std::size_t reduce_ratio) {
  require_rank4(features.shape(), "channel_attention");
  const std::size_t C = features.dim(1);
  if (reduce_ratio == 0 || C % reduce_ratio != 0)
    throw ValidationError("channel_attention: " + std::to_string(C) + " channels not divisible by reduction ratio " +
                          std::to_string(reduce_ratio));
  if (p.squeeze.out_channels() != C / reduce_ratio || p.squeeze.in_channels() != C || p.excite.out_channels() != C)
    throw ValidationError("channel_attention: branch weights do not match channel count");
  Var<T> pooled = reduce(features, ReduceKind::Mean, {2, 3});
  return sigmoid(conv2d(relu(conv2d(pooled, p.squeeze)), p.excite));
}

template <typename T>
Var<T> spatial_attention(const Var<T>& features, const SpatialAttentionParams<T>& p) {
  require_rank4(features.shape(), "spatial_attention");
  Var<T> pooled = concat<T>({channel_mean(features), channel_max(features)}, 1);
  return sigmoid(conv2d(pooled, p.conv));
}

template <typename T>
Var<T> mixed_attention(const Var<T>& features, const ChannelAttentionParams<T>& ca, const SpatialAttentionParams<T>& sa,
                       std::size_t reduce_ratio) {
  Var<T> map = add(channel_attention(features, ca, reduce_ratio), spatial_attention(features, sa));
  return mul(features, map);
}

template <typename T>
Var<T> residual_block(const Var<T>& features, const ResidualBlockParams<T>& p) {
  require_rank4(features.shape(), "residual_block");
  const std::size_t C = features.dim(1);
  if (p.first.in_channels() != C || p.second.out_channels() != C)
    throw ValidationError("residual_block: block width does not match " + std::to_string(C) + " input channels");
  return add(features, conv2d(relu(conv2d(features, p.first)), p.second));
}

template <typename T>
Var<T> residual_dense_block(const Var<T>& features, const DenseBlockParams<T>& p) {
  require_rank4(features.shape(), "residual_dense_block");
  const std::size_t C = features.dim(1);
  if (p.layers.empty() || p.layers.front().in_channels() != C || p.transition.out_channels() != C)
    throw ValidationError("residual_dense_block: block width does not match " + std::to_string(C) +
                          " input channels");
  std::vector<Var<T>> stack{features};
  for (const auto& layer : p.layers) stack.push_back(relu(conv2d(concat(stack, 1), layer)));
  return add(features, conv2d(concat(stack, 1), p.transition));
}

#define SMFN_INSTANTIATE(T)                                                                                        \
  template Var<T> pointwise_activation(const Var<T>&, Activation);                                                 \
  template Var<T> pixel_shuffle(const Var<T>&, std::size_t);                                                       \
  template Var<T> pixel_unshuffle(const Var<T>&, std::size_t);                                                     \
  template Var<T> bilinear_resize(const Var<T>&, std::size_t, std::size_t);                                        \
  template Var<T> channel_max(const Var<T>&);                                                                      \
  template Var<T> channel_attention(const Var<T>&, const ChannelAttentionParams<T>&, std::size_t);                 \
  template Var<T> spatial_attention(const Var<T>&, const SpatialAttentionParams<T>&);                              \
  template Var<T> mixed_attention(const Var<T>&, const ChannelAttentionParams<T>&, const SpatialAttentionParams<T>&, \
                                  std::size_t);                                                                    \
  template Var<T> residual_block(const Var<T>&, const ResidualBlockParams<T>&);                                    \
  template Var<T> residual_dense_block(const Var<T>&, const DenseBlockParams<T>&);

SMFN_INSTANTIATE(float)
SMFN_INSTANTIATE(double)

}  // namespace smfn
