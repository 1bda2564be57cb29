#include "smfn/resample.hpp"

#include <algorithm>
#include <cmath>

namespace smfn {

double cubic_kernel(double x, double a) {
  const double t = std::abs(x);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

std::vector<ResampleTaps> bicubic_taps(std::size_t src, std::size_t dst) {
  if (src == 0 || dst == 0) throw ValidationError("bicubic_resize: extents must be >= 1");
  const double scale = static_cast<double>(dst) / static_cast<double>(src);
  const double stretch = scale < 1.0 ? scale : 1.0;
  const double width = 4.0 / stretch;
  const auto span = static_cast<std::ptrdiff_t>(std::ceil(width)) + 2;
  const auto last = static_cast<std::ptrdiff_t>(src) - 1;

  std::vector<ResampleTaps> taps(dst);
  for (std::size_t o = 0; o < dst; ++o) {
    const double center = (static_cast<double>(o) + 0.5) / scale - 0.5;
    const auto left = static_cast<std::ptrdiff_t>(std::floor(center - width / 2.0));
    ResampleTaps& t = taps[o];
    double total = 0.0;
    for (std::ptrdiff_t k = 0; k < span; ++k) {
      const std::ptrdiff_t i = left + k;
      const double w = stretch * cubic_kernel(stretch * (center - static_cast<double>(i)));
      if (w == 0.0) continue;
      t.index.push_back(std::clamp<std::ptrdiff_t>(i, 0, last));
      t.weight.push_back(w);
      total += w;
    }
    for (double& w : t.weight) w /= total;
  }
  return taps;
}

Plane bicubic_resize(const Plane& image, std::size_t out_h, std::size_t out_w) {
  const auto H = static_cast<std::size_t>(image.rows());
  const auto W = static_cast<std::size_t>(image.cols());
  if (out_h == H && out_w == W) return image;
  const auto tx = bicubic_taps(W, out_w);
  const auto ty = bicubic_taps(H, out_h);

  Plane horizontal(H, out_w);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < tx[x].index.size(); ++k) acc += tx[x].weight[k] * image(y, tx[x].index[k]);
      horizontal(y, x) = acc;
    }
  Plane out(out_h, out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    out.row(y).setZero();
    for (std::size_t k = 0; k < ty[y].index.size(); ++k) out.row(y) += ty[y].weight[k] * horizontal.row(ty[y].index[k]);
  }
  return out;
}

Plane bilinear_resize(const Plane& image, std::size_t out_h, std::size_t out_w) {
  const auto H = static_cast<std::size_t>(image.rows());
  const auto W = static_cast<std::size_t>(image.cols());
  auto coord = [](std::size_t o, std::size_t src, std::size_t dst) {
    double s = (static_cast<double>(o) + 0.5) * static_cast<double>(src) / static_cast<double>(dst) - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(src - 1));
  };
  Plane out(out_h, out_w);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const double sy = coord(oy, H, out_h);
    const auto y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, H - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const double sx = coord(ox, W, out_w);
      const auto x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, W - 1);
      const double fx = sx - static_cast<double>(x0);
      out(oy, ox) = (1 - fy) * ((1 - fx) * image(y0, x0) + fx * image(y0, x1)) +
                    fy * ((1 - fx) * image(y1, x0) + fx * image(y1, x1));
    }
  }
  return out;
}

template <typename T>
Plane tensor_plane(const Tensor<T>& t, std::size_t batch, std::size_t channel) {
  if (t.rank() != 4) throw ValidationError("tensor_plane: expected a 4-d tensor");
  const std::size_t H = t.dim(2), W = t.dim(3);
  Plane p(H, W);
  const T* src = t.data().data() + (batch * t.dim(1) + channel) * H * W;
  for (std::size_t i = 0; i < H * W; ++i) p.data()[i] = static_cast<double>(src[i]);
  return p;
}

template <typename T>
Tensor<T> plane_tensor(const Plane& p) {
  Tensor<T> t(Shape{1, 1, static_cast<std::size_t>(p.rows()), static_cast<std::size_t>(p.cols())});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(p.data()[i]);
  return t;
}

template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& image, std::size_t out_h, std::size_t out_w) {
  if (image.rank() != 4) throw ValidationError("bicubic_resize: expected a 4-d tensor");
  const std::size_t B = image.dim(0), C = image.dim(1);
  Tensor<T> out(Shape{B, C, out_h, out_w});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const Plane r = bicubic_resize(tensor_plane(image, b, c), out_h, out_w);
      T* dst = out.data().data() + (b * C + c) * out_h * out_w;
      for (std::size_t i = 0; i < out_h * out_w; ++i) dst[i] = static_cast<T>(r.data()[i]);
    }
  return out;
}

#define SMFN_INSTANTIATE(T)                                                   \
  template Plane tensor_plane(const Tensor<T>&, std::size_t, std::size_t);    \
  template Tensor<T> plane_tensor(const Plane&);                              \
  template Tensor<T> bicubic_resize(const Tensor<T>&, std::size_t, std::size_t);

SMFN_INSTANTIATE(float)
SMFN_INSTANTIATE(double)

}  // namespace smfn
