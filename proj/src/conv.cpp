#include <Eigen/Core>
#include <cmath>

#include "smfn/nn_ops.hpp"

namespace smfn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct ConvDims {
  std::size_t batch, in_c, in_h, in_w;
  std::size_t out_c, kh, kw, out_h, out_w;
  std::size_t taps() const { return kh * kw; }
  std::size_t rows() const { return in_c * kh * kw; }
  std::size_t pixels() const { return out_h * out_w; }
};

template <typename T>
ConvDims conv_dims(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias, ConvGeometry geo,
                   const char* op) {
  const Shape& x = input.shape();
  const Shape& k = kernel.shape();
  if (x.size() != 4) throw ValidationError(std::string(op) + ": input must be 4-d, got " + shape_string(x));
  if (k.size() != 4) throw ValidationError(std::string(op) + ": kernel must be 4-d, got " + shape_string(k));
  if (k[1] != x[1])
    throw ValidationError(std::string(op) + ": input has " + std::to_string(x[1]) + " channels, kernel expects " +
                          std::to_string(k[1]));
  if (bias.value().numel() != k[0])
    throw ValidationError(std::string(op) + ": bias length must equal out_channels");
  if (geo.stride == 0) throw ValidationError(std::string(op) + ": stride must be positive");
  ConvDims d{x[0], x[1], x[2], x[3], k[0], k[2], k[3], 0, 0};
  d.out_h = conv_output_extent(d.in_h, d.kh, geo);
  d.out_w = conv_output_extent(d.in_w, d.kw, geo);
  return d;
}

// cols (in_c * kh * kw, out_h * out_w) for batch b.
template <typename T>
void im2col(const T* x, const ConvDims& d, ConvGeometry geo, T* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(geo.padding);
  const auto stride = static_cast<std::ptrdiff_t>(geo.stride);
  for (std::size_t c = 0; c < d.in_c; ++c) {
    const T* plane = x + c * d.in_h * d.in_w;
    for (std::size_t i = 0; i < d.kh; ++i) {
      for (std::size_t j = 0; j < d.kw; ++j) {
        T* row = cols + ((c * d.kh + i) * d.kw + j) * d.pixels();
        for (std::size_t oh = 0; oh < d.out_h; ++oh) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oh) * stride - pad + static_cast<std::ptrdiff_t>(i);
          T* dst = row + oh * d.out_w;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(d.in_h)) {
            std::fill_n(dst, d.out_w, T(0));
            continue;
          }
          const T* src = plane + y * d.in_w;
          for (std::size_t ow = 0; ow < d.out_w; ++ow) {
            const std::ptrdiff_t xx =
                static_cast<std::ptrdiff_t>(ow) * stride - pad + static_cast<std::ptrdiff_t>(j);
            dst[ow] = (xx < 0 || xx >= static_cast<std::ptrdiff_t>(d.in_w)) ? T(0) : src[xx];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvDims& d, ConvGeometry geo, T* dx) {
  const auto pad = static_cast<std::ptrdiff_t>(geo.padding);
  const auto stride = static_cast<std::ptrdiff_t>(geo.stride);
  for (std::size_t c = 0; c < d.in_c; ++c) {
    T* plane = dx + c * d.in_h * d.in_w;
    for (std::size_t i = 0; i < d.kh; ++i) {
      for (std::size_t j = 0; j < d.kw; ++j) {
        const T* row = cols + ((c * d.kh + i) * d.kw + j) * d.pixels();
        for (std::size_t oh = 0; oh < d.out_h; ++oh) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oh) * stride - pad + static_cast<std::ptrdiff_t>(i);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(d.in_h)) continue;
          const T* src = row + oh * d.out_w;
          T* dst = plane + y * d.in_w;
          for (std::size_t ow = 0; ow < d.out_w; ++ow) {
            const std::ptrdiff_t xx =
                static_cast<std::ptrdiff_t>(ow) * stride - pad + static_cast<std::ptrdiff_t>(j);
            if (xx >= 0 && xx < static_cast<std::ptrdiff_t>(d.in_w)) dst[xx] += src[ow];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvDims& d, ConvGeometry geo) {
  return d.kh == 1 && d.kw == 1 && geo.stride == 1 && geo.padding == 0;
}

// Bilinear corner layout shared by every channel at one (tap, pixel).
template <typename T>
struct Corners {
  std::ptrdiff_t y0, x0;
  T ly, lx;
};

template <typename T>
Corners<T> corners_of(T y, T x) {
  const T fy = std::floor(y), fx = std::floor(x);
  return {static_cast<std::ptrdiff_t>(fy), static_cast<std::ptrdiff_t>(fx), y - fy, x - fx};
}

template <typename T>
T read_or_zero(const T* plane, std::size_t h, std::size_t w, std::ptrdiff_t y, std::ptrdiff_t x) {
  if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(h) || x >= static_cast<std::ptrdiff_t>(w)) return T(0);
  return plane[y * static_cast<std::ptrdiff_t>(w) + x];
}

template <typename T>
T sample_plane(const T* plane, std::size_t h, std::size_t w, const Corners<T>& c) {
  const T v00 = read_or_zero(plane, h, w, c.y0, c.x0);
  const T v01 = read_or_zero(plane, h, w, c.y0, c.x0 + 1);
  const T v10 = read_or_zero(plane, h, w, c.y0 + 1, c.x0);
  const T v11 = read_or_zero(plane, h, w, c.y0 + 1, c.x0 + 1);
  return (T(1) - c.ly) * ((T(1) - c.lx) * v00 + c.lx * v01) + c.ly * ((T(1) - c.lx) * v10 + c.lx * v11);
}

template <typename T>
void add_if_inside(T* plane, std::size_t h, std::size_t w, std::ptrdiff_t y, std::ptrdiff_t x, T v) {
  if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(h) || x >= static_cast<std::ptrdiff_t>(w)) return;
  plane[y * static_cast<std::ptrdiff_t>(w) + x] += v;
}

template <typename T>
std::vector<Corners<T>> deform_corners(const T* off, const ConvDims& d, ConvGeometry geo) {
  std::vector<Corners<T>> out(d.taps() * d.pixels());
  const std::size_t P = d.pixels();
  for (std::size_t i = 0; i < d.kh; ++i) {
    for (std::size_t j = 0; j < d.kw; ++j) {
      const std::size_t k = i * d.kw + j;
      const T* dy = off + (2 * k) * P;
      const T* dx = off + (2 * k + 1) * P;
      for (std::size_t oh = 0; oh < d.out_h; ++oh) {
        for (std::size_t ow = 0; ow < d.out_w; ++ow) {
          const std::size_t p = oh * d.out_w + ow;
          const T y = static_cast<T>(static_cast<std::ptrdiff_t>(oh * geo.stride + i) -
                                     static_cast<std::ptrdiff_t>(geo.padding)) + dy[p];
          const T x = static_cast<T>(static_cast<std::ptrdiff_t>(ow * geo.stride + j) -
                                     static_cast<std::ptrdiff_t>(geo.padding)) + dx[p];
          out[k * P + p] = corners_of(y, x);
        }
      }
    }
  }
  return out;
}

}  // namespace

std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, ConvGeometry geo) {
  if (geo.stride == 0) throw ValidationError("convolution stride must be positive");
  if (extent + 2 * geo.padding < kernel)
    throw ValidationError("convolution window " + std::to_string(kernel) + " does not fit extent " +
                          std::to_string(extent) + " with padding " + std::to_string(geo.padding));
  return (extent + 2 * geo.padding - kernel) / geo.stride + 1;
}

template <typename T>
ConvWeights<T>::ConvWeights(std::size_t out_channels, std::size_t in_channels, std::size_t kernel_size,
                            ConvGeometry geo)
    : kernel(Shape{out_channels, in_channels, kernel_size, kernel_size}),
      bias(Shape{out_channels}),
      geometry(geo) {
  kernel.set_requires_grad(true);
  bias.set_requires_grad(true);
}

template <typename T>
ConvWeights<T>::ConvWeights(Tensor<T> kernel_, Tensor<T> bias_, ConvGeometry geo)
    : kernel(std::move(kernel_)), bias(std::move(bias_)), geometry(geo) {
  if (kernel.rank() != 4) throw ValidationError("conv kernel must be 4-d");
  if (bias.numel() != kernel.dim(0)) throw ValidationError("conv bias length must equal out_channels");
}

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias, ConvGeometry geo) {
  const ConvDims d = conv_dims(input, kernel, bias, geo, "conv2d");
  Tape<T>& tape = *input.tape();
  const bool pointwise = is_pointwise(d, geo);

  Tensor<T> out(Shape{d.batch, d.out_c, d.out_h, d.out_w});
  {
    const T* x = input.value().data().data();
    ConstMatMap<T> w(kernel.value().data().data(), d.out_c, d.rows());
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias.value().data().data(), d.out_c);
    std::vector<T> cols(pointwise ? 0 : d.rows() * d.pixels());
    for (std::size_t n = 0; n < d.batch; ++n) {
      const T* xb = x + n * d.in_c * d.in_h * d.in_w;
      if (!pointwise) im2col(xb, d, geo, cols.data());
      ConstMatMap<T> colm(pointwise ? xb : cols.data(), d.rows(), d.pixels());
      MatMap<T> o(out.data().data() + n * d.out_c * d.pixels(), d.out_c, d.pixels());
      o.noalias() = w * colm;
      o.colwise() += b;
    }
  }

  const std::size_t idx = input.id(), idk = kernel.id(), idb = bias.id();
  return tape.record(std::move(out), {idx, idk, idb}, [=](Tape<T>& t, std::span<const T> g) {
    const T* x = t.value(idx).data().data();
    ConstMatMap<T> w(t.value(idk).data().data(), d.out_c, d.rows());
    const bool gx = t.needs_grad(idx), gk = t.needs_grad(idk), gb = t.needs_grad(idb);
    std::vector<T> cols(d.rows() * d.pixels());
    for (std::size_t n = 0; n < d.batch; ++n) {
      ConstMatMap<T> go(g.data() + n * d.out_c * d.pixels(), d.out_c, d.pixels());
      if (gb) {
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(t.grad_of(idb).data(), d.out_c);
        db += go.rowwise().sum();
      }
      const T* xb = x + n * d.in_c * d.in_h * d.in_w;
      if (gk) {
        if (!pointwise) im2col(xb, d, geo, cols.data());
        ConstMatMap<T> colm(pointwise ? xb : cols.data(), d.rows(), d.pixels());
        MatMap<T> dk(t.grad_of(idk).data(), d.out_c, d.rows());
        dk.noalias() += go * colm.transpose();
      }
      if (gx) {
        T* dxb = t.grad_of(idx).data() + n * d.in_c * d.in_h * d.in_w;
        if (pointwise) {
          MatMap<T> dxm(dxb, d.rows(), d.pixels());
          dxm.noalias() += w.transpose() * go;
        } else {
          MatMap<T> dcols(cols.data(), d.rows(), d.pixels());
          dcols.noalias() = w.transpose() * go;
          col2im_add(cols.data(), d, geo, dxb);
        }
      }
    }
  });
}

template <typename T>
T bilinear_sample(const Tensor<T>& feature, T y, T x, std::size_t channel, std::size_t batch) {
  if (feature.rank() != 4) throw ValidationError("bilinear_sample: feature must be 4-d");
  const std::size_t h = feature.dim(2), w = feature.dim(3);
  const T* plane = feature.data().data() + (batch * feature.dim(1) + channel) * h * w;
  return sample_plane(plane, h, w, corners_of(y, x));
}

template <typename T>
Var<T> deformable_conv2d(const Var<T>& input, const Var<T>& offsets, const Var<T>& kernel, const Var<T>& bias,
                         ConvGeometry geo) {
  const ConvDims d = conv_dims(input, kernel, bias, geo, "deformable_conv2d");
  const Shape& os = offsets.shape();
  if (os.size() != 4 || os[0] != d.batch || os[1] != 2 * d.taps() || os[2] != d.out_h || os[3] != d.out_w)
    throw ValidationError("deformable_conv2d: offsets must have shape " +
                          shape_string({d.batch, 2 * d.taps(), d.out_h, d.out_w}) + ", got " + shape_string(os));
  Tape<T>& tape = *input.tape();
  const std::size_t P = d.pixels();
  const std::size_t plane_size = d.in_h * d.in_w;

  auto build_cols = [d, P, plane_size](const T* xb, const std::vector<Corners<T>>& cs, T* cols) {
    for (std::size_t c = 0; c < d.in_c; ++c) {
      const T* plane = xb + c * plane_size;
      for (std::size_t k = 0; k < d.taps(); ++k) {
        T* row = cols + (c * d.taps() + k) * P;
        const Corners<T>* ck = cs.data() + k * P;
        for (std::size_t p = 0; p < P; ++p) row[p] = sample_plane(plane, d.in_h, d.in_w, ck[p]);
      }
    }
  };

  Tensor<T> out(Shape{d.batch, d.out_c, d.out_h, d.out_w});
  {
    const T* x = input.value().data().data();
    const T* off = offsets.value().data().data();
    ConstMatMap<T> w(kernel.value().data().data(), d.out_c, d.rows());
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias.value().data().data(), d.out_c);
    std::vector<T> cols(d.rows() * P);
    for (std::size_t n = 0; n < d.batch; ++n) {
      const auto cs = deform_corners(off + n * 2 * d.taps() * P, d, geo);
      build_cols(x + n * d.in_c * plane_size, cs, cols.data());
      MatMap<T> o(out.data().data() + n * d.out_c * P, d.out_c, P);
      o.noalias() = w * ConstMatMap<T>(cols.data(), d.rows(), P);
      o.colwise() += b;
    }
  }

  const std::size_t idx = input.id(), ido = offsets.id(), idk = kernel.id(), idb = bias.id();
  return tape.record(std::move(out), {idx, ido, idk, idb}, [=](Tape<T>& t, std::span<const T> g) {
    const T* x = t.value(idx).data().data();
    const T* off = t.value(ido).data().data();
    ConstMatMap<T> w(t.value(idk).data().data(), d.out_c, d.rows());
    const bool gx = t.needs_grad(idx), go_ = t.needs_grad(ido), gk = t.needs_grad(idk), gb = t.needs_grad(idb);
    std::vector<T> cols(d.rows() * P);
    for (std::size_t n = 0; n < d.batch; ++n) {
      ConstMatMap<T> gout(g.data() + n * d.out_c * P, d.out_c, P);
      if (gb) {
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(t.grad_of(idb).data(), d.out_c);
        db += gout.rowwise().sum();
      }
      const T* xb = x + n * d.in_c * plane_size;
      const auto cs = deform_corners(off + n * 2 * d.taps() * P, d, geo);
      if (gk) {
        build_cols(xb, cs, cols.data());
        MatMap<T> dk(t.grad_of(idk).data(), d.out_c, d.rows());
        dk.noalias() += gout * ConstMatMap<T>(cols.data(), d.rows(), P).transpose();
      }
      if (!gx && !go_) continue;
      MatMap<T> dcols(cols.data(), d.rows(), P);
      dcols.noalias() = w.transpose() * gout;
      T* dxb = gx ? t.grad_of(idx).data() + n * d.in_c * plane_size : nullptr;
      T* doff = go_ ? t.grad_of(ido).data() + n * 2 * d.taps() * P : nullptr;
      for (std::size_t c = 0; c < d.in_c; ++c) {
        const T* plane = xb + c * plane_size;
        T* dplane = dxb ? dxb + c * plane_size : nullptr;
        for (std::size_t k = 0; k < d.taps(); ++k) {
          const T* grow = cols.data() + (c * d.taps() + k) * P;
          const Corners<T>* ck = cs.data() + k * P;
          for (std::size_t p = 0; p < P; ++p) {
            const T gv = grow[p];
            if (gv == T(0)) continue;
            const Corners<T>& cr = ck[p];
            if (dplane) {
              add_if_inside(dplane, d.in_h, d.in_w, cr.y0, cr.x0, gv * (T(1) - cr.ly) * (T(1) - cr.lx));
              add_if_inside(dplane, d.in_h, d.in_w, cr.y0, cr.x0 + 1, gv * (T(1) - cr.ly) * cr.lx);
              add_if_inside(dplane, d.in_h, d.in_w, cr.y0 + 1, cr.x0, gv * cr.ly * (T(1) - cr.lx));
              add_if_inside(dplane, d.in_h, d.in_w, cr.y0 + 1, cr.x0 + 1, gv * cr.ly * cr.lx);
            }
            if (doff) {
              const T v00 = read_or_zero(plane, d.in_h, d.in_w, cr.y0, cr.x0);
              const T v01 = read_or_zero(plane, d.in_h, d.in_w, cr.y0, cr.x0 + 1);
              const T v10 = read_or_zero(plane, d.in_h, d.in_w, cr.y0 + 1, cr.x0);
              const T v11 = read_or_zero(plane, d.in_h, d.in_w, cr.y0 + 1, cr.x0 + 1);
              doff[(2 * k) * P + p] += gv * ((T(1) - cr.lx) * (v10 - v00) + cr.lx * (v11 - v01));
              doff[(2 * k + 1) * P + p] += gv * ((T(1) - cr.ly) * (v01 - v00) + cr.ly * (v11 - v10));
            }
          }
        }
      }
    }
  });
}

#define SMFN_INSTANTIATE(T)                                                                                 \
  template struct ConvWeights<T>;                                                                           \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, ConvGeometry);                        \
  template T bilinear_sample(const Tensor<T>&, T, T, std::size_t, std::size_t);                             \
  template Var<T> deformable_conv2d(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&, ConvGeometry);

SMFN_INSTANTIATE(float)
SMFN_INSTANTIATE(double)

}  // namespace smfn
