#include "smfn/loss_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace smfn {

LatitudeWeights latitude_weights(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ValidationError("latitude_weights: extents must be >= 1");
  LatitudeWeights lw;
  lw.height = height;
  lw.width = width;
  lw.w.resize(height);
  const double n = static_cast<double>(height);
  for (std::size_t j = 0; j < height; ++j)
    lw.w[j] = std::cos((static_cast<double>(j) + 0.5 - n / 2.0) * std::numbers::pi / n);
  // Pair rows explicitly so w[j] == w[N-1-j] holds bit-for-bit.
  for (std::size_t j = 0; j < height / 2; ++j) lw.w[height - 1 - j] = lw.w[j];
  lw.normalizer = static_cast<double>(width) * std::accumulate(lw.w.begin(), lw.w.end(), 0.0);
  return lw;
}

LatitudeWeights LatitudeWeights::uniform(std::size_t height, std::size_t width) {
  LatitudeWeights lw;
  lw.height = height;
  lw.width = width;
  lw.w.assign(height, 1.0);
  lw.normalizer = static_cast<double>(height * width);
  return lw;
}

std::vector<double> LatitudeWeights::rows(std::size_t first, std::size_t count, bool flipped) const {
  if (first + count > height)
    throw ValidationError("latitude rows [" + std::to_string(first) + ", " + std::to_string(first + count) +
                          ") exceed frame height " + std::to_string(height));
  std::vector<double> out(w.begin() + static_cast<std::ptrdiff_t>(first),
                          w.begin() + static_cast<std::ptrdiff_t>(first + count));
  if (flipped) std::reverse(out.begin(), out.end());
  return out;
}

template <typename T>
Tensor<T> row_weight_tensor(const std::vector<double>& rows) {
  Tensor<T> t(Shape{1, 1, rows.size(), 1});
  for (std::size_t i = 0; i < rows.size(); ++i) t[i] = static_cast<T>(rows[i]);
  return t;
}

template <typename T>
Var<T> wmse(const Var<T>& sr, const Tensor<T>& hr, const Tensor<T>& weights) {
  if (sr.shape() != hr.shape())
    throw ValidationError("wmse: prediction " + shape_string(sr.shape()) + " and target " + shape_string(hr.shape()) +
                          " differ");
  if (broadcast_shape(sr.shape(), weights.shape()) != sr.shape())
    throw ValidationError("wmse: weights " + shape_string(weights.shape()) + " do not broadcast to " +
                          shape_string(sr.shape()));
  Tape<T>& tape = *sr.tape();
  Var<T> w = tape.constant(weights);
  Var<T> diff = sub(sr, tape.constant(hr));
  Var<T> weighted_sq = reduce(mul(mul(diff, diff), w), ReduceKind::Sum);
  // Normaliser: weights summed over the full broadcast extent.
  const T total = reduce(mul(tape.constant(Tensor<T>(sr.shape(), T(1))), w), ReduceKind::Sum).value()[0];
  if (!(total > T(0))) throw ValidationError("wmse: weights must have a positive sum");
  return scale(weighted_sq, T(1) / total);
}

template <typename T>
Var<T> wmse(const Var<T>& sr, const Tensor<T>& hr, const LatitudeWeights& lw) {
  const Shape& s = sr.shape();
  if (s.size() != 4 || s[2] != lw.height || s[3] != lw.width)
    throw ValidationError("wmse: latitude weights are for " + std::to_string(lw.height) + "x" +
                          std::to_string(lw.width) + " frames, got " + shape_string(s));
  return wmse(sr, hr, row_weight_tensor<T>(lw.w));
}

namespace {

void check_extents(const Plane& a, const Plane& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ValidationError(std::string(op) + ": image extents differ");
}

}  // namespace

double wmse(const Plane& sr, const Plane& hr, const LatitudeWeights& lw) {
  check_extents(sr, hr, "wmse");
  if (static_cast<std::size_t>(sr.rows()) != lw.height || static_cast<std::size_t>(sr.cols()) != lw.width)
    throw ValidationError("wmse: latitude weights do not match image extents");
  double acc = 0.0;
  for (Eigen::Index j = 0; j < sr.rows(); ++j) acc += lw.w[j] * (sr.row(j) - hr.row(j)).square().sum();
  return acc / lw.normalizer;
}

double mse(const Plane& sr, const Plane& hr) {
  check_extents(sr, hr, "mse");
  return (sr - hr).square().mean();
}

template <typename T>
LossTerms<T> total_loss(const Var<T>& sr, const Tensor<T>& hr, const Tensor<T>& hr_weights, const Var<T>* dual_out,
                        const Tensor<T>& lr, const Tensor<T>& lr_weights, T lambda) {
  if (lambda < T(0)) throw ValidationError("total_loss: lambda must be >= 0");
  LossTerms<T> terms;
  terms.primary = wmse(sr, hr, hr_weights);
  terms.total = terms.primary;
  if (dual_out) {
    if (dual_out->shape() != lr.shape())
      throw ValidationError("total_loss: dual output " + shape_string(dual_out->shape()) +
                            " does not match LR input " + shape_string(lr.shape()));
    terms.dual = wmse(*dual_out, lr, lr_weights);
    terms.total = add(terms.primary, scale(terms.dual, lambda));
  }
  return terms;
}

double ws_psnr(const Plane& sr, const Plane& hr, const LatitudeWeights& lw, double peak) {
  if (!(peak > 0.0)) throw ValidationError("ws_psnr: peak must be positive");
  const double e = wmse(sr, hr, lw);
  if (e == 0.0) return kPsnrCap;
  return 10.0 * std::log10(peak * peak / e);
}

double psnr(const Plane& sr, const Plane& hr, double peak) {
  return ws_psnr(sr, hr, LatitudeWeights::uniform(static_cast<std::size_t>(sr.rows()),
                                                  static_cast<std::size_t>(sr.cols())),
                 peak);
}

namespace {

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> g(size);
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - c;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  const double total = std::accumulate(g.begin(), g.end(), 0.0);
  for (double& v : g) v /= total;
  return g;
}

// Separable "valid" filtering with a normalised 1-d window.
Plane filter_valid(const Plane& p, const std::vector<double>& g) {
  const Eigen::Index k = static_cast<Eigen::Index>(g.size());
  const Eigen::Index oh = p.rows() - k + 1, ow = p.cols() - k + 1;
  Plane horizontal = Plane::Zero(p.rows(), ow);
  for (Eigen::Index i = 0; i < k; ++i) horizontal += g[i] * p.middleCols(i, ow);
  Plane out = Plane::Zero(oh, ow);
  for (Eigen::Index i = 0; i < k; ++i) out += g[i] * horizontal.middleRows(i, oh);
  return out;
}

}  // namespace

Plane ssim_map(const Plane& a, const Plane& b, const SsimOptions& opt) {
  check_extents(a, b, "ssim");
  const auto win = static_cast<Eigen::Index>(opt.window);
  if (a.rows() < win || a.cols() < win)
    throw ValidationError("ssim: image " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                          " is smaller than the " + std::to_string(opt.window) + "x" + std::to_string(opt.window) +
                          " window");
  const auto g = gaussian_window(opt.window, opt.sigma);
  const double c1 = (opt.k1 * opt.peak) * (opt.k1 * opt.peak);
  const double c2 = (opt.k2 * opt.peak) * (opt.k2 * opt.peak);

  const Plane mu_a = filter_valid(a, g);
  const Plane mu_b = filter_valid(b, g);
  const Plane var_a = filter_valid(a * a, g) - mu_a * mu_a;
  const Plane var_b = filter_valid(b * b, g) - mu_b * mu_b;
  const Plane cov = filter_valid(a * b, g) - mu_a * mu_b;
  return ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a.square() + mu_b.square() + c1) * (var_a + var_b + c2));
}

double ws_ssim(const Plane& sr, const Plane& hr, const LatitudeWeights& lw, const SsimOptions& opt) {
  if (static_cast<std::size_t>(sr.rows()) != lw.height || static_cast<std::size_t>(sr.cols()) != lw.width)
    throw ValidationError("ws_ssim: latitude weights do not match image extents");
  const Plane map = ssim_map(sr, hr, opt);
  const std::size_t half = opt.window / 2;
  double num = 0.0, den = 0.0;
  for (Eigen::Index r = 0; r < map.rows(); ++r) {
    const double w = lw.w[static_cast<std::size_t>(r) + half];
    num += w * map.row(r).sum();
    den += w * static_cast<double>(map.cols());
  }
  return num / den;
}

double ssim(const Plane& sr, const Plane& hr, const SsimOptions& opt) {
  return ws_ssim(sr, hr, LatitudeWeights::uniform(static_cast<std::size_t>(sr.rows()),
                                                  static_cast<std::size_t>(sr.cols())),
                 opt);
}

Plane quantize_8bit(const Plane& p) { return p.round().max(0.0).min(255.0); }

#define SMFN_INSTANTIATE(T)                                                                                   \
  template Tensor<T> row_weight_tensor(const std::vector<double>&);                                           \
  template Var<T> wmse(const Var<T>&, const Tensor<T>&, const Tensor<T>&);                                    \
  template Var<T> wmse(const Var<T>&, const Tensor<T>&, const LatitudeWeights&);                              \
  template LossTerms<T> total_loss(const Var<T>&, const Tensor<T>&, const Tensor<T>&, const Var<T>*,          \
                                   const Tensor<T>&, const Tensor<T>&, T);

SMFN_INSTANTIATE(float)
SMFN_INSTANTIATE(double)

}  // namespace smfn
