#pragma once

#include <cstddef>
#include <vector>

#include "smfn/autodiff.hpp"
#include "smfn/resample.hpp"

namespace smfn {

/// Per-row ERP weights w[j] = cos((j + 0.5 - N/2) pi / N) for a frame of
/// N rows and M columns. Weights depend on the row only.
struct LatitudeWeights {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> w;
  double normalizer = 0.0;  // M * sum(w)

  /// All-ones weights; reduces every weighted metric to its planar form.
  static LatitudeWeights uniform(std::size_t height, std::size_t width);

  /// Rows [first, first + count) of these weights, reversed when `flipped`.
  std::vector<double> rows(std::size_t first, std::size_t count, bool flipped = false) const;
};

LatitudeWeights latitude_weights(std::size_t height, std::size_t width);

/// Weights shaped (1, 1, H, 1) for broadcasting against image tensors.
template <typename T>
Tensor<T> row_weight_tensor(const std::vector<double>& rows);

/// sum(w (sr - hr)^2) / sum(w) with `weights` broadcast against sr.
/// Differentiable in sr; hr and weights are constants.
template <typename T>
Var<T> wmse(const Var<T>& sr, const Tensor<T>& hr, const Tensor<T>& weights);

template <typename T>
Var<T> wmse(const Var<T>& sr, const Tensor<T>& hr, const LatitudeWeights& lw);

double wmse(const Plane& sr, const Plane& hr, const LatitudeWeights& lw);
double mse(const Plane& sr, const Plane& hr);

template <typename T>
struct LossTerms {
  Var<T> primary;
  Var<T> dual;  // invalid when no dual output was supplied
  Var<T> total;
};

/// L_total = WMSE(sr, hr) + lambda WMSE(dual_out, lr). `hr_weights` and
/// `lr_weights` are broadcastable weight tensors for each resolution.
template <typename T>
LossTerms<T> total_loss(const Var<T>& sr, const Tensor<T>& hr, const Tensor<T>& hr_weights, const Var<T>* dual_out,
                        const Tensor<T>& lr, const Tensor<T>& lr_weights, T lambda);

inline double combine_losses(double primary, double dual, double lambda) { return primary + lambda * dual; }

/// Reported for a zero-error comparison instead of +inf.
inline constexpr double kPsnrCap = 99.0;

double ws_psnr(const Plane& sr, const Plane& hr, const LatitudeWeights& lw, double peak = 255.0);
double psnr(const Plane& sr, const Plane& hr, double peak = 255.0);

/// Structural similarity parameters: 11x11 Gaussian window, sigma 1.5.
struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 255.0;
};

/// SSIM index map over valid window positions, (H - win + 1) x (W - win + 1).
Plane ssim_map(const Plane& a, const Plane& b, const SsimOptions& opt = {});

/// Latitude-weighted mean of the SSIM map; map row r is weighted by the
/// weight of the image row under the window centre.
double ws_ssim(const Plane& sr, const Plane& hr, const LatitudeWeights& lw, const SsimOptions& opt = {});
double ssim(const Plane& sr, const Plane& hr, const SsimOptions& opt = {});

/// Rounds to the 8-bit grid, clamped to [0, 255].
Plane quantize_8bit(const Plane& p);

}  // namespace smfn
