#pragma once

#include "revsci/tensor.hpp"

namespace revsci {

// Peak signal-to-noise ratio in dB over all elements. A perfect match is
// reported as the 99 dB cap so tables stay finite.
template <typename T>
double psnr(const Tensor<T>& xhat, const Tensor<T>& x, double peak = 1.0);

// Mean structural similarity over all 2D frames (the two trailing axes), with
// the standard 11x11 Gaussian window (sigma 1.5) and K1=0.01, K2=0.03.
template <typename T>
double ssim(const Tensor<T>& xhat, const Tensor<T>& x, double peak = 1.0);

} // namespace revsci
