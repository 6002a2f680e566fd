#pragma once

#include <array>
#include <utility>

#include "revsci/tensor.hpp"

namespace revsci {

using Extents3 = std::array<std::size_t, 3>; // (t, h, w)
using Offsets3 = std::array<std::size_t, 3>;

// Geometry of one 3D convolution: kernel extents, stride and zero padding per
// axis plus the channel mapping. Output extents follow
//   out = floor((in + 2p - k) / s) + 1
// and must be >= 1 on every axis.
struct Conv3dSpec {
    Extents3 kernel{1, 1, 1};
    Extents3 stride{1, 1, 1};
    Offsets3 padding{0, 0, 0};
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;

    Extents3 output_extents(const Extents3& in) const;
    // Extents produced by the transposed (adjoint) map:
    //   out = (in - 1) * s - 2p + k + output_padding,  output_padding < s.
    Extents3 transposed_extents(const Extents3& in, const Offsets3& output_padding) const;
};

// out[c,t,h,w] = bias[c] + sum over in-channels and kernel window of
// weight * input, with zero padding. weights: [C_out, C_in, kt, kh, kw];
// bias: [C_out] or empty to disable. Deterministic: fixed accumulation order
// per output element regardless of threading.
template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                         const Conv3dSpec& spec);

// Adjoint with respect to the input. input_extents disambiguates the source
// shape when stride > 1 (several input extents map to one output extent).
template <typename T>
Tensor<T> conv3d_backward_data(const Tensor<T>& grad_out, const Tensor<T>& weights,
                               const Conv3dSpec& spec, const Extents3& input_extents);

// Gradients with respect to weights and bias of the matching forward call.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> conv3d_backward_weights(const Tensor<T>& grad_out,
                                                        const Tensor<T>& input,
                                                        const Conv3dSpec& spec);

// Transposed convolution as a layer: the exact adjoint of conv3d_forward with
// the same spec (zero-interleaving, no interpolation). `spec` describes the
// associated forward convolution, so the layer maps spec.out_channels
// channels to spec.in_channels channels and weights keep the forward layout
// [C_out, C_in, kt, kh, kw]. bias has spec.in_channels entries or is empty.
template <typename T>
Tensor<T> conv3d_transposed_forward(const Tensor<T>& input, const Tensor<T>& weights,
                                    const Tensor<T>& bias, const Conv3dSpec& spec,
                                    const Offsets3& output_padding = {0, 0, 0});

// Elementwise max(x, slope * x); slope in (0, 1).
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope);

// Chain-rule pass through leaky_relu: grad * (pre >= 0 ? 1 : slope).
template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& pre, const Tensor<T>& grad_out, T slope);

// Per-channel reduction of a [C, T, H, W] tensor, used for bias gradients of
// transposed layers.
template <typename T>
Tensor<T> sum_per_channel(const Tensor<T>& t);

} // namespace revsci
