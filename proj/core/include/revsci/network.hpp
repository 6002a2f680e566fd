#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "revsci/conv3d.hpp"
#include "revsci/sci.hpp"
#include "revsci/tensor.hpp"

namespace revsci {

enum class Dtype { f32, f64 };

Dtype parse_dtype(const std::string& name);
std::string to_string(Dtype dtype);

// Architecture hyperparameters. The stack works on [c1, B, nx', ny'] feature
// tensors whose channel axis is split into m groups of c1/m channels by every
// reversible block.
struct NetworkConfig {
    std::size_t c1 = 64;  // feature channels entering the reversible stack
    std::size_t m = 2;    // channel groups per reversible block
    std::size_t L = 18;   // reversible blocks
    std::size_t B = 8;    // video frames per snapshot
    bool color = false;
    Dtype dtype = Dtype::f32;
    std::uint64_t seed = 1;

    void validate() const;
    std::size_t group_channels() const { return c1 / m; }
    std::size_t in_channels() const { return color ? 4 : 1; }
    std::size_t out_channels() const { return color ? 3 : 1; }
};

std::string to_json(const NetworkConfig& config);
NetworkConfig network_config_from_json(const std::string& text);

// One 3D convolution layer, optionally run in the transposed (upsampling)
// direction. `spec` always describes the downsampling orientation, so a
// transposed layer maps spec.out_channels inputs to spec.in_channels outputs
// and keeps its weights in the same [out, in, kt, kh, kw] layout.
template <typename T>
struct ConvLayer {
    Conv3dSpec spec;
    bool transposed = false;
    Offsets3 output_padding{0, 0, 0}; // only meaningful when transposed
    T lrelu_slope = T(0);             // 0 disables the activation
    Tensor<T> weights;                // [spec.out_channels, spec.in_channels, kt, kh, kw]
    Tensor<T> bias;                   // [out_channels()]

    std::size_t in_channels() const { return transposed ? spec.out_channels : spec.in_channels; }
    std::size_t out_channels() const { return transposed ? spec.in_channels : spec.out_channels; }
};

template <typename T>
Tensor<T> conv_layer_forward(const ConvLayer<T>& layer, const Tensor<T>& x);

// Residual branch applied to one channel group inside a reversible block:
// conv3 - LeakyReLU - conv3, width preserved.
template <typename T>
struct GroupFn {
    ConvLayer<T> conv1;
    ConvLayer<T> conv2;
};

template <typename T>
Tensor<T> group_fn_forward(const GroupFn<T>& fn, const Tensor<T>& x);

template <typename T>
struct RevBlock {
    std::vector<GroupFn<T>> fns; // one branch per channel group
    std::size_t groups() const { return fns.size(); }
};

// Four-layer feature extractor, L reversible blocks, four-layer
// reconstruction head.
template <typename T>
struct Network {
    NetworkConfig config;
    std::vector<ConvLayer<T>> feature;
    std::vector<RevBlock<T>> blocks;
    std::vector<ConvLayer<T>> head;
};

// Seeded construction; identical config -> identical parameters.
template <typename T>
Network<T> build_network(const NetworkConfig& config);

// Stable, named parameter enumeration shared by the optimizer, the gradient
// engines and the checkpoint format.
template <typename T>
struct ParamRef {
    std::string name;
    Tensor<T>* tensor;
};
template <typename T>
struct ConstParamRef {
    std::string name;
    const Tensor<T>* tensor;
};

template <typename T>
std::vector<ParamRef<T>> parameters(Network<T>& net);
template <typename T>
std::vector<ConstParamRef<T>> parameters(const Network<T>& net);

template <typename T>
std::size_t count_parameters(const Network<T>& net);

// Reshape a coarse estimate into the channels-first network input:
// [1, B, nx, ny] grayscale, [4, B, nx/2, ny/2] color.
template <typename T>
Tensor<T> network_input(const CoarseEstimate<T>& ce);

template <typename T>
Tensor<T> feature_extract(const Network<T>& net, const Tensor<T>& input);

template <typename T>
Tensor<T> rev_block_forward(const RevBlock<T>& block, const Tensor<T>& h);

template <typename T>
Tensor<T> rev_block_inverse(const RevBlock<T>& block, const Tensor<T>& h_next);

template <typename T>
Tensor<T> rev_stack_forward(const Network<T>& net, const Tensor<T>& h);

template <typename T>
Tensor<T> rev_stack_inverse(const Network<T>& net, const Tensor<T>& h);

template <typename T>
Tensor<T> reconstruct_head(const Network<T>& net, const Tensor<T>& h);

// Full pipeline; output is [1, B, nx, ny] grayscale or [3, B, nx, ny] color.
template <typename T>
Tensor<T> forward(const Network<T>& net, const Tensor<T>& input);

template <typename T>
Tensor<T> forward(const Network<T>& net, const CoarseEstimate<T>& ce);

} // namespace revsci
