#include "revsci/network.hpp"

#include <cmath>

#include "revsci/errors.hpp"
#include "revsci/rng.hpp"

namespace revsci {

// Slope shared by every LeakyReLU in the architecture.
static constexpr double kLreluSlope = 0.01;

Dtype parse_dtype(const std::string& name) {
    if (name == "f32") return Dtype::f32;
    if (name == "f64") return Dtype::f64;
    throw ValueError("unknown dtype '" + name + "' (expected f32 or f64)");
}

std::string to_string(Dtype dtype) {
    return dtype == Dtype::f32 ? "f32" : "f64";
}

void NetworkConfig::validate() const {
    if (c1 < 4) throw ValueError("network config: c1 must be at least 4, got " + std::to_string(c1));
    if (m < 2) throw ValueError("network config: need at least 2 channel groups, got " + std::to_string(m));
    if (c1 % m != 0) {
        throw ValueError("network config: group count " + std::to_string(m) +
                         " must divide the channel count " + std::to_string(c1));
    }
    if (L < 1) throw ValueError("network config: need at least one reversible block");
    if (B < 1) throw ValueError("network config: need at least one frame per snapshot");
}

template <typename T>
Tensor<T> conv_layer_forward(const ConvLayer<T>& layer, const Tensor<T>& x) {
    Tensor<T> out = layer.transposed
                        ? conv3d_transposed_forward(x, layer.weights, layer.bias, layer.spec,
                                                    layer.output_padding)
                        : conv3d_forward(x, layer.weights, layer.bias, layer.spec);
    if (layer.lrelu_slope > T(0)) out = leaky_relu(out, layer.lrelu_slope);
    return out;
}

template <typename T>
Tensor<T> group_fn_forward(const GroupFn<T>& fn, const Tensor<T>& x) {
    return conv_layer_forward(fn.conv2, conv_layer_forward(fn.conv1, x));
}

namespace {

// Kaiming fan-in initialization. Layers feeding a LeakyReLU get the matching
// gain; linear outputs get gain 1. `extra_scale` further shrinks the residual
// branches so that deep stacks keep unit-scale activations.
template <typename T>
void init_layer(ConvLayer<T>& layer, Rng& rng, double gain, double extra_scale = 1.0) {
    const auto& k = layer.spec.kernel;
    double fan_in = static_cast<double>(layer.in_channels() * k[0] * k[1] * k[2]);
    if (layer.transposed) {
        // Each output element of the upsampling direction receives only
        // 1/(stride product) of the kernel taps on average.
        const auto& s = layer.spec.stride;
        fan_in /= static_cast<double>(s[0] * s[1] * s[2]);
    }
    const double stddev = extra_scale * gain / std::sqrt(fan_in);
    layer.weights = Tensor<T>::normal({layer.spec.out_channels, layer.spec.in_channels,
                                       k[0], k[1], k[2]},
                                      rng, 0.0, stddev);
    layer.bias = Tensor<T>(typename Tensor<T>::Shape{layer.out_channels()});
}

template <typename T>
ConvLayer<T> make_layer(std::size_t in_c, std::size_t out_c, std::size_t k, Extents3 stride,
                        bool lrelu) {
    ConvLayer<T> layer;
    layer.spec.kernel = {k, k, k};
    layer.spec.stride = stride;
    layer.spec.padding = {k / 2, k / 2, k / 2};
    layer.spec.in_channels = in_c;
    layer.spec.out_channels = out_c;
    layer.lrelu_slope = lrelu ? T(kLreluSlope) : T(0);
    return layer;
}

double lrelu_gain() { return std::sqrt(2.0 / (1.0 + kLreluSlope * kLreluSlope)); }

} // namespace

template <typename T>
Network<T> build_network(const NetworkConfig& config) {
    config.validate();
    Network<T> net;
    net.config = config;
    Rng rng = Rng(config.seed).derive("network-init");

    // Feature extraction: kernels 5,3,1,3, all LeakyReLU, widening to c1.
    // Grayscale halves the spatial extents in the last layer; the color path
    // starts from the quarter-size Bayer planes and keeps stride 1.
    const std::size_t c1 = config.c1;
    const std::size_t fw[4] = {std::max<std::size_t>(c1 / 4, 1), c1 / 2, c1 / 2, c1};
    const Extents3 unit{1, 1, 1};
    const Extents3 last_stride = config.color ? unit : Extents3{1, 2, 2};
    net.feature.push_back(make_layer<T>(config.in_channels(), fw[0], 5, unit, true));
    net.feature.push_back(make_layer<T>(fw[0], fw[1], 3, unit, true));
    net.feature.push_back(make_layer<T>(fw[1], fw[2], 1, unit, true));
    net.feature.push_back(make_layer<T>(fw[2], fw[3], 3, last_stride, true));

    // Reversible stack: L blocks of m residual branches on c1/m channels.
    const std::size_t gc = config.group_channels();
    for (std::size_t l = 0; l < config.L; ++l) {
        RevBlock<T> block;
        for (std::size_t i = 0; i < config.m; ++i) {
            GroupFn<T> fn;
            fn.conv1 = make_layer<T>(gc, gc, 3, unit, true);
            fn.conv2 = make_layer<T>(gc, gc, 3, unit, false);
            block.fns.push_back(std::move(fn));
        }
        net.blocks.push_back(std::move(block));
    }

    // Reconstruction: transposed conv undoes the spatial downsampling, then
    // kernels 3,1,3 narrow to the output channel count. LeakyReLU everywhere
    // except the output layer.
    ConvLayer<T> up = make_layer<T>(c1 / 2, c1, 3, {1, 2, 2}, true);
    up.transposed = true;
    up.output_padding = {0, 1, 1};
    net.head.push_back(std::move(up));
    net.head.push_back(make_layer<T>(c1 / 2, c1 / 4, 3, unit, true));
    net.head.push_back(make_layer<T>(c1 / 4, c1 / 4, 1, unit, true));
    net.head.push_back(make_layer<T>(c1 / 4, config.out_channels(), 3, unit, false));

    // Initialization. Residual-branch outputs are scaled down by
    // 1/sqrt(2 m L) so that the additive couplings keep activations at unit
    // scale even for the deepest stacks.
    const double gain = lrelu_gain();
    const double branch_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(config.m * config.L));
    for (auto& layer : net.feature) init_layer(layer, rng, gain);
    for (auto& block : net.blocks) {
        for (auto& fn : block.fns) {
            init_layer(fn.conv1, rng, gain);
            init_layer(fn.conv2, rng, 1.0, branch_scale);
        }
    }
    for (std::size_t i = 0; i < net.head.size(); ++i) {
        init_layer(net.head[i], rng, i + 1 < net.head.size() ? gain : 1.0);
    }
    return net;
}

namespace {

template <typename NetT, typename Fn>
void visit_parameters(NetT& net, Fn&& fn) {
    auto layer_params = [&fn](const std::string& prefix, auto& layer) {
        fn(prefix + ".weight", layer.weights);
        fn(prefix + ".bias", layer.bias);
    };
    for (std::size_t i = 0; i < net.feature.size(); ++i)
        layer_params("feature." + std::to_string(i), net.feature[i]);
    for (std::size_t l = 0; l < net.blocks.size(); ++l) {
        for (std::size_t i = 0; i < net.blocks[l].fns.size(); ++i) {
            const std::string prefix = "block." + std::to_string(l) + ".fn." + std::to_string(i);
            layer_params(prefix + ".conv1", net.blocks[l].fns[i].conv1);
            layer_params(prefix + ".conv2", net.blocks[l].fns[i].conv2);
        }
    }
    for (std::size_t i = 0; i < net.head.size(); ++i)
        layer_params("head." + std::to_string(i), net.head[i]);
}

} // namespace

template <typename T>
std::vector<ParamRef<T>> parameters(Network<T>& net) {
    std::vector<ParamRef<T>> out;
    visit_parameters(net, [&out](std::string name, Tensor<T>& t) {
        out.push_back({std::move(name), &t});
    });
    return out;
}

template <typename T>
std::vector<ConstParamRef<T>> parameters(const Network<T>& net) {
    std::vector<ConstParamRef<T>> out;
    visit_parameters(net, [&out](std::string name, const Tensor<T>& t) {
        out.push_back({std::move(name), &t});
    });
    return out;
}

template <typename T>
std::size_t count_parameters(const Network<T>& net) {
    std::size_t count = 0;
    visit_parameters(net, [&count](const std::string&, const Tensor<T>& t) { count += t.numel(); });
    return count;
}

template <typename T>
Tensor<T> network_input(const CoarseEstimate<T>& ce) {
    if (ce.color) return ce.frames; // already [4, B, nx/2, ny/2]
    const auto& s = ce.frames.shape();
    return ce.frames.reshaped({1, s[0], s[1], s[2]});
}

template <typename T>
Tensor<T> feature_extract(const Network<T>& net, const Tensor<T>& input) {
    if (input.rank() != 4 || input.dim(0) != net.config.in_channels()) {
        throw ShapeError("feature_extract: expected input [" +
                         std::to_string(net.config.in_channels()) +
                         ", B, nx, ny], got " + input.shape_string());
    }
    if (!net.config.color && (input.dim(2) % 2 != 0 || input.dim(3) % 2 != 0)) {
        throw ShapeError("feature_extract: grayscale path halves the spatial extents, so they "
                         "must be even; got " + input.shape_string());
    }
    Tensor<T> h = input;
    for (const auto& layer : net.feature) h = conv_layer_forward(layer, h);
    return h;
}

namespace {

template <typename T>
void check_groups(const RevBlock<T>& block, const Tensor<T>& h, const char* who) {
    if (block.groups() < 2) throw ValueError(std::string(who) + ": block needs at least 2 groups");
    if (h.rank() != 4 || h.dim(0) % block.groups() != 0) {
        throw ShapeError(std::string(who) + ": cannot split " + h.shape_string() + " into " +
                         std::to_string(block.groups()) + " channel groups");
    }
}

} // namespace

template <typename T>
Tensor<T> rev_block_forward(const RevBlock<T>& block, const Tensor<T>& h) {
    check_groups(block, h, "rev_block_forward");
    const std::size_t m = block.groups(), gc = h.dim(0) / m;
    std::vector<Tensor<T>> g(m), out(m);
    for (std::size_t i = 0; i < m; ++i) g[i] = h.slice0(i * gc, (i + 1) * gc);

    out[0] = g[m - 1] + group_fn_forward(block.fns[0], g[0]);
    for (std::size_t i = 1; i < m; ++i)
        out[i] = g[m - 1 - i] + group_fn_forward(block.fns[i], out[i - 1]);
    return Tensor<T>::concat0(out);
}

template <typename T>
Tensor<T> rev_block_inverse(const RevBlock<T>& block, const Tensor<T>& h_next) {
    check_groups(block, h_next, "rev_block_inverse");
    const std::size_t m = block.groups(), gc = h_next.dim(0) / m;
    std::vector<Tensor<T>> o(m), g(m);
    for (std::size_t i = 0; i < m; ++i) o[i] = h_next.slice0(i * gc, (i + 1) * gc);

    // Unwind the coupling chain from the last update backwards; the final
    // group needs the already-recovered first group.
    for (std::size_t i = 0; i + 1 < m; ++i)
        g[i] = o[m - 1 - i] - group_fn_forward(block.fns[m - 1 - i], o[m - 2 - i]);
    g[m - 1] = o[0] - group_fn_forward(block.fns[0], g[0]);
    return Tensor<T>::concat0(g);
}

template <typename T>
Tensor<T> rev_stack_forward(const Network<T>& net, const Tensor<T>& h) {
    Tensor<T> cur = h;
    for (const auto& block : net.blocks) cur = rev_block_forward(block, cur);
    return cur;
}

template <typename T>
Tensor<T> rev_stack_inverse(const Network<T>& net, const Tensor<T>& h) {
    Tensor<T> cur = h;
    for (auto it = net.blocks.rbegin(); it != net.blocks.rend(); ++it)
        cur = rev_block_inverse(*it, cur);
    return cur;
}

template <typename T>
Tensor<T> reconstruct_head(const Network<T>& net, const Tensor<T>& h) {
    if (h.rank() != 4 || h.dim(0) != net.config.c1) {
        throw ShapeError("reconstruct_head: expected features [" + std::to_string(net.config.c1) +
                         ", B, nx', ny'], got " + h.shape_string());
    }
    Tensor<T> cur = h;
    for (const auto& layer : net.head) cur = conv_layer_forward(layer, cur);
    return cur;
}

template <typename T>
Tensor<T> forward(const Network<T>& net, const Tensor<T>& input) {
    return reconstruct_head(net, rev_stack_forward(net, feature_extract(net, input)));
}

template <typename T>
Tensor<T> forward(const Network<T>& net, const CoarseEstimate<T>& ce) {
    if (ce.color != net.config.color) {
        throw ValueError("forward: coarse estimate color mode does not match the network config");
    }
    return forward(net, network_input(ce));
}

#define REVSCI_INSTANTIATE_NETWORK(T)                                                        \
    template Tensor<T> conv_layer_forward<T>(const ConvLayer<T>&, const Tensor<T>&);         \
    template Tensor<T> group_fn_forward<T>(const GroupFn<T>&, const Tensor<T>&);             \
    template Network<T> build_network<T>(const NetworkConfig&);                              \
    template std::vector<ParamRef<T>> parameters<T>(Network<T>&);                            \
    template std::vector<ConstParamRef<T>> parameters<T>(const Network<T>&);                 \
    template std::size_t count_parameters<T>(const Network<T>&);                             \
    template Tensor<T> network_input<T>(const CoarseEstimate<T>&);                           \
    template Tensor<T> feature_extract<T>(const Network<T>&, const Tensor<T>&);              \
    template Tensor<T> rev_block_forward<T>(const RevBlock<T>&, const Tensor<T>&);           \
    template Tensor<T> rev_block_inverse<T>(const RevBlock<T>&, const Tensor<T>&);           \
    template Tensor<T> rev_stack_forward<T>(const Network<T>&, const Tensor<T>&);            \
    template Tensor<T> rev_stack_inverse<T>(const Network<T>&, const Tensor<T>&);            \
    template Tensor<T> reconstruct_head<T>(const Network<T>&, const Tensor<T>&);             \
    template Tensor<T> forward<T>(const Network<T>&, const Tensor<T>&);                      \
    template Tensor<T> forward<T>(const Network<T>&, const CoarseEstimate<T>&);

REVSCI_INSTANTIATE_NETWORK(float)
REVSCI_INSTANTIATE_NETWORK(double)

#undef REVSCI_INSTANTIATE_NETWORK

} // namespace revsci
