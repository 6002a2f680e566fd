#include "revsci/engine.hpp"

#include <cmath>
#include <vector>

#include "revsci/errors.hpp"

namespace revsci {

Engine parse_engine(const std::string& name) {
    if (name == "naive") return Engine::naive;
    if (name == "reversible") return Engine::reversible;
    throw ValueError("unknown engine '" + name + "' (expected naive or reversible)");
}

std::string to_string(Engine engine) {
    return engine == Engine::naive ? "naive" : "reversible";
}

template <typename T>
double mse_loss(const Tensor<T>& xhat, const Tensor<T>& x) {
    if (!xhat.same_shape(x)) {
        throw ShapeError("mse_loss: shape mismatch " + xhat.shape_string() + " vs " + x.shape_string());
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < xhat.numel(); ++i) {
        const double d = static_cast<double>(xhat[i]) - static_cast<double>(x[i]);
        sum += d * d;
    }
    return sum / static_cast<double>(xhat.numel());
}

template <typename T>
Tensor<T> mse_loss_grad(const Tensor<T>& xhat, const Tensor<T>& x) {
    if (!xhat.same_shape(x)) {
        throw ShapeError("mse_loss_grad: shape mismatch " + xhat.shape_string() + " vs " +
                         x.shape_string());
    }
    Tensor<T> grad(xhat.shape());
    const T scale = T(2) / static_cast<T>(xhat.numel());
    for (std::size_t i = 0; i < xhat.numel(); ++i) grad[i] = scale * (xhat[i] - x[i]);
    return grad;
}

namespace {

template <typename T>
Extents3 extents_of(const Tensor<T>& t) {
    return {t.dim(1), t.dim(2), t.dim(3)};
}

// What one convolution layer keeps around for its backward pass: its input
// and its pre-activation output.
template <typename T>
struct LayerCache {
    Tensor<T> input;
    Tensor<T> pre;

    std::size_t bytes() const { return input.bytes() + pre.bytes(); }
};

template <typename T>
Tensor<T> layer_forward_cached(const ConvLayer<T>& layer, Tensor<T> x, LayerCache<T>& cache,
                               ActivationLedger& ledger) {
    cache.input = std::move(x);
    cache.pre = layer.transposed
                    ? conv3d_transposed_forward(cache.input, layer.weights, layer.bias, layer.spec,
                                                layer.output_padding)
                    : conv3d_forward(cache.input, layer.weights, layer.bias, layer.spec);
    ledger.retain(cache.input.bytes());
    ledger.retain(cache.pre.bytes());
    return layer.lrelu_slope > T(0) ? leaky_relu(cache.pre, layer.lrelu_slope) : cache.pre;
}

template <typename T>
void release_layer_cache(LayerCache<T>& cache, ActivationLedger& ledger) {
    ledger.release(cache.input.bytes());
    ledger.release(cache.pre.bytes());
    cache = LayerCache<T>{};
}

template <typename T>
struct LayerGrads {
    Tensor<T> weights, bias, input;
};

template <typename T>
LayerGrads<T> layer_backward(const ConvLayer<T>& layer, const LayerCache<T>& cache,
                             const Tensor<T>& grad_out) {
    Tensor<T> gpre_store;
    const Tensor<T>* gpre = &grad_out;
    if (layer.lrelu_slope > T(0)) {
        gpre_store = leaky_relu_backward(cache.pre, grad_out, layer.lrelu_slope);
        gpre = &gpre_store;
    }
    LayerGrads<T> grads;
    if (layer.transposed) {
        // The upsampling direction is the adjoint of spec's convolution, so
        // its data gradient is that convolution itself, and its weight
        // gradient swaps the roles of input and output gradient.
        grads.input = conv3d_forward(*gpre, layer.weights, Tensor<T>{}, layer.spec);
        grads.weights = conv3d_backward_weights(cache.input, *gpre, layer.spec).first;
        grads.bias = sum_per_channel(*gpre);
    } else {
        grads.input = conv3d_backward_data(*gpre, layer.weights, layer.spec, extents_of(cache.input));
        auto [gw, gb] = conv3d_backward_weights(*gpre, cache.input, layer.spec);
        grads.weights = std::move(gw);
        grads.bias = std::move(gb);
    }
    return grads;
}

// What one residual branch keeps for its backward pass. The branch output
// needs no cache: additive coupling passes its gradient through unchanged.
template <typename T>
struct GroupFnCache {
    Tensor<T> input;  // branch input
    Tensor<T> pre1;   // first conv output, pre-activation
    Tensor<T> hidden; // activated pre1; the second conv's input
};

template <typename T>
Tensor<T> group_fn_forward_cached(const GroupFn<T>& fn, Tensor<T> x, GroupFnCache<T>& cache,
                                  ActivationLedger& ledger) {
    cache.input = std::move(x);
    cache.pre1 = conv3d_forward(cache.input, fn.conv1.weights, fn.conv1.bias, fn.conv1.spec);
    cache.hidden = leaky_relu(cache.pre1, fn.conv1.lrelu_slope);
    ledger.retain(cache.input.bytes());
    ledger.retain(cache.pre1.bytes());
    ledger.retain(cache.hidden.bytes());
    return conv3d_forward(cache.hidden, fn.conv2.weights, fn.conv2.bias, fn.conv2.spec);
}

template <typename T>
void release_fn_caches(std::vector<GroupFnCache<T>>& caches, ActivationLedger& ledger) {
    for (auto& cache : caches) {
        ledger.release(cache.input.bytes());
        ledger.release(cache.pre1.bytes());
        ledger.release(cache.hidden.bytes());
    }
    caches.clear();
}

template <typename T>
struct GroupFnGrads {
    Tensor<T> w1, b1, w2, b2;
};

template <typename T>
std::pair<Tensor<T>, GroupFnGrads<T>> group_fn_backward(const GroupFn<T>& fn,
                                                        const GroupFnCache<T>& cache,
                                                        const Tensor<T>& grad_out) {
    GroupFnGrads<T> g;
    auto [gw2, gb2] = conv3d_backward_weights(grad_out, cache.hidden, fn.conv2.spec);
    g.w2 = std::move(gw2);
    g.b2 = std::move(gb2);
    Tensor<T> ghidden =
        conv3d_backward_data(grad_out, fn.conv2.weights, fn.conv2.spec, extents_of(cache.hidden));
    Tensor<T> gpre1 = leaky_relu_backward(cache.pre1, ghidden, fn.conv1.lrelu_slope);
    auto [gw1, gb1] = conv3d_backward_weights(gpre1, cache.input, fn.conv1.spec);
    g.w1 = std::move(gw1);
    g.b1 = std::move(gb1);
    Tensor<T> ginput =
        conv3d_backward_data(gpre1, fn.conv1.weights, fn.conv1.spec, extents_of(cache.input));
    return {std::move(ginput), std::move(g)};
}

template <typename T>
void store_grad(std::map<std::string, Tensor<T>>& grads, const std::string& name, Tensor<T> g) {
    grads.emplace(name, std::move(g));
}

template <typename T>
void store_layer_grads(std::map<std::string, Tensor<T>>& grads, const std::string& prefix,
                       LayerGrads<T>& g) {
    store_grad(grads, prefix + ".weight", std::move(g.weights));
    store_grad(grads, prefix + ".bias", std::move(g.bias));
}

template <typename T>
void store_fn_grads(std::map<std::string, Tensor<T>>& grads, std::size_t block, std::size_t fn,
                    GroupFnGrads<T>& g) {
    const std::string prefix = "block." + std::to_string(block) + ".fn." + std::to_string(fn);
    store_grad(grads, prefix + ".conv1.weight", std::move(g.w1));
    store_grad(grads, prefix + ".conv1.bias", std::move(g.b1));
    store_grad(grads, prefix + ".conv2.weight", std::move(g.w2));
    store_grad(grads, prefix + ".conv2.bias", std::move(g.b2));
}

// Forward through one block, caching every branch's internals.
template <typename T>
Tensor<T> block_forward_cached(const RevBlock<T>& block, const Tensor<T>& h,
                               std::vector<GroupFnCache<T>>& caches, ActivationLedger& ledger) {
    const std::size_t m = block.groups(), gc = h.dim(0) / m;
    caches.resize(m);
    std::vector<Tensor<T>> g(m), out(m);
    for (std::size_t i = 0; i < m; ++i) g[i] = h.slice0(i * gc, (i + 1) * gc);
    out[0] = g[m - 1] + group_fn_forward_cached(block.fns[0], g[0], caches[0], ledger);
    for (std::size_t i = 1; i < m; ++i)
        out[i] = g[m - 1 - i] + group_fn_forward_cached(block.fns[i], out[i - 1], caches[i], ledger);
    return Tensor<T>::concat0(out);
}

// Invert one block, caching the branch internals evaluated along the way.
// The branches run on exactly the inputs the backward pass needs (the output
// groups and the recovered first group), so no further forward is required.
template <typename T>
Tensor<T> block_inverse_cached(const RevBlock<T>& block, const Tensor<T>& h_next,
                               std::vector<GroupFnCache<T>>& caches, ActivationLedger& ledger) {
    const std::size_t m = block.groups(), gc = h_next.dim(0) / m;
    caches.resize(m);
    std::vector<Tensor<T>> o(m), g(m);
    for (std::size_t i = 0; i < m; ++i) o[i] = h_next.slice0(i * gc, (i + 1) * gc);
    for (std::size_t i = 0; i + 1 < m; ++i) {
        const std::size_t j = m - 1 - i;
        g[i] = o[j] - group_fn_forward_cached(block.fns[j], o[j - 1], caches[j], ledger);
    }
    g[m - 1] = o[0] - group_fn_forward_cached(block.fns[0], g[0], caches[0], ledger);
    return Tensor<T>::concat0(g);
}

// Gradient of one block given the cached branch internals. Walks the coupling
// chain backwards, merging the identity path with each branch's contribution.
template <typename T>
Tensor<T> block_backward(const RevBlock<T>& block, std::size_t block_index,
                         const std::vector<GroupFnCache<T>>& caches, const Tensor<T>& grad_out,
                         std::map<std::string, Tensor<T>>& grads) {
    const std::size_t m = block.groups(), gc = grad_out.dim(0) / m;
    std::vector<Tensor<T>> d_out(m), d_g(m);
    for (std::size_t i = 0; i < m; ++i) d_out[i] = grad_out.slice0(i * gc, (i + 1) * gc);

    Tensor<T> delta = d_out[m - 1];
    for (std::size_t i = m - 1; i >= 1; --i) {
        d_g[m - 1 - i] = delta;
        auto [ginput, fn_grads] = group_fn_backward(block.fns[i], caches[i], delta);
        store_fn_grads(grads, block_index, i, fn_grads);
        delta = d_out[i - 1] + ginput;
    }
    d_g[m - 1] = delta;
    auto [ginput0, fn_grads0] = group_fn_backward(block.fns[0], caches[0], delta);
    store_fn_grads(grads, block_index, 0, fn_grads0);
    d_g[0] += ginput0;
    return Tensor<T>::concat0(d_g);
}

template <typename T>
void check_input(const Network<T>& net, const Tensor<T>& input, const Tensor<T>& x_true) {
    if (input.rank() != 4) {
        throw ShapeError("backward: expected network input [c, B, nx, ny], got " +
                         input.shape_string());
    }
    if (x_true.rank() != 4 || x_true.dim(0) != net.config.out_channels()) {
        throw ShapeError("backward: expected ground truth [" +
                         std::to_string(net.config.out_channels()) + ", B, nx, ny], got " +
                         x_true.shape_string());
    }
}

template <typename T>
Tensor<T> loss_gradient(double& loss_out, const Tensor<T>& xhat, const Tensor<T>& x_true) {
    loss_out = mse_loss(xhat, x_true);
    if (!std::isfinite(loss_out)) throw NumericalError("backward: loss is not finite");
    return mse_loss_grad(xhat, x_true);
}

template <typename T>
MemReport finish(const ActivationLedger& ledger, Engine engine) {
    if (ledger.current_bytes() != 0 || ledger.current_count() != 0) {
        throw Error("backward: activation ledger left unbalanced (engine bug)");
    }
    MemReport mem;
    mem.engine = engine;
    mem.peak_activation_bytes = ledger.peak_bytes();
    mem.stored_tensor_count = ledger.peak_count();
    return mem;
}

} // namespace

template <typename T>
std::pair<GradReport<T>, MemReport> backward_naive(const Network<T>& net, const Tensor<T>& input,
                                                   const Tensor<T>& x_true) {
    check_input(net, input, x_true);
    ActivationLedger ledger;
    GradReport<T> report;

    std::vector<LayerCache<T>> fe(net.feature.size());
    Tensor<T> h = input;
    for (std::size_t i = 0; i < net.feature.size(); ++i)
        h = layer_forward_cached(net.feature[i], std::move(h), fe[i], ledger);

    std::vector<std::vector<GroupFnCache<T>>> stack(net.blocks.size());
    for (std::size_t l = 0; l < net.blocks.size(); ++l)
        h = block_forward_cached(net.blocks[l], h, stack[l], ledger);

    std::vector<LayerCache<T>> head(net.head.size());
    for (std::size_t i = 0; i < net.head.size(); ++i)
        h = layer_forward_cached(net.head[i], std::move(h), head[i], ledger);

    Tensor<T> d = loss_gradient(report.loss, h, x_true);

    for (std::size_t i = net.head.size(); i-- > 0;) {
        LayerGrads<T> g = layer_backward(net.head[i], head[i], d);
        store_layer_grads(report.grads, "head." + std::to_string(i), g);
        d = std::move(g.input);
        release_layer_cache(head[i], ledger);
    }
    for (std::size_t l = net.blocks.size(); l-- > 0;) {
        d = block_backward(net.blocks[l], l, stack[l], d, report.grads);
        release_fn_caches(stack[l], ledger);
    }
    for (std::size_t i = net.feature.size(); i-- > 0;) {
        LayerGrads<T> g = layer_backward(net.feature[i], fe[i], d);
        store_layer_grads(report.grads, "feature." + std::to_string(i), g);
        d = std::move(g.input);
        release_layer_cache(fe[i], ledger);
    }
    return {std::move(report), finish<T>(ledger, Engine::naive)};
}

template <typename T>
std::pair<GradReport<T>, MemReport> backward_reversible(const Network<T>& net,
                                                        const Tensor<T>& input,
                                                        const Tensor<T>& x_true) {
    check_input(net, input, x_true);
    ActivationLedger ledger;
    GradReport<T> report;

    std::vector<LayerCache<T>> fe(net.feature.size());
    Tensor<T> h = input;
    for (std::size_t i = 0; i < net.feature.size(); ++i)
        h = layer_forward_cached(net.feature[i], std::move(h), fe[i], ledger);

    // The stack runs without caches; only its final activation is kept.
    for (const auto& block : net.blocks) h = rev_block_forward(block, h);
    Tensor<T> stack_out = h;
    ledger.retain(stack_out.bytes());

    std::vector<LayerCache<T>> head(net.head.size());
    for (std::size_t i = 0; i < net.head.size(); ++i)
        h = layer_forward_cached(net.head[i], std::move(h), head[i], ledger);

    Tensor<T> d = loss_gradient(report.loss, h, x_true);

    for (std::size_t i = net.head.size(); i-- > 0;) {
        LayerGrads<T> g = layer_backward(net.head[i], head[i], d);
        store_layer_grads(report.grads, "head." + std::to_string(i), g);
        d = std::move(g.input);
        release_layer_cache(head[i], ledger);
    }

    // Walk the stack backwards, recomputing each block's input from its
    // output and dropping it again as soon as its gradient is done.
    Tensor<T> cur = std::move(stack_out);
    for (std::size_t l = net.blocks.size(); l-- > 0;) {
        std::vector<GroupFnCache<T>> caches;
        Tensor<T> prev = block_inverse_cached(net.blocks[l], cur, caches, ledger);
        if (!prev.all_finite()) {
            throw NumericalError("backward_reversible: recomputed activation entering block " +
                                 std::to_string(l) + " is not finite");
        }
        ledger.retain(prev.bytes());
        d = block_backward(net.blocks[l], l, caches, d, report.grads);
        release_fn_caches(caches, ledger);
        ledger.release(cur.bytes());
        cur = std::move(prev);
    }
    ledger.release(cur.bytes());
    cur = Tensor<T>{};

    for (std::size_t i = net.feature.size(); i-- > 0;) {
        LayerGrads<T> g = layer_backward(net.feature[i], fe[i], d);
        store_layer_grads(report.grads, "feature." + std::to_string(i), g);
        d = std::move(g.input);
        release_layer_cache(fe[i], ledger);
    }
    return {std::move(report), finish<T>(ledger, Engine::reversible)};
}

template <typename T>
std::pair<GradReport<T>, MemReport> backward(const Network<T>& net, const Tensor<T>& input,
                                             const Tensor<T>& x_true, Engine engine) {
    return engine == Engine::naive ? backward_naive(net, input, x_true)
                                   : backward_reversible(net, input, x_true);
}

template <typename T>
std::pair<GradReport<T>, MemReport> backward(const Network<T>& net, const CoarseEstimate<T>& ce,
                                             const Tensor<T>& x_true, Engine engine) {
    return backward(net, network_input(ce), x_true, engine);
}

#define REVSCI_INSTANTIATE_ENGINE(T)                                                              \
    template double mse_loss<T>(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> mse_loss_grad<T>(const Tensor<T>&, const Tensor<T>&);                      \
    template std::pair<GradReport<T>, MemReport> backward_naive<T>(const Network<T>&,             \
                                                                   const Tensor<T>&,              \
                                                                   const Tensor<T>&);             \
    template std::pair<GradReport<T>, MemReport> backward_reversible<T>(const Network<T>&,        \
                                                                        const Tensor<T>&,         \
                                                                        const Tensor<T>&);        \
    template std::pair<GradReport<T>, MemReport> backward<T>(const Network<T>&, const Tensor<T>&, \
                                                             const Tensor<T>&, Engine);           \
    template std::pair<GradReport<T>, MemReport> backward<T>(const Network<T>&,                   \
                                                             const CoarseEstimate<T>&,            \
                                                             const Tensor<T>&, Engine);

REVSCI_INSTANTIATE_ENGINE(float)
REVSCI_INSTANTIATE_ENGINE(double)

#undef REVSCI_INSTANTIATE_ENGINE

} // namespace revsci
