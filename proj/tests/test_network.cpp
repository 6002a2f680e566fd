// Reversible network: shape contracts, coupling-structure transcription
// oracles, round-trip invertibility, parameter enumeration, checkpoints.

#include <doctest.h>

#include <filesystem>
#include <set>

#include "revsci/checkpoint.hpp"
#include "revsci/errors.hpp"
#include "revsci/network.hpp"
#include "revsci/rng.hpp"

using namespace revsci;
namespace fs = std::filesystem;

namespace {

NetworkConfig tiny_config(std::size_t c1, std::size_t m, std::size_t L, std::size_t B,
                          bool color = false) {
    NetworkConfig config;
    config.c1 = c1;
    config.m = m;
    config.L = L;
    config.B = B;
    config.color = color;
    config.dtype = Dtype::f64;
    config.seed = 77;
    return config;
}

// Extract group g (of m) from the channel axis of [C, T, H, W].
template <typename T>
Tensor<T> take_group(const Tensor<T>& h, std::size_t g, std::size_t m) {
    const std::size_t gc = h.dim(0) / m;
    return h.slice0(g * gc, (g + 1) * gc);
}

template <typename T>
void set_all(Network<T>& net, T value) {
    for (auto& p : parameters(net))
        for (std::size_t i = 0; i < p.tensor->numel(); ++i) (*p.tensor)[i] = value;
}

} // namespace

TEST_CASE("config validation") {
    NetworkConfig config = tiny_config(8, 2, 2, 4);
    CHECK_NOTHROW(config.validate());
    config.m = 3; // 3 does not divide 8
    CHECK_THROWS_AS(config.validate(), ValueError);
    config.m = 0;
    CHECK_THROWS_AS(config.validate(), ValueError);
    config = tiny_config(8, 2, 0, 4);
    CHECK_THROWS_AS(config.validate(), ValueError);
}

TEST_CASE("config json round trip") {
    NetworkConfig config = tiny_config(16, 4, 3, 8, true);
    config.dtype = Dtype::f32;
    NetworkConfig back = network_config_from_json(to_json(config));
    CHECK(back.c1 == 16);
    CHECK(back.m == 4);
    CHECK(back.L == 3);
    CHECK(back.B == 8);
    CHECK(back.color == true);
    CHECK(back.dtype == Dtype::f32);
    CHECK(back.seed == 77);
}

TEST_CASE("feature extraction halves spatial extents in the grayscale path") {
    Network<double> net = build_network<double>(tiny_config(16, 2, 1, 8));
    Rng rng(1);
    Tensor<double> x = Tensor<double>::uniform({1, 8, 64, 64}, rng, 0.0, 1.0);
    Tensor<double> h = feature_extract(net, x);
    CHECK(h.shape() == Tensor<double>::Shape{16, 8, 32, 32});
}

TEST_CASE("feature extraction keeps extents in the color path") {
    Network<double> net = build_network<double>(tiny_config(16, 2, 1, 8, true));
    Rng rng(2);
    Tensor<double> x = Tensor<double>::uniform({4, 8, 32, 32}, rng, 0.0, 1.0);
    Tensor<double> h = feature_extract(net, x);
    CHECK(h.shape() == Tensor<double>::Shape{16, 8, 32, 32});
}

TEST_CASE("feature extraction of zeros with zero biases is zero") {
    Network<double> net = build_network<double>(tiny_config(8, 2, 1, 2));
    // Biases are already zero-initialized; zero input stays zero through
    // every conv and through LeakyReLU.
    Tensor<double> h = feature_extract(net, Tensor<double>({1, 2, 16, 16}));
    CHECK(h.max_abs_diff(Tensor<double>(h.shape())) == 0.0);
}

TEST_CASE("reconstruction head restores full resolution") {
    Network<double> gray = build_network<double>(tiny_config(16, 2, 1, 8));
    Rng rng(3);
    Tensor<double> h = Tensor<double>::uniform({16, 8, 32, 32}, rng, -1.0, 1.0);
    CHECK(reconstruct_head(gray, h).shape() == Tensor<double>::Shape{1, 8, 64, 64});

    Network<double> color = build_network<double>(tiny_config(16, 2, 1, 8, true));
    CHECK(reconstruct_head(color, h).shape() == Tensor<double>::Shape{3, 8, 64, 64});
}

TEST_CASE("zero-initialized network maps any input to zero") {
    Network<double> net = build_network<double>(tiny_config(8, 2, 2, 4));
    set_all(net, 0.0);
    Rng rng(4);
    Tensor<double> x = Tensor<double>::uniform({1, 4, 16, 16}, rng, 0.0, 1.0);
    Tensor<double> y = forward(net, x);
    CHECK(y.shape() == Tensor<double>::Shape{1, 4, 16, 16});
    CHECK(y.max_abs_diff(Tensor<double>(y.shape())) == 0.0);
}

TEST_CASE("zero-parameter block reverses group order in both directions") {
    Network<double> net = build_network<double>(tiny_config(8, 4, 1, 2));
    set_all(net, 0.0);
    const RevBlock<double>& block = net.blocks[0];
    Rng rng(5);
    Tensor<double> h = Tensor<double>::uniform({8, 2, 4, 4}, rng, -1.0, 1.0);

    Tensor<double> out = rev_block_forward(block, h);
    for (std::size_t g = 0; g < 4; ++g)
        CHECK(take_group(out, g, 4).bit_equal(take_group(h, 3 - g, 4)));

    Tensor<double> back = rev_block_inverse(block, h);
    for (std::size_t g = 0; g < 4; ++g)
        CHECK(take_group(back, g, 4).bit_equal(take_group(h, 3 - g, 4)));
}

TEST_CASE("m=2 coupling matches the hand-coded two-branch form") {
    Network<double> net = build_network<double>(tiny_config(8, 2, 1, 2));
    const RevBlock<double>& block = net.blocks[0];
    Rng rng(6);
    Tensor<double> h = Tensor<double>::uniform({8, 2, 4, 4}, rng, -1.0, 1.0);

    Tensor<double> g0 = take_group(h, 0, 2), g1 = take_group(h, 1, 2);
    Tensor<double> out0 = g1 + group_fn_forward(block.fns[0], g0);
    Tensor<double> out1 = g0 + group_fn_forward(block.fns[1], out0);
    Tensor<double> expected = Tensor<double>::concat0({out0, out1});

    CHECK(rev_block_forward(block, h).bit_equal(expected));
}

TEST_CASE("m=4 block matches an independent straight-line transcription") {
    Network<double> net = build_network<double>(tiny_config(8, 4, 1, 2));
    const RevBlock<double>& block = net.blocks[0];
    Rng rng(7);
    Tensor<double> h = Tensor<double>::uniform({8, 2, 4, 4}, rng, -1.0, 1.0);

    Tensor<double> g0 = take_group(h, 0, 4), g1 = take_group(h, 1, 4);
    Tensor<double> g2 = take_group(h, 2, 4), g3 = take_group(h, 3, 4);
    Tensor<double> o0 = g3 + group_fn_forward(block.fns[0], g0);
    Tensor<double> o1 = g2 + group_fn_forward(block.fns[1], o0);
    Tensor<double> o2 = g1 + group_fn_forward(block.fns[2], o1);
    Tensor<double> o3 = g0 + group_fn_forward(block.fns[3], o2);
    CHECK(rev_block_forward(block, h).bit_equal(Tensor<double>::concat0({o0, o1, o2, o3})));

    // And the inverse, transcribed independently from the update equations.
    Tensor<double> out = rev_block_forward(block, h);
    Tensor<double> q0 = take_group(out, 0, 4), q1 = take_group(out, 1, 4);
    Tensor<double> q2 = take_group(out, 2, 4), q3 = take_group(out, 3, 4);
    Tensor<double> r0 = q3 - group_fn_forward(block.fns[3], q2);
    Tensor<double> r1 = q2 - group_fn_forward(block.fns[2], q1);
    Tensor<double> r2 = q1 - group_fn_forward(block.fns[1], q0);
    Tensor<double> r3 = q0 - group_fn_forward(block.fns[0], r0);
    CHECK(rev_block_inverse(block, out).bit_equal(Tensor<double>::concat0({r0, r1, r2, r3})));
}

TEST_CASE("block round trip: 64-bit tight, 32-bit loose") {
    Network<double> net64 = build_network<double>(tiny_config(8, 2, 1, 4));
    Rng rng(8);
    Tensor<double> h = Tensor<double>::uniform({8, 4, 4, 4}, rng, -1.0, 1.0);
    Tensor<double> rt = rev_block_inverse(net64.blocks[0], rev_block_forward(net64.blocks[0], h));
    CHECK(rt.max_abs_diff(h) < 1e-12);

    NetworkConfig c32 = tiny_config(8, 2, 1, 4);
    c32.dtype = Dtype::f32;
    Network<float> net32 = build_network<float>(c32);
    Tensor<float> hf = Tensor<float>::uniform({8, 4, 4, 4}, rng, -1.0f, 1.0f);
    Tensor<float> rtf =
        rev_block_inverse(net32.blocks[0], rev_block_forward(net32.blocks[0], hf));
    CHECK(rtf.max_abs_diff(hf) < 1e-5f);
}

TEST_CASE("stack of 10 blocks round trips under 1e-10") {
    Network<double> net = build_network<double>(tiny_config(8, 2, 10, 2));
    Rng rng(9);
    Tensor<double> h = Tensor<double>::uniform({8, 2, 4, 4}, rng, -1.0, 1.0);
    Tensor<double> rt = rev_stack_inverse(net, rev_stack_forward(net, h));
    CHECK(rt.max_abs_diff(h) < 1e-10);
}

TEST_CASE("zero-parameter stack is the identity for even L, reversal for odd L") {
    Rng rng(10);
    Tensor<double> h = Tensor<double>::uniform({8, 2, 4, 4}, rng, -1.0, 1.0);

    Network<double> even = build_network<double>(tiny_config(8, 4, 4, 2));
    set_all(even, 0.0);
    CHECK(rev_stack_forward(even, h).bit_equal(h));

    Network<double> odd = build_network<double>(tiny_config(8, 4, 3, 2));
    set_all(odd, 0.0);
    Tensor<double> out = rev_stack_forward(odd, h);
    for (std::size_t g = 0; g < 4; ++g)
        CHECK(take_group(out, g, 4).bit_equal(take_group(h, 3 - g, 4)));
}

TEST_CASE("full forward matches a layer-by-layer composition") {
    NetworkConfig config = tiny_config(4, 2, 2, 4);
    Network<double> net = build_network<double>(config);
    Rng rng(11);
    Tensor<double> x = Tensor<double>::uniform({1, 4, 16, 16}, rng, 0.0, 1.0);

    Tensor<double> h = x;
    for (const auto& layer : net.feature) h = conv_layer_forward(layer, h);
    for (const auto& block : net.blocks) {
        // Straight-line m=2 coupling, as in the dedicated block test.
        Tensor<double> g0 = take_group(h, 0, 2), g1 = take_group(h, 1, 2);
        Tensor<double> o0 = g1 + group_fn_forward(block.fns[0], g0);
        Tensor<double> o1 = g0 + group_fn_forward(block.fns[1], o0);
        h = Tensor<double>::concat0({o0, o1});
    }
    for (const auto& layer : net.head) h = conv_layer_forward(layer, h);

    CHECK(forward(net, x).bit_equal(h));
}

TEST_CASE("forward from a coarse estimate matches the tensor overload") {
    Network<double> net = build_network<double>(tiny_config(8, 2, 1, 2));
    Rng rng(12);
    CoarseEstimate<double> ce;
    ce.color = false;
    ce.frames = Tensor<double>::uniform({2, 16, 16}, rng, 0.0, 1.0);
    Tensor<double> via_ce = forward(net, ce);
    Tensor<double> via_tensor = forward(net, network_input(ce));
    CHECK(via_ce.bit_equal(via_tensor));
    CHECK(via_ce.shape() == Tensor<double>::Shape{1, 2, 16, 16});
}

TEST_CASE("parameter enumeration is stable, named, and complete") {
    Network<double> a = build_network<double>(tiny_config(8, 2, 2, 4));
    Network<double> b = build_network<double>(tiny_config(8, 2, 2, 4));
    auto pa = parameters(a);
    auto pb = parameters(b);
    REQUIRE(pa.size() == pb.size());
    std::set<std::string> names;
    std::size_t total = 0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        names.insert(pa[i].name);
        total += pa[i].tensor->numel();
    }
    CHECK(names.size() == pa.size()); // no duplicate names
    CHECK(total == count_parameters(a));
    CHECK(names.count("feature.0.weight") == 1);
    CHECK(names.count("block.1.fn.1.conv2.bias") == 1);
    CHECK(names.count("head.3.weight") == 1);
}

TEST_CASE("count_parameters formula checks") {
    // A 1x1x1 conv from 2 to 3 channels with bias holds 2*3 + 3 = 9 numbers.
    ConvLayer<double> tiny;
    tiny.spec.in_channels = 2;
    tiny.spec.out_channels = 3;
    tiny.spec.kernel = {1, 1, 1};
    tiny.spec.stride = {1, 1, 1};
    tiny.spec.padding = {0, 0, 0};
    tiny.weights = Tensor<double>({3, 2, 1, 1, 1});
    tiny.bias = Tensor<double>({3});
    CHECK(tiny.weights.numel() + tiny.bias.numel() == 9);

    // Marginal cost of one extra reversible block at m=2: each of the m group
    // functions holds two 3x3x3 convs of width c1/m plus biases.
    const std::size_t c1 = 64, m = 2, gc = c1 / m;
    Network<double> l1 = build_network<double>(tiny_config(c1, m, 1, 2));
    Network<double> l2 = build_network<double>(tiny_config(c1, m, 2, 2));
    const std::size_t marginal = count_parameters(l2) - count_parameters(l1);
    CHECK(marginal == m * 2 * (27 * gc * gc + gc));
    // Reference point for full-size configs: the marginal block cost at
    // c1=64, m=2 comes to 110720 parameters.
    CHECK(marginal == 110720);
}

TEST_CASE("checkpoint round trip preserves every parameter bit") {
    const fs::path dir = fs::temp_directory_path() / "revsci_test_ckpt";
    fs::remove_all(dir);
    NetworkConfig config = tiny_config(8, 2, 2, 4);
    Network<double> net = build_network<double>(config);
    save_checkpoint(net, dir);

    NetworkConfig loaded_config = read_checkpoint_config(dir);
    CHECK(loaded_config.c1 == 8);
    CHECK(loaded_config.dtype == Dtype::f64);

    Network<double> loaded = load_checkpoint<double>(dir);
    auto pa = parameters(net);
    auto pb = parameters(loaded);
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].tensor->bit_equal(*pb[i].tensor));

    // Loading with the wrong scalar type is refused.
    CHECK_THROWS_AS(load_checkpoint<float>(dir), ValueError);
    fs::remove_all(dir);
}

TEST_CASE("initialization is seeded and seed-sensitive") {
    Network<double> a = build_network<double>(tiny_config(8, 2, 1, 2));
    Network<double> b = build_network<double>(tiny_config(8, 2, 1, 2));
    NetworkConfig other = tiny_config(8, 2, 1, 2);
    other.seed = 78;
    Network<double> c = build_network<double>(other);

    auto pa = parameters(a), pb = parameters(b), pc = parameters(c);
    bool all_equal = true, any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        all_equal &= pa[i].tensor->bit_equal(*pb[i].tensor);
        any_diff |= !pa[i].tensor->bit_equal(*pc[i].tensor);
    }
    CHECK(all_equal);
    CHECK(any_diff);
}
