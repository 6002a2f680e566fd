// 3D convolution kernels checked against an independent brute-force oracle,
// adjoint identities, and finite differences. The oracle below is written as
// plain nested loops with signed index arithmetic on purpose — it shares no
// code with the library kernels.

#include <doctest.h>

#include <cmath>

#include "revsci/conv3d.hpp"
#include "revsci/errors.hpp"
#include "revsci/rng.hpp"
#include "revsci/tensor.hpp"

using namespace revsci;

namespace {

// Direct transcription of the convolution definition: for every output site,
// sum weight * input over the kernel window, treating out-of-range input as 0.
template <typename T>
Tensor<T> conv_oracle(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                      const Conv3dSpec& spec) {
    const Extents3 out = spec.output_extents({x.dim(1), x.dim(2), x.dim(3)});
    Tensor<T> y({spec.out_channels, out[0], out[1], out[2]});
    for (std::size_t co = 0; co < spec.out_channels; ++co)
        for (std::size_t to = 0; to < out[0]; ++to)
            for (std::size_t ho = 0; ho < out[1]; ++ho)
                for (std::size_t wo = 0; wo < out[2]; ++wo) {
                    double acc = b.empty() ? 0.0 : static_cast<double>(b[co]);
                    for (std::size_t ci = 0; ci < spec.in_channels; ++ci)
                        for (std::size_t kt = 0; kt < spec.kernel[0]; ++kt)
                            for (std::size_t kh = 0; kh < spec.kernel[1]; ++kh)
                                for (std::size_t kw = 0; kw < spec.kernel[2]; ++kw) {
                                    const long long ti =
                                        static_cast<long long>(to * spec.stride[0] + kt) -
                                        static_cast<long long>(spec.padding[0]);
                                    const long long hi =
                                        static_cast<long long>(ho * spec.stride[1] + kh) -
                                        static_cast<long long>(spec.padding[1]);
                                    const long long wi =
                                        static_cast<long long>(wo * spec.stride[2] + kw) -
                                        static_cast<long long>(spec.padding[2]);
                                    if (ti < 0 || ti >= static_cast<long long>(x.dim(1)) ||
                                        hi < 0 || hi >= static_cast<long long>(x.dim(2)) ||
                                        wi < 0 || wi >= static_cast<long long>(x.dim(3)))
                                        continue;
                                    acc += static_cast<double>(w.at({co, ci, kt, kh, kw})) *
                                           static_cast<double>(x.at(
                                               {ci, static_cast<std::size_t>(ti),
                                                static_cast<std::size_t>(hi),
                                                static_cast<std::size_t>(wi)}));
                                }
                    y(co, to, ho, wo) = static_cast<T>(acc);
                }
    return y;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
    REQUIRE(a.same_shape(b));
    double acc = 0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

Conv3dSpec make_spec(std::size_t cin, std::size_t cout, Extents3 kernel, Extents3 stride,
                     Extents3 padding) {
    Conv3dSpec spec;
    spec.in_channels = cin;
    spec.out_channels = cout;
    spec.kernel = kernel;
    spec.stride = stride;
    spec.padding = padding;
    return spec;
}

} // namespace

TEST_CASE("conv3d 1x1x1 kernel with weight 2 scales the input") {
    const Conv3dSpec spec = make_spec(1, 1, {1, 1, 1}, {1, 1, 1}, {0, 0, 0});
    Rng rng(1);
    TensorD x = TensorD::uniform({1, 2, 3, 3}, rng, -1.0, 1.0);
    TensorD w = TensorD::full({1, 1, 1, 1, 1}, 2.0);
    TensorD b({1});
    TensorD y = conv3d_forward(x, w, b, spec);
    REQUIRE(y.same_shape(x));
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == 2.0 * x[i]);
}

TEST_CASE("conv3d delta kernel with padding 1 is the identity") {
    const Conv3dSpec spec = make_spec(1, 1, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
    Rng rng(2);
    TensorD x = TensorD::uniform({1, 3, 4, 5}, rng, -1.0, 1.0);
    TensorD w({1, 1, 3, 3, 3});
    w.at({0, 0, 1, 1, 1}) = 1.0; // discrete delta
    TensorD y = conv3d_forward(x, w, TensorD({1}), spec);
    REQUIRE(y.same_shape(x));
    CHECK(y.max_abs_diff(x) == 0.0);
}

TEST_CASE("conv3d matches the brute-force loop oracle") {
    Rng rng(3);
    struct Case {
        std::size_t cin, cout;
        TensorD::Shape in;
        Extents3 kernel, stride, padding;
    };
    const Case cases[] = {
        {1, 1, {1, 1, 5, 5}, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}},
        {2, 3, {2, 4, 6, 5}, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}},
        {3, 2, {3, 5, 8, 8}, {5, 5, 5}, {1, 1, 1}, {2, 2, 2}},
        {2, 2, {2, 4, 8, 8}, {3, 3, 3}, {1, 2, 2}, {1, 1, 1}},
        {1, 4, {1, 3, 7, 9}, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}},
        {2, 1, {2, 2, 6, 6}, {1, 3, 3}, {1, 2, 2}, {0, 1, 1}},
    };
    for (const Case& c : cases) {
        const Conv3dSpec spec = make_spec(c.cin, c.cout, c.kernel, c.stride, c.padding);
        TensorD x = TensorD::uniform(c.in, rng, -1.0, 1.0);
        TensorD w = TensorD::uniform({c.cout, c.cin, c.kernel[0], c.kernel[1], c.kernel[2]}, rng,
                                     -0.5, 0.5);
        TensorD b = TensorD::uniform({c.cout}, rng, -0.5, 0.5);
        TensorD fast = conv3d_forward(x, w, b, spec);
        TensorD slow = conv_oracle(x, w, b, spec);
        REQUIRE(fast.same_shape(slow));
        CHECK(fast.max_abs_diff(slow) < 1e-12);
    }
}

TEST_CASE("conv3d rejects mismatched channels") {
    const Conv3dSpec spec = make_spec(2, 1, {1, 1, 1}, {1, 1, 1}, {0, 0, 0});
    TensorD x({1, 2, 2, 2}); // one channel, spec wants two
    TensorD w({1, 2, 1, 1, 1});
    CHECK_THROWS_AS(conv3d_forward(x, w, TensorD({1}), spec), ShapeError);
}

TEST_CASE("conv3d adjoint identity between forward and backward_data") {
    Rng rng(4);
    struct Case {
        std::size_t cin, cout;
        TensorD::Shape in;
        Extents3 kernel, stride, padding;
    };
    const Case cases[] = {
        {2, 3, {2, 4, 6, 6}, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}},
        {1, 2, {1, 4, 8, 8}, {3, 3, 3}, {1, 2, 2}, {1, 1, 1}},
        {3, 1, {3, 5, 9, 7}, {5, 3, 3}, {1, 2, 2}, {2, 1, 1}},
    };
    for (const Case& c : cases) {
        const Conv3dSpec spec = make_spec(c.cin, c.cout, c.kernel, c.stride, c.padding);
        TensorD x = TensorD::uniform(c.in, rng, -1.0, 1.0);
        TensorD w = TensorD::uniform({c.cout, c.cin, c.kernel[0], c.kernel[1], c.kernel[2]}, rng,
                                     -0.5, 0.5);
        TensorD y = conv3d_forward(x, w, TensorD{}, spec);
        TensorD g = TensorD::uniform(y.shape(), rng, -1.0, 1.0);
        TensorD gx = conv3d_backward_data(g, w, spec, {c.in[1], c.in[2], c.in[3]});
        const double lhs = dot(g, y);
        const double rhs = dot(gx, x);
        CHECK(std::abs(lhs - rhs) / (std::abs(lhs) + 1e-30) < 1e-12);
    }
}

TEST_CASE("conv3d backward_weights satisfies the linear-in-weights identity") {
    // conv is linear in W, so <g, conv(x; W)> == <grad_W, W> and the bias
    // gradient is the per-channel sum of g.
    Rng rng(5);
    const Conv3dSpec spec = make_spec(2, 3, {3, 3, 3}, {1, 2, 2}, {1, 1, 1});
    TensorD x = TensorD::uniform({2, 3, 6, 6}, rng, -1.0, 1.0);
    TensorD w = TensorD::uniform({3, 2, 3, 3, 3}, rng, -0.5, 0.5);
    TensorD y = conv3d_forward(x, w, TensorD{}, spec);
    TensorD g = TensorD::uniform(y.shape(), rng, -1.0, 1.0);
    auto [gw, gb] = conv3d_backward_weights(g, x, spec);
    REQUIRE(gw.same_shape(w));
    CHECK(std::abs(dot(g, y) - dot(gw, w)) / (std::abs(dot(g, y)) + 1e-30) < 1e-12);

    TensorD expected_gb({3});
    for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0;
        for (std::size_t i = 0; i < y.dim(1) * y.dim(2) * y.dim(3); ++i)
            acc += g[c * y.dim(1) * y.dim(2) * y.dim(3) + i];
        expected_gb[c] = acc;
    }
    CHECK(gb.max_abs_diff(expected_gb) < 1e-12);
}

TEST_CASE("conv3d zero upstream gradient gives zero gradients") {
    const Conv3dSpec spec = make_spec(1, 1, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
    Rng rng(6);
    TensorD x = TensorD::uniform({1, 2, 4, 4}, rng, -1.0, 1.0);
    TensorD w = TensorD::uniform({1, 1, 3, 3, 3}, rng, -1.0, 1.0);
    TensorD g(x.shape()); // zeros
    CHECK(conv3d_backward_data(g, w, spec, {2, 4, 4}).max_abs_diff(TensorD(x.shape())) == 0.0);
    auto [gw, gb] = conv3d_backward_weights(g, x, spec);
    CHECK(gw.max_abs_diff(TensorD(w.shape())) == 0.0);
    CHECK(gb[0] == 0.0);
}

TEST_CASE("conv3d 1x1x1 weight gradient is the outer product of sums") {
    const Conv3dSpec spec = make_spec(2, 2, {1, 1, 1}, {1, 1, 1}, {0, 0, 0});
    Rng rng(7);
    TensorD x = TensorD::uniform({2, 2, 3, 3}, rng, -1.0, 1.0);
    TensorD g = TensorD::uniform({2, 2, 3, 3}, rng, -1.0, 1.0);
    auto [gw, gb] = conv3d_backward_weights(g, x, spec);
    const std::size_t plane = 2 * 3 * 3;
    for (std::size_t co = 0; co < 2; ++co)
        for (std::size_t ci = 0; ci < 2; ++ci) {
            double acc = 0;
            for (std::size_t i = 0; i < plane; ++i) acc += g[co * plane + i] * x[ci * plane + i];
            CHECK(gw.at({co, ci, 0, 0, 0}) == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("conv3d weight gradients match central finite differences") {
    Rng rng(8);
    const Conv3dSpec spec = make_spec(2, 2, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
    TensorD x = TensorD::uniform({2, 3, 4, 4}, rng, -1.0, 1.0);
    TensorD w = TensorD::uniform({2, 2, 3, 3, 3}, rng, -0.5, 0.5);
    TensorD b = TensorD::uniform({2}, rng, -0.5, 0.5);
    const Extents3 oe = spec.output_extents({x.dim(1), x.dim(2), x.dim(3)});
    TensorD g = TensorD::uniform({spec.out_channels, oe[0], oe[1], oe[2]}, rng, -1.0, 1.0);

    auto [gw, gb] = conv3d_backward_weights(g, x, spec);
    const double step = 1e-3;
    for (std::size_t i = 0; i < w.numel(); i += 17) { // sample every 17th weight
        const double saved = w[i];
        w[i] = saved + step;
        const double plus = dot(g, conv3d_forward(x, w, b, spec));
        w[i] = saved - step;
        const double minus = dot(g, conv3d_forward(x, w, b, spec));
        w[i] = saved;
        const double fd = (plus - minus) / (2 * step);
        CHECK(std::abs(fd - gw[i]) / std::max({std::abs(fd), std::abs(gw[i]), 1e-6}) < 1e-4);
    }
}

TEST_CASE("transposed conv geometry and hand-unrolled 2x upsampling") {
    Conv3dSpec spec = make_spec(1, 1, {1, 2, 2}, {1, 2, 2}, {0, 0, 0});
    // Weight layout is that of the forward conv whose adjoint this computes.
    TensorD w = TensorD::full({1, 1, 1, 2, 2}, 1.0);
    TensorD x({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    TensorD y = conv3d_transposed_forward(x, w, TensorD{}, spec);
    REQUIRE(y.shape() == TensorD::Shape{1, 1, 4, 4});
    // Each input value is copied into its own non-overlapping 2x2 tile.
    const double expect[16] = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    for (std::size_t i = 0; i < 16; ++i) CHECK(y[i] == expect[i]);
}

TEST_CASE("transposed conv with stride 1 delta kernel is the identity") {
    const Conv3dSpec spec = make_spec(1, 1, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
    TensorD w({1, 1, 3, 3, 3});
    w.at({0, 0, 1, 1, 1}) = 1.0;
    Rng rng(9);
    TensorD x = TensorD::uniform({1, 3, 4, 4}, rng, -1.0, 1.0);
    TensorD y = conv3d_transposed_forward(x, w, TensorD{}, spec);
    REQUIRE(y.same_shape(x));
    CHECK(y.max_abs_diff(x) == 0.0);
}

TEST_CASE("transposed conv is the adjoint of conv3d_forward") {
    Rng rng(10);
    struct Case {
        std::size_t cin, cout;
        TensorD::Shape z; // input of the forward conv
        Extents3 kernel, stride, padding;
    };
    const Case cases[] = {
        {2, 3, {2, 4, 7, 9}, {3, 3, 3}, {1, 2, 2}, {1, 1, 1}},
        {1, 2, {1, 5, 8, 8}, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}},
        {2, 2, {2, 4, 9, 9}, {3, 3, 3}, {2, 2, 2}, {1, 1, 1}},
    };
    for (const Case& c : cases) {
        const Conv3dSpec spec = make_spec(c.cin, c.cout, c.kernel, c.stride, c.padding);
        TensorD z = TensorD::uniform(c.z, rng, -1.0, 1.0);
        TensorD w = TensorD::uniform({c.cout, c.cin, c.kernel[0], c.kernel[1], c.kernel[2]}, rng,
                                     -0.5, 0.5);
        const Extents3 ze{c.z[1], c.z[2], c.z[3]};
        const Extents3 ye = spec.output_extents(ze);
        // Choose the output padding that restores z's extents exactly.
        Offsets3 op;
        for (std::size_t a = 0; a < 3; ++a)
            op[a] = ze[a] - ((ye[a] - 1) * spec.stride[a] - 2 * spec.padding[a] + spec.kernel[a]);
        TensorD x = TensorD::uniform({c.cout, ye[0], ye[1], ye[2]}, rng, -1.0, 1.0);
        TensorD up = conv3d_transposed_forward(x, w, TensorD{}, spec, op);
        REQUIRE(up.same_shape(z));
        const double lhs = dot(up, z);
        const double rhs = dot(x, conv3d_forward(z, w, TensorD{}, spec));
        CHECK(std::abs(lhs - rhs) / (std::abs(lhs) + 1e-30) < 1e-12);
    }
}

TEST_CASE("transposed extents formula and output padding bound") {
    Conv3dSpec spec = make_spec(1, 1, {3, 3, 3}, {1, 2, 2}, {1, 1, 1});
    const Extents3 out = spec.transposed_extents({8, 16, 16}, {0, 1, 1});
    CHECK(out[0] == 8);       // (8-1)*1 - 2 + 3 + 0
    CHECK(out[1] == 32);      // (16-1)*2 - 2 + 3 + 1
    CHECK(out[2] == 32);
    CHECK_THROWS_AS(spec.transposed_extents({8, 16, 16}, {1, 0, 0}), ShapeError);
}

TEST_CASE("leaky_relu definition and derivative") {
    TensorD x({4}, {0.0, -1.0, 2.0, -0.5});
    TensorD y = leaky_relu(x, 0.01);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == -0.01);
    CHECK(y[2] == 2.0);
    CHECK(y[3] == -0.005);

    // Derivative via finite differences away from the kink.
    Rng rng(11);
    TensorD pre = TensorD::uniform({64}, rng, 0.1, 1.0);
    for (std::size_t i = 0; i < pre.numel(); i += 2) pre[i] = -pre[i];
    TensorD g = TensorD::uniform({64}, rng, -1.0, 1.0);
    TensorD gx = leaky_relu_backward(pre, g, 0.01);
    const double step = 1e-6;
    for (std::size_t i = 0; i < pre.numel(); i += 7) {
        TensorD hi = pre, lo = pre;
        hi[i] += step;
        lo[i] -= step;
        const double fd =
            (leaky_relu(hi, 0.01)[i] - leaky_relu(lo, 0.01)[i]) / (2 * step) * g[i];
        CHECK(std::abs(fd - gx[i]) < 1e-6);
    }
}

TEST_CASE("sum_per_channel reduces the trailing axes") {
    TensorD x({2, 1, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40});
    TensorD s = sum_per_channel(x);
    REQUIRE(s.shape() == TensorD::Shape{2});
    CHECK(s[0] == 10.0);
    CHECK(s[1] == 100.0);
}
