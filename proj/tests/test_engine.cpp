// Backpropagation engines: loss oracle, dead-network gradients, engine
// parity, finite differences, and the activation-ledger laws.

#include <doctest.h>

#include <cmath>
#include <limits>

#include "revsci/engine.hpp"
#include "revsci/errors.hpp"
#include "revsci/network.hpp"
#include "revsci/optim.hpp"
#include "revsci/rng.hpp"

using namespace revsci;

namespace {

NetworkConfig tiny_config(std::size_t c1, std::size_t m, std::size_t L, std::size_t B) {
    NetworkConfig config;
    config.c1 = c1;
    config.m = m;
    config.L = L;
    config.B = B;
    config.dtype = Dtype::f64;
    config.seed = 99;
    return config;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> random_problem(std::size_t B, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<T> input = Tensor<T>::uniform({1, B, n, n}, rng, T(0), T(1));
    Tensor<T> truth = Tensor<T>::uniform({1, B, n, n}, rng, T(0), T(1));
    return {input, truth};
}

template <typename T>
double max_rel_diff(const GradReport<T>& a, const GradReport<T>& b) {
    REQUIRE(a.grads.size() == b.grads.size());
    double worst = 0;
    for (const auto& [name, g] : a.grads) {
        const Tensor<T>& h = b.grads.at(name);
        REQUIRE(g.same_shape(h));
        for (std::size_t i = 0; i < g.numel(); ++i) {
            const double x = static_cast<double>(g[i]), y = static_cast<double>(h[i]);
            const double scale = std::max({std::abs(x), std::abs(y), 1e-12});
            worst = std::max(worst, std::abs(x - y) / scale);
        }
    }
    return worst;
}

} // namespace

TEST_CASE("mse loss matches a loop oracle and analytic cases") {
    Rng rng(1);
    Tensor<double> a = Tensor<double>::uniform({2, 3, 4}, rng, -1.0, 1.0);
    Tensor<double> b = Tensor<double>::uniform({2, 3, 4}, rng, -1.0, 1.0);

    double acc = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    acc /= static_cast<double>(a.numel());
    CHECK(mse_loss(a, b) == doctest::Approx(acc).epsilon(1e-14));

    CHECK(mse_loss(a, a) == 0.0);
    Tensor<double> offset = a;
    for (std::size_t i = 0; i < offset.numel(); ++i) offset[i] += 0.1;
    CHECK(mse_loss(offset, a) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK_THROWS_AS(mse_loss(a, Tensor<double>({2, 3, 5})), ShapeError);
}

TEST_CASE("mse loss gradient is 2(xhat - x)/N") {
    Rng rng(2);
    Tensor<double> xhat = Tensor<double>::uniform({3, 3}, rng, -1.0, 1.0);
    Tensor<double> x = Tensor<double>::uniform({3, 3}, rng, -1.0, 1.0);
    Tensor<double> g = mse_loss_grad(xhat, x);
    for (std::size_t i = 0; i < g.numel(); ++i)
        CHECK(g[i] == doctest::Approx(2.0 * (xhat[i] - x[i]) / 9.0).epsilon(1e-14));
}

TEST_CASE("zero-parameter network: only the final bias sees a gradient") {
    Network<double> net = build_network<double>(tiny_config(8, 2, 2, 2));
    for (auto& p : parameters(net))
        for (std::size_t i = 0; i < p.tensor->numel(); ++i) (*p.tensor)[i] = 0.0;
    auto [input, truth] = random_problem<double>(2, 16, 5);

    auto [report, mem] = backward_naive(net, input, truth);
    // xhat == 0, so dLoss/dxhat = -2 x / N and the last bias accumulates it.
    double expected = 0;
    for (std::size_t i = 0; i < truth.numel(); ++i) expected += -2.0 * truth[i];
    expected /= static_cast<double>(truth.numel());
    CHECK(report.grads.at("head.3.bias")[0] == doctest::Approx(expected).epsilon(1e-12));

    for (const auto& [name, g] : report.grads) {
        if (name == "head.3.bias") continue;
        // Everything upstream is multiplied by some zero weight or zero
        // activation on the way back, except head.3's weight which sees the
        // zero activations of head.2 — zero either way.
        double mx = 0;
        for (std::size_t i = 0; i < g.numel(); ++i) mx = std::max(mx, std::abs(g[i]));
        CHECK(mx == 0.0);
    }
}

TEST_CASE("engine parity on a tiny net") {
    Network<double> net = build_network<double>(tiny_config(8, 2, 3, 2));
    auto [input, truth] = random_problem<double>(2, 16, 6);
    auto [naive, mem_n] = backward_naive(net, input, truth);
    auto [rev, mem_r] = backward_reversible(net, input, truth);
    CHECK(naive.loss == doctest::Approx(rev.loss).epsilon(1e-14));
    CHECK(max_rel_diff(naive, rev) < 1e-8);
    CHECK(mem_n.engine == Engine::naive);
    CHECK(mem_r.engine == Engine::reversible);
}

TEST_CASE("both engines match central finite differences") {
    Network<double> net = build_network<double>(tiny_config(4, 2, 2, 2));
    auto [input, truth] = random_problem<double>(2, 12, 7);
    auto [naive, mem_n] = backward_naive(net, input, truth);
    auto [rev, mem_r] = backward_reversible(net, input, truth);
    CHECK(finite_difference_check(net, input, truth, naive.grads, 60, 1e-6, 11) < 1e-4);
    CHECK(finite_difference_check(net, input, truth, rev.grads, 60, 1e-6, 11) < 1e-4);
}

TEST_CASE("naive ledger grows linearly in depth") {
    auto peak = [](std::size_t L) {
        Network<double> net = build_network<double>(tiny_config(8, 2, L, 2));
        auto [input, truth] = random_problem<double>(2, 16, 8);
        return backward_naive(net, input, truth).second;
    };
    const MemReport m4 = peak(4), m8 = peak(8), m12 = peak(12);
    CHECK(m8.stored_tensor_count - m4.stored_tensor_count ==
          m12.stored_tensor_count - m8.stored_tensor_count);
    CHECK(m8.peak_activation_bytes - m4.peak_activation_bytes ==
          m12.peak_activation_bytes - m8.peak_activation_bytes);
    CHECK(m12.peak_activation_bytes > m4.peak_activation_bytes);
}

TEST_CASE("reversible ledger peak does not depend on depth") {
    auto peak = [](std::size_t L) {
        Network<double> net = build_network<double>(tiny_config(8, 2, L, 2));
        auto [input, truth] = random_problem<double>(2, 16, 8);
        return backward_reversible(net, input, truth).second;
    };
    const MemReport m2 = peak(2), m6 = peak(6), m10 = peak(10);
    CHECK(m2.peak_activation_bytes == m6.peak_activation_bytes);
    CHECK(m6.peak_activation_bytes == m10.peak_activation_bytes);
    CHECK(m2.stored_tensor_count == m10.stored_tensor_count);
}

TEST_CASE("reversible engine stores less than naive once depth grows") {
    Network<double> net = build_network<double>(tiny_config(8, 2, 6, 2));
    auto [input, truth] = random_problem<double>(2, 16, 9);
    const auto naive = backward_naive(net, input, truth).second;
    const auto rev = backward_reversible(net, input, truth).second;
    CHECK(rev.peak_activation_bytes < naive.peak_activation_bytes);
}

TEST_CASE("single-block case: engines differ only through the recomputed group") {
    Network<double> net = build_network<double>(tiny_config(8, 2, 1, 2));
    auto [input, truth] = random_problem<double>(2, 16, 10);
    auto [naive, mn] = backward_naive(net, input, truth);
    auto [rev, mr] = backward_reversible(net, input, truth);

    CHECK(naive.loss == rev.loss); // same forward pass bitwise
    for (const auto& [name, g] : naive.grads) {
        const bool touched_by_recompute =
            name.rfind("feature.", 0) == 0 || name.rfind("block.0.fn.0.", 0) == 0;
        if (!touched_by_recompute) CHECK(g.bit_equal(rev.grads.at(name)));
    }
    CHECK(max_rel_diff(naive, rev) < 1e-8);
}

TEST_CASE("backward dispatch and coarse-estimate overload agree") {
    Network<double> net = build_network<double>(tiny_config(8, 2, 1, 2));
    Rng rng(11);
    CoarseEstimate<double> ce;
    ce.color = false;
    ce.frames = Tensor<double>::uniform({2, 16, 16}, rng, 0.0, 1.0);
    Tensor<double> truth = Tensor<double>::uniform({1, 2, 16, 16}, rng, 0.0, 1.0);

    auto [a, am] = backward(net, network_input(ce), truth, Engine::reversible);
    auto [b, bm] = backward(net, ce, truth, Engine::reversible);
    CHECK(a.loss == b.loss);
    CHECK(max_rel_diff(a, b) == 0.0);
}

TEST_CASE("non-finite loss raises a numerical error") {
    Network<double> net = build_network<double>(tiny_config(8, 2, 1, 2));
    auto [input, truth] = random_problem<double>(2, 16, 12);
    input[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(backward_naive(net, input, truth), NumericalError);
    CHECK_THROWS_AS(backward_reversible(net, input, truth), NumericalError);
}

TEST_CASE("exploding parameters are reported as numerical failure") {
    Network<double> net = build_network<double>(tiny_config(8, 2, 1, 2));
    for (auto& p : parameters(net))
        for (std::size_t i = 0; i < p.tensor->numel(); ++i)
            (*p.tensor)[i] = std::numeric_limits<double>::max() / 2;
    auto [input, truth] = random_problem<double>(2, 16, 13);
    CHECK_THROWS_AS(backward_naive(net, input, truth), NumericalError);
    CHECK_THROWS_AS(backward_reversible(net, input, truth), NumericalError);
}

TEST_CASE("engine name round trip") {
    CHECK(parse_engine("naive") == Engine::naive);
    CHECK(parse_engine("reversible") == Engine::reversible);
    CHECK(to_string(Engine::reversible) == "reversible");
    CHECK_THROWS_AS(parse_engine("fast"), ValueError);
}
