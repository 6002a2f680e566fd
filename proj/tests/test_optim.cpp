// Adam optimizer algebra against hand-unrolled recurrences, the learning rate
// schedule, and descent on a fixed tiny instance.

#include <doctest.h>

#include <cmath>

#include "revsci/engine.hpp"
#include "revsci/errors.hpp"
#include "revsci/network.hpp"
#include "revsci/optim.hpp"
#include "revsci/rng.hpp"
#include "revsci/scenes.hpp"
#include "revsci/sci.hpp"

using namespace revsci;

namespace {

struct Toy {
    Tensor<double> theta;
    std::vector<ParamRef<double>> params;
    Toy(std::initializer_list<double> values) : theta({values.size()}, values) {
        params.push_back({"theta", &theta});
    }
};

std::map<std::string, Tensor<double>> grad_of(std::initializer_list<double> values) {
    std::map<std::string, Tensor<double>> g;
    g.emplace("theta", Tensor<double>({values.size()}, values));
    return g;
}

} // namespace

TEST_CASE("adam leaves parameters unchanged under zero gradient") {
    Toy toy{1.0, -2.0, 3.0};
    AdamState<double> state;
    adam_step(toy.params, grad_of({0.0, 0.0, 0.0}), state, AdamConfig{});
    CHECK(toy.theta[0] == 1.0);
    CHECK(toy.theta[1] == -2.0);
    CHECK(toy.theta[2] == 3.0);
    CHECK(state.step == 1);
}

TEST_CASE("adam first step from zero state is -lr*g/(|g|+eps)") {
    Toy toy{0.5, -0.25, 4.0};
    AdamConfig config;
    config.lr = 1e-2;
    AdamState<double> state;
    const double g[3] = {0.3, -0.7, 1e-12};
    adam_step(toy.params, grad_of({g[0], g[1], g[2]}), state, config);
    const double start[3] = {0.5, -0.25, 4.0};
    for (int i = 0; i < 3; ++i) {
        const double expected = start[i] - config.lr * g[i] / (std::abs(g[i]) + config.eps);
        CHECK(toy.theta[i] == doctest::Approx(expected).epsilon(1e-14));
    }
}

TEST_CASE("adam two steps with constant gradient match the unrolled recurrence") {
    const double g = 0.37, lr = 2e-4, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    Toy toy{1.0};
    AdamConfig config; // defaults are exactly (lr, b1, b2, eps) above
    AdamState<double> state;
    adam_step(toy.params, grad_of({g}), state, config);
    adam_step(toy.params, grad_of({g}), state, config);

    // Hand-unrolled: moments after each step, bias-corrected update.
    double m = (1 - b1) * g;
    double v = (1 - b2) * g * g;
    double theta = 1.0 - lr * (m / (1 - b1)) / (std::sqrt(v / (1 - b2)) + eps);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    theta -= lr * (m / (1 - b1 * b1)) / (std::sqrt(v / (1 - b2 * b2)) + eps);

    CHECK(std::abs(toy.theta[0] - theta) < 1e-12);
    CHECK(state.step == 2);
}

TEST_CASE("adam rejects a missing or misshapen gradient") {
    Toy toy{1.0};
    AdamState<double> state;
    std::map<std::string, Tensor<double>> empty;
    CHECK_THROWS_AS(adam_step(toy.params, empty, state, AdamConfig{}), ValueError);
    std::map<std::string, Tensor<double>> wrong;
    wrong.emplace("theta", Tensor<double>({2}));
    CHECK_THROWS_AS(adam_step(toy.params, wrong, state, AdamConfig{}), ShapeError);
}

TEST_CASE("learning rate decays 10 percent every 10 epochs") {
    CHECK(lr_schedule(0) == doctest::Approx(2e-4).epsilon(1e-15));
    CHECK(lr_schedule(9) == doctest::Approx(2e-4).epsilon(1e-15));
    CHECK(lr_schedule(10) == doctest::Approx(1.8e-4).epsilon(1e-15));
    CHECK(lr_schedule(25) == doctest::Approx(1.62e-4).epsilon(1e-15));
    CHECK(lr_schedule(10, 1e-3) == doctest::Approx(9e-4).epsilon(1e-15));
}

TEST_CASE("200 adam steps halve the loss on a fixed tiny instance") {
    NetworkConfig config;
    config.c1 = 8;
    config.m = 2;
    config.L = 2;
    config.B = 4;
    config.dtype = Dtype::f64;
    config.seed = 11;
    Network<double> net = build_network<double>(config);

    SceneSpec scene;
    scene.B = 4;
    scene.nx = 16;
    scene.ny = 16;
    scene.seed = 21;
    const Tensor<double> video = synth_video<double>(scene);
    const MaskSet<double> masks = generate_masks<double>(4, 16, 16, MaskScheme::shifting, 31,
                                                         MaskOptions{.require_coverage = false});
    const CoarseEstimate<double> ce = coarse_estimate(capture(video, masks), masks, true);
    const Tensor<double> input = network_input(ce);
    const Tensor<double> truth = video.reshaped({1, 4, 16, 16});

    auto params = parameters(net);
    AdamState<double> state;
    double loss0 = 0, loss_last = 0;
    for (int s = 0; s < 200; ++s) {
        auto [report, mem] = backward_reversible(net, input, truth);
        if (s == 0) loss0 = report.loss;
        loss_last = report.loss;
        adam_step(params, report.grads, state, AdamConfig{});
    }
    CHECK(loss_last < 0.5 * loss0);
}
