#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "revsci/engine.hpp"
#include "revsci/network.hpp"

namespace revsci {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First and second moment estimates per parameter, plus the step counter the
// bias correction depends on.
template <typename T>
struct AdamState {
    std::map<std::string, Tensor<T>> m;
    std::map<std::string, Tensor<T>> v;
    std::size_t step = 0;
};

// One Adam update over the network's parameter enumeration. Every parameter
// must have a gradient in `grads`; moments are created on first use.
template <typename T>
void adam_step(std::vector<ParamRef<T>>& params, const std::map<std::string, Tensor<T>>& grads,
               AdamState<T>& state, const AdamConfig& config);

// Step decay: 10% off every 10 epochs.
double lr_schedule(std::size_t epoch, double lr0 = 2e-4);

// Central-difference probe of `grads` on `samples` randomly chosen parameter
// elements. Perturbs the network in place and restores it; returns the
// largest relative error observed.
template <typename T>
double finite_difference_check(Network<T>& net, const Tensor<T>& input, const Tensor<T>& x_true,
                               const std::map<std::string, Tensor<T>>& grads, std::size_t samples,
                               double step, std::uint64_t seed);

} // namespace revsci
