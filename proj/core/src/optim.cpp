#include "revsci/optim.hpp"

#include <algorithm>
#include <cmath>

#include "revsci/errors.hpp"
#include "revsci/rng.hpp"

namespace revsci {

template <typename T>
void adam_step(std::vector<ParamRef<T>>& params, const std::map<std::string, Tensor<T>>& grads,
               AdamState<T>& state, const AdamConfig& config) {
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double m_corr = 1.0 - std::pow(config.beta1, t);
    const double v_corr = 1.0 - std::pow(config.beta2, t);

    for (auto& param : params) {
        const auto git = grads.find(param.name);
        if (git == grads.end()) {
            throw ValueError("adam_step: no gradient for parameter " + param.name);
        }
        const Tensor<T>& g = git->second;
        if (!g.same_shape(*param.tensor)) {
            throw ShapeError("adam_step: gradient shape " + g.shape_string() + " for " + param.name +
                             " does not match parameter " + param.tensor->shape_string());
        }
        Tensor<T>& m = state.m.try_emplace(param.name, Tensor<T>(param.tensor->shape())).first->second;
        Tensor<T>& v = state.v.try_emplace(param.name, Tensor<T>(param.tensor->shape())).first->second;

        Tensor<T>& theta = *param.tensor;
        for (std::size_t i = 0; i < theta.numel(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi = config.beta1 * static_cast<double>(m[i]) + (1.0 - config.beta1) * gi;
            const double vi = config.beta2 * static_cast<double>(v[i]) + (1.0 - config.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double update = config.lr * (mi / m_corr) / (std::sqrt(vi / v_corr) + config.eps);
            theta[i] = static_cast<T>(static_cast<double>(theta[i]) - update);
        }
    }
}

double lr_schedule(std::size_t epoch, double lr0) {
    return lr0 * std::pow(0.9, static_cast<double>(epoch / 10));
}

template <typename T>
double finite_difference_check(Network<T>& net, const Tensor<T>& input, const Tensor<T>& x_true,
                               const std::map<std::string, Tensor<T>>& grads, std::size_t samples,
                               double step, std::uint64_t seed) {
    if (samples == 0) throw ValueError("finite_difference_check: need at least one sample");
    auto params = parameters(net);
    Rng rng(mix_seed(seed, 0xfdfdfdull));

    const auto central = [&](Tensor<T>& theta, std::size_t e, double h) {
        const T saved = theta[e];
        theta[e] = static_cast<T>(static_cast<double>(saved) + h);
        const double loss_plus = mse_loss(forward(net, input), x_true);
        theta[e] = static_cast<T>(static_cast<double>(saved) - h);
        const double loss_minus = mse_loss(forward(net, input), x_true);
        theta[e] = saved;
        return (loss_plus - loss_minus) / (2.0 * h);
    };
    // Relative error with an absolute floor. A central difference of a loss of
    // order one carries ~1e-10 of rounding noise at steps near 1e-6, so
    // comparisons on gradients smaller than the floor would measure that noise
    // rather than the backward pass; 1e-5 keeps the check well-conditioned and
    // is far below any optimizer-visible magnitude. Meaningful in 64-bit only.
    const auto rel = [](double a, double b) {
        return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-5});
    };

    // The loss is piecewise smooth: wherever a leaky-rectifier pre-activation
    // crosses zero inside [theta - step, theta + step], a central difference
    // measures a blend of the two one-sided slopes, not the derivative the
    // backward pass is defined to produce. Such samples say nothing about
    // gradient correctness, so they are detected (the estimate fails to
    // stabilise when the step shrinks) and redrawn. A genuinely wrong gradient
    // still fails everywhere else.
    double worst = 0.0;
    std::size_t measured = 0, budget = 8 * samples;
    while (measured < samples && budget-- > 0) {
        const std::size_t p = static_cast<std::size_t>(rng.below(params.size()));
        const std::size_t e = static_cast<std::size_t>(rng.below(params[p].tensor->numel()));
        const auto git = grads.find(params[p].name);
        if (git == grads.end()) {
            throw ValueError("finite_difference_check: no gradient for parameter " + params[p].name);
        }
        Tensor<T>& theta = *params[p].tensor;
        const double fd = central(theta, e, step);
        const double fd_fine = central(theta, e, step / 8.0);
        if (rel(fd, fd_fine) > 1e-2 && budget > samples - measured) continue;
        ++measured;
        worst = std::max(worst, rel(fd, static_cast<double>(git->second[e])));
    }
    return worst;
}

#define REVSCI_INSTANTIATE_OPTIM(T)                                                                \
    template struct AdamState<T>;                                                                  \
    template void adam_step<T>(std::vector<ParamRef<T>>&, const std::map<std::string, Tensor<T>>&, \
                               AdamState<T>&, const AdamConfig&);                                  \
    template double finite_difference_check<T>(Network<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                               const std::map<std::string, Tensor<T>>&,            \
                                               std::size_t, double, std::uint64_t);

REVSCI_INSTANTIATE_OPTIM(float)
REVSCI_INSTANTIATE_OPTIM(double)

#undef REVSCI_INSTANTIATE_OPTIM

} // namespace revsci
