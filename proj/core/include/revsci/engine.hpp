#pragma once

#include <map>
#include <string>
#include <utility>

#include "revsci/ledger.hpp"
#include "revsci/network.hpp"

namespace revsci {

// Gradient engines over the same network. The naive engine stores every
// inter-layer activation during the forward pass. The reversible engine
// stores only the feature-extraction and head activations plus the stack's
// final activation, and recomputes each block's input from its output via the
// block inverse while walking backwards.
enum class Engine { naive, reversible };

Engine parse_engine(const std::string& name);
std::string to_string(Engine engine);

template <typename T>
struct GradReport {
    std::map<std::string, Tensor<T>> grads; // keyed by the parameter enumeration
    double loss = 0.0;
};

struct MemReport {
    Engine engine = Engine::naive;
    std::size_t peak_activation_bytes = 0; // ledger peak over the whole pass
    std::size_t stored_tensor_count = 0;   // tensor count at that peak
};

// Mean squared error over all elements (channels included) and its gradient
// with respect to the first argument.
template <typename T>
double mse_loss(const Tensor<T>& xhat, const Tensor<T>& x);

template <typename T>
Tensor<T> mse_loss_grad(const Tensor<T>& xhat, const Tensor<T>& x);

template <typename T>
std::pair<GradReport<T>, MemReport> backward_naive(const Network<T>& net, const Tensor<T>& input,
                                                   const Tensor<T>& x_true);

template <typename T>
std::pair<GradReport<T>, MemReport> backward_reversible(const Network<T>& net,
                                                        const Tensor<T>& input,
                                                        const Tensor<T>& x_true);

template <typename T>
std::pair<GradReport<T>, MemReport> backward(const Network<T>& net, const Tensor<T>& input,
                                             const Tensor<T>& x_true, Engine engine);

template <typename T>
std::pair<GradReport<T>, MemReport> backward(const Network<T>& net, const CoarseEstimate<T>& ce,
                                             const Tensor<T>& x_true, Engine engine);

} // namespace revsci
