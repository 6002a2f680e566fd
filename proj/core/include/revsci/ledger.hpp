#pragma once

#include <algorithm>
#include <cstddef>

#include "revsci/errors.hpp"

namespace revsci {

// Running byte/tensor count of activations a gradient engine has retained for
// its backward pass. This is the engine's own bookkeeping, not an OS memory
// probe: every tensor stored for later reuse is retained here and released
// when the backward pass is done with it, so the peak is an exact, noise-free
// measure of activation memory.
class ActivationLedger {
public:
    void retain(std::size_t bytes) {
        bytes_ += bytes;
        ++count_;
        peak_bytes_ = std::max(peak_bytes_, bytes_);
        peak_count_ = std::max(peak_count_, count_);
    }

    void release(std::size_t bytes) {
        if (count_ == 0 || bytes > bytes_) {
            throw Error("activation ledger: release without a matching retain");
        }
        bytes_ -= bytes;
        --count_;
    }

    std::size_t current_bytes() const { return bytes_; }
    std::size_t current_count() const { return count_; }
    std::size_t peak_bytes() const { return peak_bytes_; }
    std::size_t peak_count() const { return peak_count_; }

private:
    std::size_t bytes_ = 0;
    std::size_t count_ = 0;
    std::size_t peak_bytes_ = 0;
    std::size_t peak_count_ = 0;
};

} // namespace revsci
