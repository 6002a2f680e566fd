#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "revsci/errors.hpp"
#include "revsci/rng.hpp"

namespace revsci {

// Dense row-major N-dimensional array over float or double. Carries videos,
// masks, features, weights and gradients throughout the library. Immutable
// sharing is by value; all mutation happens through the owning instance.
template <typename T>
class Tensor {
    static_assert(std::is_floating_point_v<T>);

public:
    using Shape = std::vector<std::size_t>;

    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        data_.assign(checked_numel(shape_), T(0));
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_numel(shape_) != data_.size()) {
            throw ShapeError("tensor: data size " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
        }
    }

    static Tensor full(Shape shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor uniform(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = static_cast<T>(rng.uniform(lo, hi));
        return t;
    }

    static Tensor normal(Shape shape, Rng& rng, double mean = 0.0, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = static_cast<T>(mean + stddev * rng.normal());
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t numel() const { return data_.size(); }
    std::size_t bytes() const { return data_.size() * sizeof(T); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    T operator[](std::size_t i) const { return data_[i]; }

    T& at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
    T at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

    // Rank-specific accessors used by the hot paths.
    T& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    T operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    T& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    T operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    T& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    T operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    Tensor reshaped(Shape shape) const {
        if (checked_numel(shape) != numel()) {
            throw ShapeError("reshape: element count mismatch, " + shape_string(shape_) +
                             " -> " + shape_string(shape));
        }
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> t(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) t[i] = static_cast<U>(data_[i]);
        return t;
    }

    Tensor& operator+=(const Tensor& o) {
        require_same_shape(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        require_same_shape(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Tensor& operator*=(T s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }

    Tensor hadamard(const Tensor& o) const {
        require_same_shape(o, "hadamard");
        Tensor r(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) r.data_[i] = data_[i] * o.data_[i];
        return r;
    }

    T min() const { return data_.empty() ? T(0) : *std::min_element(data_.begin(), data_.end()); }
    T max() const { return data_.empty() ? T(0) : *std::max_element(data_.begin(), data_.end()); }
    double sum() const {
        double s = 0.0;
        for (const auto v : data_) s += static_cast<double>(v);
        return s;
    }
    double mean() const { return data_.empty() ? 0.0 : sum() / static_cast<double>(numel()); }

    bool all_finite() const {
        for (const auto v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    double max_abs_diff(const Tensor& o) const {
        require_same_shape(o, "max_abs_diff");
        double m = 0.0;
        for (std::size_t i = 0; i < data_.size(); ++i)
            m = std::max(m, std::abs(static_cast<double>(data_[i]) - static_cast<double>(o.data_[i])));
        return m;
    }

    bool bit_equal(const Tensor& o) const {
        return shape_ == o.shape_ && std::equal(data_.begin(), data_.end(), o.data_.begin());
    }

    // Contiguous slice along axis 0: rows [begin, end).
    Tensor slice0(std::size_t begin, std::size_t end) const {
        if (rank() == 0 || begin > end || end > shape_[0]) {
            throw ShapeError("slice0: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") out of bounds for axis 0 extent " + std::to_string(shape_.empty() ? 0 : shape_[0]));
        }
        const std::size_t inner = numel() / shape_[0];
        Shape s = shape_;
        s[0] = end - begin;
        Tensor r(std::move(s));
        std::copy(data_.begin() + static_cast<std::ptrdiff_t>(begin * inner),
                  data_.begin() + static_cast<std::ptrdiff_t>(end * inner), r.data_.begin());
        return r;
    }

    // Concatenate along axis 0; all parts must agree on the remaining axes.
    static Tensor concat0(const std::vector<Tensor>& parts) {
        if (parts.empty()) throw ShapeError("concat0: no parts");
        Shape s = parts[0].shape_;
        std::size_t total = 0;
        for (const auto& p : parts) {
            if (p.rank() != s.size() ||
                !std::equal(p.shape_.begin() + 1, p.shape_.end(), s.begin() + 1)) {
                throw ShapeError("concat0: inner shape mismatch");
            }
            total += p.shape_[0];
        }
        s[0] = total;
        Tensor r(std::move(s));
        std::size_t off = 0;
        for (const auto& p : parts) {
            std::copy(p.data_.begin(), p.data_.end(), r.data_.begin() + static_cast<std::ptrdiff_t>(off));
            off += p.data_.size();
        }
        return r;
    }

    static std::string shape_string(const Shape& s) {
        std::ostringstream os;
        os << "(";
        for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
        os << ")";
        return os.str();
    }
    std::string shape_string() const { return shape_string(shape_); }

private:
    static std::size_t checked_numel(const Shape& s) {
        std::size_t n = 1;
        for (const auto e : s) {
            if (e == 0) throw ShapeError("tensor: zero extent in shape " + shape_string(s));
            n *= e;
        }
        return n;
    }

    std::size_t offset(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != shape_.size())
            throw ShapeError("at: rank " + std::to_string(idx.size()) + " index into rank " +
                             std::to_string(shape_.size()) + " tensor");
        std::size_t off = 0, d = 0;
        for (const auto i : idx) {
            if (i >= shape_[d])
                throw ShapeError("at: index " + std::to_string(i) + " out of range for axis " +
                                 std::to_string(d) + " (extent " + std::to_string(shape_[d]) + ")");
            off = off * shape_[d++] + i;
        }
        return off;
    }

    void require_same_shape(const Tensor& o, const char* op) const {
        if (shape_ != o.shape_) {
            throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(shape_) +
                             " vs " + shape_string(o.shape_));
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

} // namespace revsci
