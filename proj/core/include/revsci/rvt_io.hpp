#pragma once

#include <filesystem>
#include <string>
#include <variant>

#include "revsci/tensor.hpp"

namespace revsci {

// Binary tensor container used repo-wide ("RVT1"):
//   magic "RVT1" | u8 dtype (0 = f32, 1 = f64) | u8 ndim |
//   ndim x u32 little-endian extents | raw little-endian row-major payload.
// A sidecar JSON file (same path + ".json") may carry semantic metadata.

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

void write_rvt(const std::filesystem::path& path, const Tensor<float>& t);
void write_rvt(const std::filesystem::path& path, const Tensor<double>& t);

AnyTensor read_rvt(const std::filesystem::path& path);

// Reads and converts to the requested precision.
template <typename T>
Tensor<T> read_rvt_as(const std::filesystem::path& path) {
    AnyTensor a = read_rvt(path);
    if (auto* p = std::get_if<Tensor<T>>(&a)) return std::move(*p);
    if constexpr (std::is_same_v<T, float>) {
        return std::get<Tensor<double>>(a).template cast<float>();
    } else {
        return std::get<Tensor<float>>(a).template cast<double>();
    }
}

// Sidecar helpers: serialized JSON text lives next to the tensor file.
void write_sidecar(const std::filesystem::path& rvt_path, const std::string& json_text);
std::string read_sidecar(const std::filesystem::path& rvt_path); // "" if absent

} // namespace revsci
