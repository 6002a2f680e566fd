#include "revsci/rvt_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace revsci {

// Payloads are memcpy'd; header fields are encoded byte-by-byte.
static_assert(std::endian::native == std::endian::little,
              "RVT1 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'R', 'V', 'T', '1'};

void put_u32le(std::ofstream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>((v >> 8) & 0xff),
                                static_cast<unsigned char>((v >> 16) & 0xff),
                                static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32le(std::ifstream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

template <typename T>
void write_impl(const std::filesystem::path& path, const Tensor<T>& t, std::uint8_t dtype_code) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os.write(kMagic, 4);
    os.put(static_cast<char>(dtype_code));
    if (t.rank() > 255) throw ShapeError("rvt: rank exceeds 255");
    os.put(static_cast<char>(t.rank()));
    for (std::size_t i = 0; i < t.rank(); ++i) {
        if (t.dim(i) > UINT32_MAX) throw ShapeError("rvt: extent exceeds u32 on axis " + std::to_string(i));
        put_u32le(os, static_cast<std::uint32_t>(t.dim(i)));
    }
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.bytes()));
    if (!os) throw IoError("write failed: " + path.string());
}

} // namespace

void write_rvt(const std::filesystem::path& path, const Tensor<float>& t) { write_impl(path, t, 0); }
void write_rvt(const std::filesystem::path& path, const Tensor<double>& t) { write_impl(path, t, 1); }

AnyTensor read_rvt(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("not an RVT1 container: " + path.string());
    }
    const int dtype = is.get();
    const int ndim = is.get();
    if (dtype != 0 && dtype != 1) throw IoError("rvt: unknown dtype code " + std::to_string(dtype));
    if (ndim < 0) throw IoError("rvt: truncated header in " + path.string());
    std::vector<std::size_t> shape(static_cast<std::size_t>(ndim));
    std::size_t numel = 1;
    for (auto& e : shape) {
        e = get_u32le(is);
        numel *= e;
    }
    if (!is) throw IoError("rvt: truncated header in " + path.string());

    auto read_payload = [&](auto tag) -> AnyTensor {
        using T = decltype(tag);
        Tensor<T> t(shape);
        is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(numel * sizeof(T)));
        if (!is) throw IoError("rvt: truncated payload in " + path.string());
        return t;
    };
    return dtype == 0 ? read_payload(float{}) : read_payload(double{});
}

void write_sidecar(const std::filesystem::path& rvt_path, const std::string& json_text) {
    std::filesystem::path p = rvt_path;
    p += ".json";
    std::ofstream os(p, std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + p.string());
    os << json_text;
    if (!json_text.empty() && json_text.back() != '\n') os << '\n';
}

std::string read_sidecar(const std::filesystem::path& rvt_path) {
    std::filesystem::path p = rvt_path;
    p += ".json";
    std::ifstream is(p);
    if (!is) return "";
    std::string s((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (!s.empty() && s.back() == '\n') s.pop_back(); // round-trip the text given to write_sidecar
    return s;
}

} // namespace revsci
