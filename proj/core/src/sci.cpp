#include "revsci/sci.hpp"

#include <utility>

#include "revsci/errors.hpp"
#include "revsci/rng.hpp"

namespace revsci {

MaskScheme parse_mask_scheme(const std::string& name) {
    if (name == "bernoulli") return MaskScheme::bernoulli;
    if (name == "shifting") return MaskScheme::shifting;
    if (name == "all_ones") return MaskScheme::all_ones;
    throw ValueError("unknown mask scheme '" + name + "' (expected bernoulli, shifting or all_ones)");
}

std::string to_string(MaskScheme scheme) {
    switch (scheme) {
    case MaskScheme::bernoulli: return "bernoulli";
    case MaskScheme::shifting: return "shifting";
    case MaskScheme::all_ones: return "all_ones";
    }
    throw ValueError("invalid MaskScheme value");
}

template <typename T>
Tensor<T> MaskSet<T>::coverage() const {
    const std::size_t B = frames(), n = rows() * cols();
    Tensor<T> sum({rows(), cols()});
    for (std::size_t k = 0; k < B; ++k) {
        const T* frame = masks.data() + k * n;
        for (std::size_t i = 0; i < n; ++i) sum[i] += frame[i];
    }
    return sum;
}

namespace {

template <typename T>
void fill_bernoulli(Tensor<T>& t, Rng& rng) {
    for (auto& v : t.vec()) v = rng.bernoulli(0.5) ? T(1) : T(0);
}

template <typename T>
bool fully_covered(const MaskSet<T>& set) {
    const Tensor<T> sum = set.coverage();
    for (const auto v : sum.vec())
        if (v == T(0)) return false;
    return true;
}

} // namespace

template <typename T>
MaskSet<T> generate_masks(std::size_t B, std::size_t nx, std::size_t ny, MaskScheme scheme,
                          std::uint64_t seed, const MaskOptions& options) {
    if (B < 1) throw ValueError("generate_masks: need at least one frame per snapshot");
    if (nx == 0 || ny == 0) throw ValueError("generate_masks: mask extents must be positive");
    if (scheme == MaskScheme::shifting && B > nx) {
        throw ValueError("generate_masks: shifting scheme wraps after nx rows, need B <= nx (B=" +
                         std::to_string(B) + ", nx=" + std::to_string(nx) + ")");
    }

    MaskSet<T> set;
    set.scheme = scheme;
    set.seed = seed;

    if (scheme == MaskScheme::all_ones) {
        set.masks = Tensor<T>::full({B, nx, ny}, T(1));
        return set;
    }

    const int attempts = options.require_coverage ? std::max(options.max_retries, 1) : 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(attempt)));
        Tensor<T> masks({B, nx, ny});
        if (scheme == MaskScheme::bernoulli) {
            fill_bernoulli(masks, rng);
        } else {
            Tensor<T> base({nx, ny});
            fill_bernoulli(base, rng);
            for (std::size_t k = 0; k < B; ++k) {
                for (std::size_t i = 0; i < nx; ++i) {
                    const std::size_t src = (i + nx - k % nx) % nx; // roll down by k rows
                    for (std::size_t j = 0; j < ny; ++j) masks(k, i, j) = base(src, j);
                }
            }
        }
        set.masks = std::move(masks);
        if (!options.require_coverage || fully_covered(set)) return set;
    }
    throw ValueError("generate_masks: no draw covered every pixel after " + std::to_string(attempts) +
                     " attempts (" + std::to_string(B) + "x" + std::to_string(nx) + "x" +
                     std::to_string(ny) + "); lower B, enlarge the frame, or allow uncovered pixels");
}

template <typename T>
Measurement<T> capture(const Tensor<T>& video, const MaskSet<T>& masks, T noise_sigma,
                       std::uint64_t noise_seed) {
    if (video.rank() != 3) {
        throw ShapeError("capture: expected video [B, nx, ny], got " + video.shape_string());
    }
    if (!video.same_shape(masks.masks)) {
        throw ShapeError("capture: video " + video.shape_string() + " does not match masks " +
                         masks.masks.shape_string());
    }
    if (noise_sigma < T(0)) throw ValueError("capture: noise sigma must be nonnegative");

    const std::size_t B = video.dim(0), n = video.dim(1) * video.dim(2);
    Measurement<T> m;
    m.noise_sigma = noise_sigma;
    m.y = Tensor<T>({video.dim(1), video.dim(2)});
    for (std::size_t k = 0; k < B; ++k) {
        const T* x = video.data() + k * n;
        const T* c = masks.masks.data() + k * n;
        T* y = m.y.data();
        for (std::size_t i = 0; i < n; ++i) y[i] += x[i] * c[i];
    }
    if (noise_sigma > T(0)) {
        Rng rng(mix_seed(noise_seed, 0x6e6f697365ull)); // "noise"
        for (auto& v : m.y.vec()) v += noise_sigma * static_cast<T>(rng.normal());
    }
    return m;
}

template <typename T>
std::size_t SensingMatrix<T>::nonzeros() const {
    std::size_t count = 0;
    for (const auto v : diagonals.vec()) count += (v != T(0));
    return count;
}

template <typename T>
std::vector<T> SensingMatrix<T>::apply(const std::vector<T>& x) const {
    if (x.size() != cols()) {
        throw ShapeError("sensing apply: vector length " + std::to_string(x.size()) +
                         " does not match matrix columns " + std::to_string(cols()));
    }
    const std::size_t B = diagonals.dim(0), n = rows();
    std::vector<T> y(n, T(0));
    for (std::size_t k = 0; k < B; ++k) {
        const T* d = diagonals.data() + k * n;
        const T* xk = x.data() + k * n;
        for (std::size_t i = 0; i < n; ++i) y[i] += d[i] * xk[i];
    }
    return y;
}

template <typename T>
Tensor<T> SensingMatrix<T>::dense() const {
    const std::size_t B = diagonals.dim(0), n = rows();
    Tensor<T> full({n, B * n});
    for (std::size_t k = 0; k < B; ++k)
        for (std::size_t i = 0; i < n; ++i) full(i, k * n + i) = diagonals(k, i);
    return full;
}

template <typename T>
SensingMatrix<T> flatten_sensing(const MaskSet<T>& masks) {
    const std::size_t B = masks.frames(), n = masks.rows() * masks.cols();
    SensingMatrix<T> phi;
    phi.diagonals = masks.masks.reshaped({B, n});
    return phi;
}

namespace {

// Shared denominator handling for the grayscale and Bayer estimates.
template <typename T>
T normalize_pixel(T y, T cov, bool eps_guard, std::size_t i, std::size_t j) {
    if (cov == T(0) && !eps_guard) {
        throw NumericalError("coarse estimate: no mask covers pixel (" + std::to_string(i) + ", " +
                             std::to_string(j) + "); regenerate masks or enable the epsilon guard");
    }
    return y / (cov + (eps_guard ? T(1e-8) : T(0)));
}

} // namespace

template <typename T>
CoarseEstimate<T> coarse_estimate(const Measurement<T>& m, const MaskSet<T>& masks, bool eps_guard) {
    if (m.color) {
        throw ValueError("coarse_estimate: got a Bayer measurement; use split_bayer_estimate");
    }
    const std::size_t B = masks.frames(), nx = masks.rows(), ny = masks.cols();
    if (m.y.rank() != 2 || m.y.dim(0) != nx || m.y.dim(1) != ny) {
        throw ShapeError("coarse_estimate: measurement " + m.y.shape_string() + " does not match masks " +
                         masks.masks.shape_string());
    }

    CoarseEstimate<T> ce;
    ce.color = false;
    ce.normalized = Tensor<T>({nx, ny});
    const Tensor<T> cov = masks.coverage();
    for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t j = 0; j < ny; ++j)
            ce.normalized(i, j) = normalize_pixel(m.y(i, j), cov(i, j), eps_guard, i, j);

    ce.frames = Tensor<T>({B, nx, ny});
    const std::size_t n = nx * ny;
    for (std::size_t k = 0; k < B; ++k) {
        const T* c = masks.masks.data() + k * n;
        T* out = ce.frames.data() + k * n;
        const T* ybar = ce.normalized.data();
        for (std::size_t i = 0; i < n; ++i) out[i] = ybar[i] * c[i];
    }
    return ce;
}

namespace {

// RGB channel sampled at Bayer site (row parity, col parity) under RGGB.
inline std::size_t rggb_channel(std::size_t i, std::size_t j) {
    if (i % 2 == 0) return j % 2 == 0 ? 0 : 1; // R, G
    return j % 2 == 0 ? 1 : 2;                 // G, B
}

} // namespace

template <typename T>
Tensor<T> bayer_mosaic(const Tensor<T>& rgb_video) {
    if (rgb_video.rank() != 4 || rgb_video.dim(0) != 3) {
        throw ShapeError("bayer_mosaic: expected video [3, B, nx, ny], got " + rgb_video.shape_string());
    }
    const std::size_t B = rgb_video.dim(1), nx = rgb_video.dim(2), ny = rgb_video.dim(3);
    if (nx % 2 != 0 || ny % 2 != 0) {
        throw ShapeError("bayer_mosaic: RGGB tiling needs even extents, got " + rgb_video.shape_string());
    }
    Tensor<T> mosaic({B, nx, ny});
    for (std::size_t k = 0; k < B; ++k)
        for (std::size_t i = 0; i < nx; ++i)
            for (std::size_t j = 0; j < ny; ++j)
                mosaic(k, i, j) = rgb_video(rggb_channel(i, j), k, i, j);
    return mosaic;
}

template <typename T>
CoarseEstimate<T> split_bayer_estimate(const Measurement<T>& m, const MaskSet<T>& masks,
                                       bool eps_guard) {
    if (!m.color) {
        throw ValueError("split_bayer_estimate: got a grayscale measurement; use coarse_estimate");
    }
    const std::size_t B = masks.frames(), nx = masks.rows(), ny = masks.cols();
    if (m.y.rank() != 2 || m.y.dim(0) != nx || m.y.dim(1) != ny) {
        throw ShapeError("split_bayer_estimate: measurement " + m.y.shape_string() +
                         " does not match masks " + masks.masks.shape_string());
    }
    if (nx % 2 != 0 || ny % 2 != 0) {
        throw ShapeError("split_bayer_estimate: RGGB tiling needs even extents, got " +
                         m.y.shape_string());
    }

    // Row/col offsets of the four Bayer sites in [R, G1, G2, B] order.
    constexpr std::size_t site[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    const std::size_t hx = nx / 2, hy = ny / 2;
    const Tensor<T> cov = masks.coverage();

    CoarseEstimate<T> ce;
    ce.color = true;
    ce.normalized = Tensor<T>({4, hx, hy});
    ce.frames = Tensor<T>({4, B, hx, hy});
    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t i = 0; i < hx; ++i) {
            for (std::size_t j = 0; j < hy; ++j) {
                const std::size_t fi = 2 * i + site[c][0], fj = 2 * j + site[c][1];
                const T ybar = normalize_pixel(m.y(fi, fj), cov(fi, fj), eps_guard, fi, fj);
                ce.normalized(c, i, j) = ybar;
                for (std::size_t k = 0; k < B; ++k)
                    ce.frames(c, k, i, j) = ybar * masks.masks(k, fi, fj);
            }
        }
    }
    return ce;
}

#define REVSCI_INSTANTIATE_SCI(T)                                                                   \
    template struct MaskSet<T>;                                                                     \
    template struct SensingMatrix<T>;                                                               \
    template MaskSet<T> generate_masks<T>(std::size_t, std::size_t, std::size_t, MaskScheme,        \
                                          std::uint64_t, const MaskOptions&);                       \
    template Measurement<T> capture<T>(const Tensor<T>&, const MaskSet<T>&, T, std::uint64_t);      \
    template SensingMatrix<T> flatten_sensing<T>(const MaskSet<T>&);                                \
    template CoarseEstimate<T> coarse_estimate<T>(const Measurement<T>&, const MaskSet<T>&, bool);  \
    template Tensor<T> bayer_mosaic<T>(const Tensor<T>&);                                           \
    template CoarseEstimate<T> split_bayer_estimate<T>(const Measurement<T>&, const MaskSet<T>&,    \
                                                       bool);

REVSCI_INSTANTIATE_SCI(float)
REVSCI_INSTANTIATE_SCI(double)

#undef REVSCI_INSTANTIATE_SCI

} // namespace revsci
