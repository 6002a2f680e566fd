#include "revsci/metrics.hpp"

#include <array>
#include <cmath>

#include "revsci/errors.hpp"

namespace revsci {

namespace {

constexpr double kPsnrCap = 99.0;
constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;

std::array<double, kWindow * kWindow> gaussian_window() {
    std::array<double, kWindow * kWindow> w{};
    const double c = (kWindow - 1) / 2.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < kWindow; ++i) {
        for (std::size_t j = 0; j < kWindow; ++j) {
            const double di = i - c, dj = j - c;
            w[i * kWindow + j] = std::exp(-(di * di + dj * dj) / (2.0 * kSigma * kSigma));
            sum += w[i * kWindow + j];
        }
    }
    for (auto& v : w) v /= sum;
    return w;
}

// SSIM of one frame pair over every fully interior window position.
double ssim_frame(const double* a, const double* b, std::size_t nx, std::size_t ny,
                  const std::array<double, kWindow * kWindow>& w, double c1, double c2) {
    double total = 0.0;
    std::size_t positions = 0;
    for (std::size_t x = 0; x + kWindow <= nx; ++x) {
        for (std::size_t y = 0; y + kWindow <= ny; ++y) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (std::size_t i = 0; i < kWindow; ++i) {
                const double* ra = a + (x + i) * ny + y;
                const double* rb = b + (x + i) * ny + y;
                const double* rw = w.data() + i * kWindow;
                for (std::size_t j = 0; j < kWindow; ++j) {
                    ma += rw[j] * ra[j];
                    mb += rw[j] * rb[j];
                    saa += rw[j] * ra[j] * ra[j];
                    sbb += rw[j] * rb[j] * rb[j];
                    sab += rw[j] * ra[j] * rb[j];
                }
            }
            const double va = saa - ma * ma;
            const double vb = sbb - mb * mb;
            const double cov = sab - ma * mb;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++positions;
        }
    }
    return total / static_cast<double>(positions);
}

} // namespace

template <typename T>
double psnr(const Tensor<T>& xhat, const Tensor<T>& x, double peak) {
    if (!xhat.same_shape(x)) {
        throw ShapeError("psnr: shape mismatch " + xhat.shape_string() + " vs " + x.shape_string());
    }
    if (peak <= 0) throw ValueError("psnr: peak must be positive");
    double mse = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double d = static_cast<double>(xhat[i]) - static_cast<double>(x[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(x.numel());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

template <typename T>
double ssim(const Tensor<T>& xhat, const Tensor<T>& x, double peak) {
    if (!xhat.same_shape(x)) {
        throw ShapeError("ssim: shape mismatch " + xhat.shape_string() + " vs " + x.shape_string());
    }
    if (x.rank() < 2) throw ShapeError("ssim: need at least 2D frames, got " + x.shape_string());
    const std::size_t ny = x.dim(x.rank() - 1), nx = x.dim(x.rank() - 2);
    if (nx < kWindow || ny < kWindow) {
        throw ShapeError("ssim: frames " + x.shape_string() + " smaller than the 11x11 window");
    }
    const std::size_t frame = nx * ny, frames = x.numel() / frame;
    const auto w = gaussian_window();
    const double c1 = (kK1 * peak) * (kK1 * peak);
    const double c2 = (kK2 * peak) * (kK2 * peak);

    std::vector<double> a(frame), b(frame);
    double total = 0.0;
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t i = 0; i < frame; ++i) {
            a[i] = static_cast<double>(xhat[f * frame + i]);
            b[i] = static_cast<double>(x[f * frame + i]);
        }
        total += ssim_frame(a.data(), b.data(), nx, ny, w, c1, c2);
    }
    return total / static_cast<double>(frames);
}

#define REVSCI_INSTANTIATE_METRICS(T)                                      \
    template double psnr<T>(const Tensor<T>&, const Tensor<T>&, double);   \
    template double ssim<T>(const Tensor<T>&, const Tensor<T>&, double);

REVSCI_INSTANTIATE_METRICS(float)
REVSCI_INSTANTIATE_METRICS(double)

#undef REVSCI_INSTANTIATE_METRICS

} // namespace revsci
