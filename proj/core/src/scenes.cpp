#include "revsci/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <tuple>

#include "revsci/errors.hpp"
#include "revsci/rng.hpp"
#include "revsci/rvt_io.hpp"

namespace revsci {

SceneKind parse_scene_kind(const std::string& name) {
    if (name == "moving_square") return SceneKind::moving_square;
    if (name == "bouncing_ball") return SceneKind::bouncing_ball;
    if (name == "sinusoid_texture") return SceneKind::sinusoid_texture;
    if (name == "file") return SceneKind::file;
    throw ValueError("unknown scene kind '" + name + "'");
}

std::string to_string(SceneKind kind) {
    switch (kind) {
    case SceneKind::moving_square: return "moving_square";
    case SceneKind::bouncing_ball: return "bouncing_ball";
    case SceneKind::sinusoid_texture: return "sinusoid_texture";
    case SceneKind::file: return "file";
    }
    throw ValueError("invalid SceneKind value");
}

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

// Per-channel intensities: a bright random hue for the foreground and a dim
// one for the background; grayscale uses channel 0 only.
struct Palette {
    std::array<double, 3> fg, bg;
};

Palette draw_palette(Rng& rng, bool color) {
    Palette p;
    if (!color) {
        p.fg = {rng.uniform(0.7, 1.0), 0, 0};
        p.bg = {rng.uniform(0.0, 0.2), 0, 0};
        return p;
    }
    for (int c = 0; c < 3; ++c) {
        p.fg[c] = rng.uniform(0.3, 1.0);
        p.bg[c] = rng.uniform(0.0, 0.2);
    }
    // Keep at least one saturated channel so the scene is clearly visible.
    p.fg[static_cast<std::size_t>(rng.below(3))] = 1.0;
    return p;
}

template <typename T>
Tensor<T> alloc_scene(const SceneSpec& spec) {
    if (spec.color) return Tensor<T>({3, spec.B, spec.nx, spec.ny});
    return Tensor<T>({spec.B, spec.nx, spec.ny});
}

template <typename T>
void paint(Tensor<T>& video, const SceneSpec& spec, std::size_t k, std::size_t i, std::size_t j,
           const std::array<double, 3>& value) {
    if (spec.color) {
        for (std::size_t c = 0; c < 3; ++c) video(c, k, i, j) = static_cast<T>(value[c]);
    } else {
        video(k, i, j) = static_cast<T>(value[0]);
    }
}

template <typename T>
Tensor<T> render_moving_square(const SceneSpec& spec, Rng& rng) {
    const Palette pal = draw_palette(rng, spec.color);
    const std::size_t side =
        std::max<std::size_t>(2, static_cast<std::size_t>(rng.uniform(
                                     static_cast<double>(spec.nx) / 6.0,
                                     static_cast<double>(spec.nx) / 3.0)));
    const std::size_t x0 = static_cast<std::size_t>(rng.below(spec.nx));
    const std::size_t y0 = static_cast<std::size_t>(rng.below(spec.ny));
    // One of eight compass directions, scaled by the per-frame velocity.
    const std::array<std::array<int, 2>, 8> dirs{{{1, 0}, {0, 1}, {1, 1}, {-1, 0},
                                                  {0, -1}, {1, -1}, {-1, 1}, {-1, -1}}};
    const auto dir = dirs[static_cast<std::size_t>(rng.below(8))];

    Tensor<T> video = alloc_scene<T>(spec);
    const auto snx = static_cast<std::ptrdiff_t>(spec.nx);
    const auto sny = static_cast<std::ptrdiff_t>(spec.ny);
    for (std::size_t k = 0; k < spec.B; ++k) {
        const auto shift_x = static_cast<std::ptrdiff_t>(
            std::llround(spec.velocity * static_cast<double>(k) * dir[0]));
        const auto shift_y = static_cast<std::ptrdiff_t>(
            std::llround(spec.velocity * static_cast<double>(k) * dir[1]));
        for (std::size_t i = 0; i < spec.nx; ++i) {
            // Undo the frame's shift and wrap to find the frame-0 cell.
            const std::size_t ci =
                static_cast<std::size_t>(((static_cast<std::ptrdiff_t>(i) - shift_x) % snx + snx) % snx);
            const bool in_rows = (ci - x0 + spec.nx) % spec.nx < side;
            for (std::size_t j = 0; j < spec.ny; ++j) {
                const std::size_t cj = static_cast<std::size_t>(
                    ((static_cast<std::ptrdiff_t>(j) - shift_y) % sny + sny) % sny);
                const bool inside = in_rows && (cj - y0 + spec.ny) % spec.ny < side;
                paint(video, spec, k, i, j, inside ? pal.fg : pal.bg);
            }
        }
    }
    return video;
}

template <typename T>
Tensor<T> render_bouncing_ball(const SceneSpec& spec, Rng& rng) {
    const Palette pal = draw_palette(rng, spec.color);
    const double r = rng.uniform(static_cast<double>(spec.nx) / 10.0,
                                 static_cast<double>(spec.nx) / 5.0);
    double px = rng.uniform(r, static_cast<double>(spec.nx) - 1.0 - r);
    double py = rng.uniform(r, static_cast<double>(spec.ny) - 1.0 - r);
    const double angle = rng.uniform(0.0, kTau);
    double vx = spec.velocity * std::cos(angle);
    double vy = spec.velocity * std::sin(angle);

    Tensor<T> video = alloc_scene<T>(spec);
    for (std::size_t k = 0; k < spec.B; ++k) {
        for (std::size_t i = 0; i < spec.nx; ++i) {
            for (std::size_t j = 0; j < spec.ny; ++j) {
                const double di = static_cast<double>(i) - px;
                const double dj = static_cast<double>(j) - py;
                paint(video, spec, k, i, j, di * di + dj * dj <= r * r ? pal.fg : pal.bg);
            }
        }
        // Advance and reflect off the frame edges.
        px += vx;
        py += vy;
        if (px < r) { px = 2 * r - px; vx = -vx; }
        if (px > spec.nx - 1.0 - r) { px = 2 * (spec.nx - 1.0 - r) - px; vx = -vx; }
        if (py < r) { py = 2 * r - py; vy = -vy; }
        if (py > spec.ny - 1.0 - r) { py = 2 * (spec.ny - 1.0 - r) - py; vy = -vy; }
    }
    return video;
}

template <typename T>
Tensor<T> render_sinusoid(const SceneSpec& spec, Rng& rng) {
    const double fi = rng.uniform(1.0, 6.0) / static_cast<double>(spec.nx);
    const double fj = rng.uniform(1.0, 6.0) / static_cast<double>(spec.ny);
    const double phase0 = rng.uniform(0.0, kTau);
    // velocity = phase cycles drifted across the whole clip.
    const double omega = kTau * spec.velocity / static_cast<double>(spec.B);
    std::array<double, 3> channel_shift{0.0, 0.0, 0.0};
    if (spec.color) channel_shift = {0.0, rng.uniform(0.0, kTau), rng.uniform(0.0, kTau)};

    Tensor<T> video = alloc_scene<T>(spec);
    const std::size_t channels = spec.color ? 3 : 1;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t k = 0; k < spec.B; ++k) {
            const double phase = phase0 + omega * static_cast<double>(k) + channel_shift[c];
            for (std::size_t i = 0; i < spec.nx; ++i) {
                for (std::size_t j = 0; j < spec.ny; ++j) {
                    const double v = 0.5 + 0.5 * std::sin(kTau * (fi * i + fj * j) + phase);
                    if (spec.color) {
                        video(c, k, i, j) = static_cast<T>(v);
                    } else {
                        video(k, i, j) = static_cast<T>(v);
                    }
                }
            }
        }
    }
    return video;
}

template <typename T>
Tensor<T> load_clip(const SceneSpec& spec) {
    if (spec.path.empty()) throw ValueError("synth_video: file scene needs a path");
    Tensor<T> video = read_rvt_as<T>(spec.path);
    const std::size_t want_rank = spec.color ? 4 : 3;
    if (video.rank() != want_rank) {
        throw ShapeError("synth_video: clip " + spec.path + " has shape " + video.shape_string() +
                         ", expected rank " + std::to_string(want_rank));
    }
    for (auto& v : video.vec()) v = std::clamp(v, T(0), T(1));
    return video;
}

} // namespace

template <typename T>
Tensor<T> synth_video(const SceneSpec& spec) {
    if (spec.B < 1 || spec.nx < 4 || spec.ny < 4) {
        throw ValueError("synth_video: scene extents too small");
    }
    if (spec.kind == SceneKind::file) return load_clip<T>(spec);
    Rng rng = Rng(spec.seed).derive(to_string(spec.kind));
    switch (spec.kind) {
    case SceneKind::moving_square: return render_moving_square<T>(spec, rng);
    case SceneKind::bouncing_ball: return render_bouncing_ball<T>(spec, rng);
    case SceneKind::sinusoid_texture: return render_sinusoid<T>(spec, rng);
    case SceneKind::file: break;
    }
    throw ValueError("invalid SceneKind value");
}

namespace {

// Crop [t0, t0+B) x [x0, x0+nx) x [y0, y0+ny) with optional flips, for both
// [B, nx, ny] and [3, B, nx, ny] clips.
template <typename T>
Tensor<T> crop_clip(const Tensor<T>& clip, std::array<std::size_t, 3> crop, std::size_t t0,
                    std::size_t x0, std::size_t y0, bool flip_x, bool flip_y) {
    const bool color = clip.rank() == 4;
    const auto [B, nx, ny] = std::tuple{crop[0], crop[1], crop[2]};
    Tensor<T> out = color ? Tensor<T>({3, B, nx, ny}) : Tensor<T>({B, nx, ny});
    const std::size_t channels = color ? 3 : 1;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t k = 0; k < B; ++k) {
            for (std::size_t i = 0; i < nx; ++i) {
                const std::size_t si = x0 + (flip_x ? nx - 1 - i : i);
                for (std::size_t j = 0; j < ny; ++j) {
                    const std::size_t sj = y0 + (flip_y ? ny - 1 - j : j);
                    const T v = color ? clip(c, t0 + k, si, sj) : clip(t0 + k, si, sj);
                    if (color) {
                        out(c, k, i, j) = v;
                    } else {
                        out(k, i, j) = v;
                    }
                }
            }
        }
    }
    return out;
}

} // namespace

template <typename T>
std::vector<Tensor<T>> ingest_video_dir(const std::string& dir, std::array<std::size_t, 3> crop,
                                        std::size_t count, std::uint64_t seed, bool augment) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("ingest_video_dir: " + dir + " is not a directory");

    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".rvt") {
            paths.push_back(entry.path());
        }
    }
    std::sort(paths.begin(), paths.end());

    std::vector<Tensor<T>> clips;
    for (const auto& path : paths) {
        Tensor<T> clip = read_rvt_as<T>(path);
        const bool color = clip.rank() == 4 && clip.dim(0) == 3;
        if (!color && clip.rank() != 3) {
            std::cerr << "ingest: skipping " << path << " (shape " << clip.shape_string() << ")\n";
            continue;
        }
        const std::size_t off = color ? 1 : 0;
        if (clip.dim(off) < crop[0] || clip.dim(off + 1) < crop[1] || clip.dim(off + 2) < crop[2]) {
            std::cerr << "ingest: skipping " << path << " (shape " << clip.shape_string()
                      << " smaller than crop)\n";
            continue;
        }
        if (!clips.empty() && clips.front().rank() != clip.rank()) {
            std::cerr << "ingest: skipping " << path << " (mixing color and grayscale clips)\n";
            continue;
        }
        clips.push_back(std::move(clip));
    }
    if (clips.empty()) throw IoError("ingest_video_dir: no usable clips in " + dir);

    Rng rng = Rng(seed).derive("ingest");
    std::vector<Tensor<T>> cubes;
    cubes.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
        const Tensor<T>& clip = clips[static_cast<std::size_t>(rng.below(clips.size()))];
        const std::size_t off = clip.rank() == 4 ? 1 : 0;
        const std::size_t t0 = static_cast<std::size_t>(rng.below(clip.dim(off) - crop[0] + 1));
        const std::size_t x0 = static_cast<std::size_t>(rng.below(clip.dim(off + 1) - crop[1] + 1));
        const std::size_t y0 = static_cast<std::size_t>(rng.below(clip.dim(off + 2) - crop[2] + 1));
        const bool flip_x = augment && rng.bernoulli(0.5);
        const bool flip_y = augment && rng.bernoulli(0.5);
        cubes.push_back(crop_clip(clip, crop, t0, x0, y0, flip_x, flip_y));
    }
    return cubes;
}

#define REVSCI_INSTANTIATE_SCENES(T)                                                     \
    template Tensor<T> synth_video<T>(const SceneSpec&);                                 \
    template std::vector<Tensor<T>> ingest_video_dir<T>(const std::string&,              \
                                                        std::array<std::size_t, 3>,      \
                                                        std::size_t, std::uint64_t, bool);

REVSCI_INSTANTIATE_SCENES(float)
REVSCI_INSTANTIATE_SCENES(double)

#undef REVSCI_INSTANTIATE_SCENES

} // namespace revsci
