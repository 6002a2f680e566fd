#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "revsci/tensor.hpp"

namespace revsci {

// Synthetic test clips. Stand-ins for real footage: simple shapes and
// textures with deterministic motion, all values inside [0, 1].
enum class SceneKind { moving_square, bouncing_ball, sinusoid_texture, file };

SceneKind parse_scene_kind(const std::string& name);
std::string to_string(SceneKind kind);

struct SceneSpec {
    SceneKind kind = SceneKind::moving_square;
    bool color = false;
    std::size_t B = 8;  // frames
    std::size_t nx = 64;
    std::size_t ny = 64;
    double velocity = 1.0; // pixels (or phase cycles) per frame
    std::uint64_t seed = 0;
    std::string path; // source container for kind == file
};

// Renders [B, nx, ny], or [3, B, nx, ny] when spec.color is set.
template <typename T>
Tensor<T> synth_video(const SceneSpec& spec);

// Random spatio-temporal crops (with flips when augment is set) from every
// .rvt clip in a directory. Clips too small for the crop are skipped with a
// warning on stderr; an empty result is an error.
template <typename T>
std::vector<Tensor<T>> ingest_video_dir(const std::string& dir, std::array<std::size_t, 3> crop,
                                        std::size_t count, std::uint64_t seed, bool augment = true);

} // namespace revsci
