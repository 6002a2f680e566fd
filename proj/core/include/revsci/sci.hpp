#pragma once

#include <cstdint>
#include <string>

#include "revsci/tensor.hpp"

namespace revsci {

// How the per-frame modulation masks are produced.
//   bernoulli: every element of every frame is an independent fair coin.
//   shifting:  one Bernoulli draw, frame k is frame 0 rolled down by k rows
//              (models a coded aperture on a translation stage).
//   all_ones:  no modulation; the snapshot is a plain frame sum.
enum class MaskScheme { bernoulli, shifting, all_ones };

MaskScheme parse_mask_scheme(const std::string& name);
std::string to_string(MaskScheme scheme);

// B binary modulation masks, one per video frame inside a snapshot.
template <typename T>
struct MaskSet {
    Tensor<T> masks; // [B, nx, ny], elements in {0, 1}
    MaskScheme scheme = MaskScheme::bernoulli;
    std::uint64_t seed = 0;

    std::size_t frames() const { return masks.dim(0); }
    std::size_t rows() const { return masks.dim(1); }
    std::size_t cols() const { return masks.dim(2); }

    // Per-pixel mask sum over frames, shape [nx, ny].
    Tensor<T> coverage() const;
};

// One coded snapshot as read off the sensor.
template <typename T>
struct Measurement {
    Tensor<T> y; // [nx, ny]; for color this is a Bayer mosaic frame
    bool color = false;
    T noise_sigma = T(0);
};

// Mask-modulated replicas of the normalized measurement; the network input.
template <typename T>
struct CoarseEstimate {
    // Grayscale: [B, nx, ny]. Color: [4, B, nx/2, ny/2] with the leading axis
    // ordered [R, G1, G2, B] to match an RGGB mosaic.
    Tensor<T> frames;
    // The normalized measurement: [nx, ny] grayscale, [4, nx/2, ny/2] color.
    Tensor<T> normalized;
    bool color = false;
};

// The linear sensing operator written as a single wide matrix acting on the
// stacked frame vector. Each frame contributes a diagonal block, so only the
// B diagonals are stored.
template <typename T>
struct SensingMatrix {
    Tensor<T> diagonals; // [B, nx*ny]

    std::size_t rows() const { return diagonals.dim(1); }
    std::size_t cols() const { return diagonals.dim(0) * diagonals.dim(1); }
    std::size_t nonzeros() const;

    // y = Phi x for x of length cols(), laid out frame-major.
    std::vector<T> apply(const std::vector<T>& x) const;

    // Materialized [rows, cols] matrix; intended for small problems only.
    Tensor<T> dense() const;
};

struct MaskOptions {
    // Random masks can leave a pixel dark in every frame, which makes the
    // measurement there carry no signal. By default such draws are retried
    // with a re-derived seed and rejected for good after max_retries.
    bool require_coverage = true;
    int max_retries = 16;
};

template <typename T>
MaskSet<T> generate_masks(std::size_t B, std::size_t nx, std::size_t ny, MaskScheme scheme,
                          std::uint64_t seed, const MaskOptions& options = {});

// Snapshot capture: sum of mask-modulated frames plus i.i.d. Gaussian noise of
// the given sigma (seeded separately so sigma=0 and sigma>0 share the signal).
template <typename T>
Measurement<T> capture(const Tensor<T>& video, const MaskSet<T>& masks, T noise_sigma = T(0),
                       std::uint64_t noise_seed = 0);

template <typename T>
SensingMatrix<T> flatten_sensing(const MaskSet<T>& masks);

// Divide the measurement by the mask coverage and re-modulate per frame.
// A pixel no frame covers is an error unless eps_guard is set, in which case
// 1e-8 is added to the denominator (the estimate there stays 0 anyway since
// every mask is 0).
template <typename T>
CoarseEstimate<T> coarse_estimate(const Measurement<T>& m, const MaskSet<T>& masks,
                                  bool eps_guard = false);

// Sample an RGB video down to a single Bayer plane per frame, RGGB layout:
// even row/even col -> R, even/odd -> G, odd/even -> G, odd/odd -> B.
template <typename T>
Tensor<T> bayer_mosaic(const Tensor<T>& rgb_video); // [3, B, nx, ny] -> [B, nx, ny]

// Color counterpart of coarse_estimate: splits the mosaic measurement into the
// four Bayer-site sub-measurements (each nx/2 x ny/2), normalizes each by the
// mask coverage sampled at the same sites, and re-modulates per frame.
template <typename T>
CoarseEstimate<T> split_bayer_estimate(const Measurement<T>& m, const MaskSet<T>& masks,
                                       bool eps_guard = false);

} // namespace revsci
