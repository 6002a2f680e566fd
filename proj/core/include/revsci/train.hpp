#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "revsci/engine.hpp"
#include "revsci/network.hpp"
#include "revsci/scenes.hpp"

namespace revsci {

struct TrainConfig {
    NetworkConfig network;
    std::size_t epochs = 5;
    std::size_t batch_size = 1;
    std::size_t steps_per_epoch = 100;
    double lr0 = 2e-4;
    Engine engine = Engine::reversible;
    std::uint64_t seed = 1;
    MaskScheme scheme = MaskScheme::shifting;
    std::size_t nx = 64;
    std::size_t ny = 64;
    std::size_t train_scenes = 32; // synthetic training pool size
    std::size_t eval_scenes = 4;   // held-out pool; 0 evaluates on the training pool
    double noise_sigma = 0.0;
    std::string data_dir;               // train on .rvt clips instead of synthetic scenes
    std::filesystem::path out_dir = "."; // metrics.jsonl, ckpt_last/, ckpt_best/
};

std::string to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);

template <typename T>
struct TrainResult {
    Network<T> net;            // final parameters (== ckpt_last)
    double final_loss = 0.0;
    double best_eval_psnr = 0.0;
    double coarse_psnr = 0.0;  // the input baseline on the evaluation pool
    std::filesystem::path ckpt_last, ckpt_best, metrics_path;
};

// Runs the training loop: synthetic (or ingested) scenes are captured through
// a fixed mask set, the network learns to reconstruct them from the coarse
// estimates. Per-epoch metrics go to out_dir/metrics.jsonl as JSON lines;
// checkpoints to out_dir/ckpt_last and out_dir/ckpt_best. A non-finite loss
// aborts after saving the last good parameters.
template <typename T>
TrainResult<T> train(const TrainConfig& config);

struct EvalRow {
    std::string scene;
    double psnr = 0.0;
    double ssim = 0.0;
    double seconds = 0.0; // reconstruction wall time per measurement
};

// Capture -> coarse estimate -> reconstruct -> score, one row per video.
template <typename T>
std::vector<EvalRow> evaluate(const Network<T>& net, const MaskSet<T>& masks,
                              const std::vector<Tensor<T>>& videos, double noise_sigma = 0.0,
                              std::uint64_t seed = 0);

} // namespace revsci
