#include "revsci/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "config_json.hpp"
#include "revsci/checkpoint.hpp"
#include "revsci/errors.hpp"
#include "revsci/metrics.hpp"
#include "revsci/optim.hpp"
#include "revsci/rng.hpp"

namespace revsci {

using nlohmann::json;

std::string to_json(const TrainConfig& config) {
    return json{{"network", detail::network_config_to_obj(config.network)},
                {"epochs", config.epochs},
                {"batch_size", config.batch_size},
                {"steps_per_epoch", config.steps_per_epoch},
                {"lr0", config.lr0},
                {"engine", to_string(config.engine)},
                {"seed", config.seed},
                {"scheme", to_string(config.scheme)},
                {"nx", config.nx},
                {"ny", config.ny},
                {"train_scenes", config.train_scenes},
                {"eval_scenes", config.eval_scenes},
                {"noise_sigma", config.noise_sigma},
                {"data_dir", config.data_dir},
                {"out_dir", config.out_dir.string()}}
        .dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
    TrainConfig config;
    try {
        const json j = json::parse(text);
        if (j.contains("network")) config.network = detail::network_config_from_obj(j.at("network"));
        config.epochs = j.value("epochs", config.epochs);
        config.batch_size = j.value("batch_size", config.batch_size);
        config.steps_per_epoch = j.value("steps_per_epoch", config.steps_per_epoch);
        config.lr0 = j.value("lr0", config.lr0);
        if (j.contains("engine")) config.engine = parse_engine(j.at("engine").get<std::string>());
        config.seed = j.value("seed", config.seed);
        if (j.contains("scheme")) config.scheme = parse_mask_scheme(j.at("scheme").get<std::string>());
        config.nx = j.value("nx", config.nx);
        config.ny = j.value("ny", config.ny);
        config.train_scenes = j.value("train_scenes", config.train_scenes);
        config.eval_scenes = j.value("eval_scenes", config.eval_scenes);
        config.noise_sigma = j.value("noise_sigma", config.noise_sigma);
        config.data_dir = j.value("data_dir", config.data_dir);
        config.out_dir = j.value("out_dir", config.out_dir.string());
    } catch (const json::exception& e) {
        throw ValueError(std::string("malformed train config JSON: ") + e.what());
    }
    return config;
}

namespace {

// One scene prepared for training: the simulated snapshot turned into the
// network input, and the ground truth shaped like the network output.
template <typename T>
struct Sample {
    Tensor<T> input;
    Tensor<T> truth;
    double coarse_psnr = 0.0; // how well the raw network input already scores
};

// Fill in a full-resolution RGB video from the four Bayer-site estimates:
// every 2x2 cell takes its R/B from its own sites and averages the two greens.
template <typename T>
Tensor<T> coarse_color_video(const CoarseEstimate<T>& ce) {
    const std::size_t B = ce.frames.dim(1), hx = ce.frames.dim(2), hy = ce.frames.dim(3);
    Tensor<T> video({3, B, 2 * hx, 2 * hy});
    for (std::size_t k = 0; k < B; ++k) {
        for (std::size_t i = 0; i < hx; ++i) {
            for (std::size_t j = 0; j < hy; ++j) {
                const T r = ce.frames(0, k, i, j);
                const T g = (ce.frames(1, k, i, j) + ce.frames(2, k, i, j)) / T(2);
                const T b = ce.frames(3, k, i, j);
                for (std::size_t di = 0; di < 2; ++di) {
                    for (std::size_t dj = 0; dj < 2; ++dj) {
                        video(0, k, 2 * i + di, 2 * j + dj) = r;
                        video(1, k, 2 * i + di, 2 * j + dj) = g;
                        video(2, k, 2 * i + di, 2 * j + dj) = b;
                    }
                }
            }
        }
    }
    return video;
}

template <typename T>
Sample<T> prepare_sample(const Tensor<T>& video, const MaskSet<T>& masks, bool color,
                         double noise_sigma, std::uint64_t noise_seed) {
    Sample<T> sample;
    if (color) {
        Measurement<T> m = capture(bayer_mosaic(video), masks, static_cast<T>(noise_sigma), noise_seed);
        m.color = true;
        const CoarseEstimate<T> ce = split_bayer_estimate(m, masks, /*eps_guard=*/true);
        sample.input = network_input(ce);
        sample.truth = video;
        sample.coarse_psnr = psnr(coarse_color_video(ce), video);
    } else {
        const Measurement<T> m = capture(video, masks, static_cast<T>(noise_sigma), noise_seed);
        const CoarseEstimate<T> ce = coarse_estimate(m, masks, /*eps_guard=*/true);
        sample.input = network_input(ce);
        const auto& s = video.shape();
        sample.truth = video.reshaped({1, s[0], s[1], s[2]});
        sample.coarse_psnr = psnr(ce.frames, video);
    }
    return sample;
}

// Deterministic variety across a scene pool: rotate through the synthetic
// kinds and a few velocities, one fresh seed per scene.
SceneSpec pool_spec(const TrainConfig& config, std::uint64_t stream, std::size_t index) {
    static constexpr SceneKind kinds[3] = {SceneKind::moving_square, SceneKind::bouncing_ball,
                                           SceneKind::sinusoid_texture};
    SceneSpec spec;
    spec.kind = kinds[index % 3];
    spec.color = config.network.color;
    spec.B = config.network.B;
    spec.nx = config.nx;
    spec.ny = config.ny;
    spec.velocity = 0.5 + 0.5 * static_cast<double>(index % 4);
    spec.seed = mix_seed(mix_seed(config.seed, stream), index);
    return spec;
}

template <typename T>
std::vector<Tensor<T>> pool_videos(const TrainConfig& config, std::uint64_t stream,
                                   std::size_t count) {
    std::vector<Tensor<T>> videos;
    videos.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        videos.push_back(synth_video<T>(pool_spec(config, stream, i)));
    return videos;
}

} // namespace

template <typename T>
TrainResult<T> train(const TrainConfig& config) {
    config.network.validate();
    if (config.batch_size < 1) throw ValueError("train: batch size must be at least 1");
    if (config.train_scenes < 1 && config.data_dir.empty())
        throw ValueError("train: need at least one training scene");
    std::filesystem::create_directories(config.out_dir);

    // One fixed mask set for the whole run. Random masks may leave a few
    // pixels dark across all frames at this scale, so the coarse estimates
    // run with the epsilon guard instead of demanding full coverage.
    MaskOptions mask_options;
    mask_options.require_coverage = false;
    const MaskSet<T> masks =
        generate_masks<T>(config.network.B, config.nx, config.ny, config.scheme,
                          mix_seed(config.seed, 0x6d61736bull), mask_options);

    // Ground-truth pools: synthetic by default, cropped user clips when a
    // data directory is given.
    std::vector<Tensor<T>> train_videos, eval_videos;
    if (config.data_dir.empty()) {
        train_videos = pool_videos<T>(config, 100, config.train_scenes);
        eval_videos = pool_videos<T>(config, 200, config.eval_scenes);
    } else {
        auto cubes = ingest_video_dir<T>(config.data_dir,
                                         {config.network.B, config.nx, config.ny},
                                         config.train_scenes + config.eval_scenes, config.seed);
        if (cubes.size() <= config.eval_scenes) {
            throw ValueError("train: not enough usable crops for the requested pools");
        }
        eval_videos.assign(cubes.end() - static_cast<std::ptrdiff_t>(config.eval_scenes),
                           cubes.end());
        cubes.resize(cubes.size() - config.eval_scenes);
        train_videos = std::move(cubes);
    }
    const bool eval_on_train = eval_videos.empty();
    const std::vector<Tensor<T>>& scoring_videos = eval_on_train ? train_videos : eval_videos;

    std::vector<Sample<T>> train_samples, eval_samples;
    for (std::size_t i = 0; i < train_videos.size(); ++i) {
        train_samples.push_back(prepare_sample(train_videos[i], masks, config.network.color,
                                               config.noise_sigma, mix_seed(config.seed, 300 + i)));
    }
    for (std::size_t i = 0; i < scoring_videos.size(); ++i) {
        eval_samples.push_back(prepare_sample(scoring_videos[i], masks, config.network.color,
                                              config.noise_sigma, mix_seed(config.seed, 600 + i)));
    }

    double coarse_psnr = 0.0;
    for (const auto& sample : eval_samples) coarse_psnr += sample.coarse_psnr;
    coarse_psnr /= static_cast<double>(eval_samples.size());

    TrainResult<T> result;
    result.net = build_network<T>(config.network);
    result.coarse_psnr = coarse_psnr;
    result.ckpt_last = config.out_dir / "ckpt_last";
    result.ckpt_best = config.out_dir / "ckpt_best";
    result.metrics_path = config.out_dir / "metrics.jsonl";

    auto params = parameters(result.net);
    AdamState<T> opt_state;
    Rng order = Rng(config.seed).derive("batch-order");

    std::ofstream metrics(result.metrics_path);
    if (!metrics) throw IoError("train: cannot write " + result.metrics_path.string());

    auto evaluate_pool = [&](double& out_psnr, double& out_ssim) {
        double p = 0.0, s = 0.0;
        for (const auto& sample : eval_samples) {
            const Tensor<T> xhat = forward(result.net, sample.input);
            p += psnr(xhat, sample.truth);
            s += ssim(xhat, sample.truth);
        }
        out_psnr = p / static_cast<double>(eval_samples.size());
        out_ssim = s / static_cast<double>(eval_samples.size());
    };

    result.best_eval_psnr = -std::numeric_limits<double>::infinity();
    save_checkpoint(result.net, result.ckpt_last);
    if (config.epochs == 0) {
        save_checkpoint(result.net, result.ckpt_best);
        return result;
    }

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        AdamConfig adam;
        adam.lr = lr_schedule(epoch, config.lr0);
        double epoch_loss = 0.0;

        for (std::size_t step = 0; step < config.steps_per_epoch; ++step) {
            GradReport<T> total;
            for (std::size_t b = 0; b < config.batch_size; ++b) {
                const auto& sample =
                    train_samples[static_cast<std::size_t>(order.below(train_samples.size()))];
                GradReport<T> rep;
                try {
                    rep = backward(result.net, sample.input, sample.truth, config.engine).first;
                } catch (const NumericalError&) {
                    save_checkpoint(result.net, result.ckpt_last);
                    throw;
                }
                if (b == 0) {
                    total = std::move(rep);
                } else {
                    total.loss += rep.loss;
                    for (auto& [name, grad] : rep.grads) total.grads.at(name) += grad;
                }
            }
            if (config.batch_size > 1) {
                const T inv = T(1) / static_cast<T>(config.batch_size);
                total.loss /= static_cast<double>(config.batch_size);
                for (auto& [name, grad] : total.grads) grad *= inv;
            }
            adam_step(params, total.grads, opt_state, adam);
            epoch_loss += total.loss;
        }
        epoch_loss /= static_cast<double>(config.steps_per_epoch);
        result.final_loss = epoch_loss;

        double eval_psnr = 0.0, eval_ssim = 0.0;
        evaluate_pool(eval_psnr, eval_ssim);
        save_checkpoint(result.net, result.ckpt_last);
        if (eval_psnr > result.best_eval_psnr) {
            result.best_eval_psnr = eval_psnr;
            save_checkpoint(result.net, result.ckpt_best);
        }
        metrics << json{{"epoch", epoch},
                        {"lr", adam.lr},
                        {"loss", epoch_loss},
                        {"eval_psnr", eval_psnr},
                        {"eval_ssim", eval_ssim},
                        {"coarse_psnr", coarse_psnr}}
                       .dump()
                << "\n"
                << std::flush;
    }
    return result;
}

template <typename T>
std::vector<EvalRow> evaluate(const Network<T>& net, const MaskSet<T>& masks,
                              const std::vector<Tensor<T>>& videos, double noise_sigma,
                              std::uint64_t seed) {
    std::vector<EvalRow> rows;
    rows.reserve(videos.size());
    for (std::size_t i = 0; i < videos.size(); ++i) {
        const Sample<T> sample = prepare_sample(videos[i], masks, net.config.color, noise_sigma,
                                                mix_seed(seed, 300 + i));
        const auto t0 = std::chrono::steady_clock::now();
        const Tensor<T> xhat = forward(net, sample.input);
        const auto t1 = std::chrono::steady_clock::now();

        EvalRow row;
        row.scene = "video-" + std::to_string(i);
        row.psnr = psnr(xhat, sample.truth);
        row.ssim = ssim(xhat, sample.truth);
        row.seconds = std::chrono::duration<double>(t1 - t0).count();
        rows.push_back(std::move(row));
    }
    return rows;
}

#define REVSCI_INSTANTIATE_TRAIN(T)                                                       \
    template struct TrainResult<T>;                                                       \
    template TrainResult<T> train<T>(const TrainConfig&);                                 \
    template std::vector<EvalRow> evaluate<T>(const Network<T>&, const MaskSet<T>&,       \
                                              const std::vector<Tensor<T>>&, double,      \
                                              std::uint64_t);

REVSCI_INSTANTIATE_TRAIN(float)
REVSCI_INSTANTIATE_TRAIN(double)

#undef REVSCI_INSTANTIATE_TRAIN

} // namespace revsci
