// Command-line front end: simulate snapshots, train, reconstruct, evaluate,
// and run the gradient/memory verification modes. All structured output is
// JSON so scripts and tests can parse it; errors go to stderr as JSON too.
// Exit codes: 0 success, 1 usage/input error, 2 numerical failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "revsci/checkpoint.hpp"
#include "revsci/engine.hpp"
#include "revsci/errors.hpp"
#include "revsci/metrics.hpp"
#include "revsci/network.hpp"
#include "revsci/optim.hpp"
#include "revsci/rng.hpp"
#include "revsci/rvt_io.hpp"
#include "revsci/scenes.hpp"
#include "revsci/sci.hpp"
#include "revsci/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace revsci;

namespace {

struct CommonArgs {
    std::uint64_t seed = 1;
    std::string dtype = "f32";
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--seed", args.seed, "Random seed");
    cmd->add_option("--dtype", args.dtype, "Scalar type")
        ->check(CLI::IsMember({"f32", "f64"}))
        ->capture_default_str();
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    CommonArgs common;
    std::size_t B = 8, nx = 64, ny = 64;
    std::string scheme = "shifting";
    double sigma = 0.0;
    bool color = false;
    std::string scene = "moving_square";
    double velocity = 1.0;
    std::string input; // use a clip container instead of a synthetic scene
    std::string out = "sim";
    bool require_coverage = false;
};

template <typename T>
int run_simulate(const SimulateArgs& args) {
    SceneSpec spec;
    spec.kind = args.input.empty() ? parse_scene_kind(args.scene) : SceneKind::file;
    spec.path = args.input;
    spec.color = args.color;
    spec.B = args.B;
    spec.nx = args.nx;
    spec.ny = args.ny;
    spec.velocity = args.velocity;
    spec.seed = mix_seed(args.common.seed, 1);
    Tensor<T> truth = synth_video<T>(spec);
    if (spec.kind == SceneKind::file) {
        spec.B = truth.dim(args.color ? 1 : 0);
        spec.nx = truth.dim(args.color ? 2 : 1);
        spec.ny = truth.dim(args.color ? 3 : 2);
    }

    MaskOptions options;
    options.require_coverage = args.require_coverage;
    const MaskSet<T> masks = generate_masks<T>(spec.B, spec.nx, spec.ny,
                                               parse_mask_scheme(args.scheme),
                                               mix_seed(args.common.seed, 2), options);
    Measurement<T> m = args.color
                           ? capture(bayer_mosaic(truth), masks, static_cast<T>(args.sigma),
                                     mix_seed(args.common.seed, 3))
                           : capture(truth, masks, static_cast<T>(args.sigma),
                                     mix_seed(args.common.seed, 3));
    m.color = args.color;

    fs::create_directories(args.out);
    const json meta{{"B", spec.B},         {"nx", spec.nx},       {"ny", spec.ny},
                    {"scheme", args.scheme}, {"seed", args.common.seed}, {"sigma", args.sigma},
                    {"color", args.color},  {"scene", to_string(spec.kind)},
                    {"dtype", args.common.dtype}};
    const fs::path out(args.out);
    write_rvt(out / "truth.rvt", truth);
    write_sidecar(out / "truth.rvt", meta.dump(2));
    write_rvt(out / "masks.rvt", masks.masks);
    write_sidecar(out / "masks.rvt", meta.dump(2));
    write_rvt(out / "measurement.rvt", m.y);
    write_sidecar(out / "measurement.rvt", meta.dump(2));
    std::cout << json{{"out", args.out},
                      {"truth", (out / "truth.rvt").string()},
                      {"masks", (out / "masks.rvt").string()},
                      {"measurement", (out / "measurement.rvt").string()}}
                     .dump()
              << "\n";
    return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
    CommonArgs common;
    std::string config_path;
    std::string out_dir;
    bool seed_set = false, dtype_set = false;
};

template <typename T>
int run_train(TrainConfig config) {
    const TrainResult<T> result = train<T>(config);
    std::cout << json{{"ckpt_last", result.ckpt_last.string()},
                      {"ckpt_best", result.ckpt_best.string()},
                      {"metrics", result.metrics_path.string()},
                      {"final_loss", result.final_loss},
                      {"best_eval_psnr", result.best_eval_psnr},
                      {"coarse_psnr", result.coarse_psnr}}
                     .dump()
              << "\n";
    return 0;
}

int dispatch_train(const TrainArgs& args) {
    TrainConfig config = train_config_from_json(read_text_file(args.config_path));
    if (args.seed_set) {
        config.seed = args.common.seed;
        config.network.seed = args.common.seed;
    }
    if (args.dtype_set) config.network.dtype = parse_dtype(args.common.dtype);
    if (!args.out_dir.empty()) config.out_dir = args.out_dir;
    return config.network.dtype == Dtype::f32 ? run_train<float>(config) : run_train<double>(config);
}

// ------------------------------------------------------------- reconstruct

struct ReconstructArgs {
    CommonArgs common;
    std::string measurement, masks, ckpt;
    std::string out = "xhat.rvt";
    bool no_eps_guard = false;
};

template <typename T>
int run_reconstruct(const ReconstructArgs& args, const NetworkConfig& config) {
    const Network<T> net = load_checkpoint<T>(args.ckpt);
    MaskSet<T> masks;
    masks.masks = read_rvt_as<T>(args.masks);
    if (masks.masks.rank() != 3) {
        throw ValueError("masks container must hold [B, nx, ny], got " +
                         masks.masks.shape_string());
    }
    Measurement<T> m;
    m.y = read_rvt_as<T>(args.measurement);
    m.color = config.color;

    const bool guard = !args.no_eps_guard;
    const CoarseEstimate<T> ce =
        config.color ? split_bayer_estimate(m, masks, guard) : coarse_estimate(m, masks, guard);
    const Tensor<T> xhat = forward(net, ce);
    if (!xhat.all_finite()) throw NumericalError("reconstruction contains non-finite values");

    write_rvt(args.out, xhat);
    write_sidecar(args.out, json{{"ckpt", args.ckpt},
                                 {"measurement", args.measurement},
                                 {"masks", args.masks},
                                 {"color", config.color}}
                                .dump(2));
    std::cout << json{{"out", args.out}, {"shape", xhat.shape()}}.dump() << "\n";
    return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
    CommonArgs common;
    std::string ckpt, data;
    std::size_t count = 8;
    std::size_t synthetic = 0; // evaluate on synthetic scenes instead of a directory
    std::string scheme = "shifting";
    double sigma = 0.0;
};

template <typename T>
int run_eval(const EvalArgs& args, const NetworkConfig& config) {
    const Network<T> net = load_checkpoint<T>(args.ckpt);

    std::vector<Tensor<T>> videos;
    std::size_t nx = 0, ny = 0;
    if (args.synthetic > 0) {
        for (std::size_t i = 0; i < args.synthetic; ++i) {
            SceneSpec spec;
            spec.kind = static_cast<SceneKind>(i % 3);
            spec.color = config.color;
            spec.B = config.B;
            spec.nx = nx = 64;
            spec.ny = ny = 64;
            spec.seed = mix_seed(args.common.seed, 500 + i);
            videos.push_back(synth_video<T>(spec));
        }
    } else {
        if (args.data.empty()) throw ValueError("eval needs --data DIR or --synthetic N");
        // Use each clip's native spatial size via a probe read of the first crop.
        auto cubes = ingest_video_dir<T>(args.data, {config.B, 64, 64}, args.count,
                                         args.common.seed);
        videos = std::move(cubes);
        nx = 64;
        ny = 64;
    }

    const MaskSet<T> masks = generate_masks<T>(config.B, nx, ny, parse_mask_scheme(args.scheme),
                                               mix_seed(args.common.seed, 2),
                                               MaskOptions{.require_coverage = false});
    const auto rows = evaluate(net, masks, videos, args.sigma, args.common.seed);

    json table = json::array();
    double mean_psnr = 0, mean_ssim = 0, mean_sec = 0;
    for (const auto& row : rows) {
        table.push_back({{"scene", row.scene},
                         {"psnr", row.psnr},
                         {"ssim", row.ssim},
                         {"seconds", row.seconds}});
        mean_psnr += row.psnr;
        mean_ssim += row.ssim;
        mean_sec += row.seconds;
    }
    const double n = static_cast<double>(rows.size());
    std::cout << json{{"rows", table},
                      {"mean", {{"psnr", mean_psnr / n}, {"ssim", mean_ssim / n},
                                {"seconds", mean_sec / n}}}}
                     .dump()
              << "\n";
    return 0;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
    CommonArgs common;
    std::size_t c1 = 8, m = 2, L = 2, B = 4, nx = 16, ny = 16;
    std::size_t samples = 100;
    double step = 1e-3;
};

template <typename T>
int run_gradcheck(const GradcheckArgs& args) {
    NetworkConfig config;
    config.c1 = args.c1;
    config.m = args.m;
    config.L = args.L;
    config.B = args.B;
    config.dtype = std::is_same_v<T, float> ? Dtype::f32 : Dtype::f64;
    config.seed = args.common.seed;
    Network<T> net = build_network<T>(config);

    SceneSpec spec;
    spec.B = args.B;
    spec.nx = args.nx;
    spec.ny = args.ny;
    spec.seed = mix_seed(args.common.seed, 4);
    const Tensor<T> video = synth_video<T>(spec);
    const MaskSet<T> masks =
        generate_masks<T>(args.B, args.nx, args.ny, MaskScheme::bernoulli,
                          mix_seed(args.common.seed, 2), MaskOptions{.require_coverage = false});
    const CoarseEstimate<T> ce = coarse_estimate(capture(video, masks), masks, true);
    const Tensor<T> input = network_input(ce);
    const Tensor<T> truth = video.reshaped({1, args.B, args.nx, args.ny});

    auto [naive, mem_n] = backward_naive(net, input, truth);
    auto [rev, mem_r] = backward_reversible(net, input, truth);

    double parity = 0.0;
    for (const auto& [name, g] : naive.grads) {
        const auto& h = rev.grads.at(name);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            const double a = static_cast<double>(g[i]), b = static_cast<double>(h[i]);
            const double scale = std::max({std::abs(a), std::abs(b), 1e-12});
            parity = std::max(parity, std::abs(a - b) / scale);
        }
    }
    const double fd_naive =
        finite_difference_check(net, input, truth, naive.grads, args.samples, args.step,
                                args.common.seed);
    const double fd_rev =
        finite_difference_check(net, input, truth, rev.grads, args.samples, args.step,
                                args.common.seed);

    std::cout << json{{"loss", naive.loss},
                      {"parameters", count_parameters(net)},
                      {"parity_max_rel", parity},
                      {"fd_max_rel", {{"naive", fd_naive}, {"reversible", fd_rev}}},
                      {"peak_activation_bytes",
                       {{"naive", mem_n.peak_activation_bytes},
                        {"reversible", mem_r.peak_activation_bytes}}}}
                     .dump()
              << "\n";
    return 0;
}

// ----------------------------------------------------------------- membench

struct MembenchArgs {
    CommonArgs common;
    std::vector<std::size_t> L{18, 28, 50};
    std::string engine = "both";
    std::size_t c1 = 8, m = 2, B = 8, nx = 16, ny = 16;
};

template <typename T>
int run_membench(const MembenchArgs& args) {
    SceneSpec spec;
    spec.B = args.B;
    spec.nx = args.nx;
    spec.ny = args.ny;
    spec.seed = mix_seed(args.common.seed, 4);
    const Tensor<T> video = synth_video<T>(spec);
    const MaskSet<T> masks =
        generate_masks<T>(args.B, args.nx, args.ny, MaskScheme::bernoulli,
                          mix_seed(args.common.seed, 2), MaskOptions{.require_coverage = false});
    const CoarseEstimate<T> ce = coarse_estimate(capture(video, masks), masks, true);
    const Tensor<T> input = network_input(ce);
    const Tensor<T> truth = video.reshaped({1, args.B, args.nx, args.ny});

    std::vector<Engine> engines;
    if (args.engine == "both") {
        engines = {Engine::naive, Engine::reversible};
    } else {
        engines = {parse_engine(args.engine)};
    }

    json table = json::array();
    for (const Engine engine : engines) {
        for (const std::size_t L : args.L) {
            NetworkConfig config;
            config.c1 = args.c1;
            config.m = args.m;
            config.L = L;
            config.B = args.B;
            config.dtype = std::is_same_v<T, float> ? Dtype::f32 : Dtype::f64;
            config.seed = args.common.seed;
            const Network<T> net = build_network<T>(config);
            const MemReport mem = backward(net, input, truth, engine).second;
            table.push_back({{"engine", to_string(engine)},
                             {"L", L},
                             {"peak_activation_bytes", mem.peak_activation_bytes},
                             {"stored_tensor_count", mem.stored_tensor_count}});
        }
    }
    std::cout << table.dump() << "\n";
    return 0;
}

template <typename Fn>
int with_dtype(const std::string& dtype, Fn&& fn) {
    return parse_dtype(dtype) == Dtype::f32 ? fn(float{}) : fn(double{});
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Video snapshot compressive imaging: simulation, reversible-network "
                 "reconstruction, training and verification"};
    app.require_subcommand(1);

    SimulateArgs sim;
    CLI::App* simulate = app.add_subcommand("simulate", "Synthesize a coded snapshot");
    add_common(simulate, sim.common);
    simulate->add_option("--B", sim.B, "Frames per snapshot")->capture_default_str();
    simulate->add_option("--nx", sim.nx, "Frame rows")->capture_default_str();
    simulate->add_option("--ny", sim.ny, "Frame columns")->capture_default_str();
    simulate->add_option("--scheme", sim.scheme, "Mask scheme")
        ->check(CLI::IsMember({"bernoulli", "shifting", "all_ones"}))
        ->capture_default_str();
    simulate->add_option("--sigma", sim.sigma, "Measurement noise sigma")->capture_default_str();
    simulate->add_flag("--color", sim.color, "Bayer-mosaic color snapshot");
    simulate->add_option("--scene", sim.scene, "Synthetic scene kind")
        ->check(CLI::IsMember({"moving_square", "bouncing_ball", "sinusoid_texture"}))
        ->capture_default_str();
    simulate->add_option("--velocity", sim.velocity, "Scene motion per frame")->capture_default_str();
    simulate->add_option("--input", sim.input, "Clip container to capture instead of a scene");
    simulate->add_option("--out", sim.out, "Output directory")->capture_default_str();
    simulate->add_flag("--require-coverage", sim.require_coverage,
                       "Reject mask draws that leave pixels uncovered");

    TrainArgs tr;
    CLI::App* train_cmd = app.add_subcommand("train", "Train a reconstruction network");
    add_common(train_cmd, tr.common);
    train_cmd->add_option("--config", tr.config_path, "Train config JSON")->required();
    train_cmd->add_option("--out", tr.out_dir, "Override the config's output directory");

    ReconstructArgs rec;
    CLI::App* reconstruct = app.add_subcommand("reconstruct", "Reconstruct a snapshot");
    add_common(reconstruct, rec.common);
    reconstruct->add_option("--measurement", rec.measurement, "Measurement container")->required();
    reconstruct->add_option("--masks", rec.masks, "Mask container")->required();
    reconstruct->add_option("--ckpt", rec.ckpt, "Checkpoint directory")->required();
    reconstruct->add_option("--out", rec.out, "Output container")->capture_default_str();
    reconstruct->add_flag("--no-eps-guard", rec.no_eps_guard,
                          "Fail on uncovered pixels instead of guarding the division");

    EvalArgs ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a dataset");
    add_common(eval_cmd, ev.common);
    eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint directory")->required();
    eval_cmd->add_option("--data", ev.data, "Directory of .rvt clips");
    eval_cmd->add_option("--count", ev.count, "Crops to evaluate")->capture_default_str();
    eval_cmd->add_option("--synthetic", ev.synthetic, "Evaluate on N synthetic scenes instead");
    eval_cmd->add_option("--scheme", ev.scheme, "Mask scheme")
        ->check(CLI::IsMember({"bernoulli", "shifting", "all_ones"}))
        ->capture_default_str();
    eval_cmd->add_option("--sigma", ev.sigma, "Measurement noise sigma")->capture_default_str();

    GradcheckArgs gc;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "Engine parity and finite differences");
    add_common(gradcheck, gc.common);
    gradcheck->add_option("--c1", gc.c1)->capture_default_str();
    gradcheck->add_option("--m", gc.m)->capture_default_str();
    gradcheck->add_option("--L", gc.L)->capture_default_str();
    gradcheck->add_option("--B", gc.B)->capture_default_str();
    gradcheck->add_option("--nx", gc.nx)->capture_default_str();
    gradcheck->add_option("--ny", gc.ny)->capture_default_str();
    gradcheck->add_option("--samples", gc.samples, "Sampled parameter elements")
        ->capture_default_str();
    gradcheck->add_option("--step", gc.step, "Finite-difference step")->capture_default_str();

    MembenchArgs mb;
    CLI::App* membench = app.add_subcommand("membench", "Activation-ledger peaks per engine");
    add_common(membench, mb.common);
    membench->add_option("--L", mb.L, "Block counts (comma separated)")
        ->delimiter(',')
        ->capture_default_str();
    membench->add_option("--engine", mb.engine, "naive, reversible or both")
        ->check(CLI::IsMember({"naive", "reversible", "both"}))
        ->capture_default_str();
    membench->add_option("--c1", mb.c1)->capture_default_str();
    membench->add_option("--m", mb.m)->capture_default_str();
    membench->add_option("--B", mb.B)->capture_default_str();
    membench->add_option("--nx", mb.nx)->capture_default_str();
    membench->add_option("--ny", mb.ny)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (simulate->parsed()) {
            return with_dtype(sim.common.dtype, [&](auto t) {
                return run_simulate<decltype(t)>(sim);
            });
        }
        if (train_cmd->parsed()) {
            tr.seed_set = train_cmd->count("--seed") > 0;
            tr.dtype_set = train_cmd->count("--dtype") > 0;
            return dispatch_train(tr);
        }
        if (reconstruct->parsed()) {
            const NetworkConfig config = read_checkpoint_config(rec.ckpt);
            return config.dtype == Dtype::f32 ? run_reconstruct<float>(rec, config)
                                              : run_reconstruct<double>(rec, config);
        }
        if (eval_cmd->parsed()) {
            const NetworkConfig config = read_checkpoint_config(ev.ckpt);
            return config.dtype == Dtype::f32 ? run_eval<float>(ev, config)
                                              : run_eval<double>(ev, config);
        }
        if (gradcheck->parsed()) {
            return with_dtype(gc.common.dtype, [&](auto t) {
                return run_gradcheck<decltype(t)>(gc);
            });
        }
        if (membench->parsed()) {
            return with_dtype(mb.common.dtype, [&](auto t) {
                return run_membench<decltype(t)>(mb);
            });
        }
    } catch (const NumericalError& e) {
        std::cerr << json{{"error", e.what()}, {"kind", "numerical"}}.dump() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", e.what()}, {"kind", "usage"}}.dump() << "\n";
        return 1;
    }
    return 1;
}
