#include "revsci/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "config_json.hpp"
#include "revsci/errors.hpp"
#include "revsci/rvt_io.hpp"

namespace revsci {

using nlohmann::json;

namespace detail {

json network_config_to_obj(const NetworkConfig& config) {
    return json{{"c1", config.c1},     {"m", config.m},
                {"L", config.L},       {"B", config.B},
                {"color", config.color}, {"dtype", to_string(config.dtype)},
                {"seed", config.seed}};
}

NetworkConfig network_config_from_obj(const json& j) {
    NetworkConfig config;
    config.c1 = j.at("c1").get<std::size_t>();
    config.m = j.at("m").get<std::size_t>();
    config.L = j.at("L").get<std::size_t>();
    config.B = j.at("B").get<std::size_t>();
    config.color = j.at("color").get<bool>();
    config.dtype = parse_dtype(j.at("dtype").get<std::string>());
    config.seed = j.at("seed").get<std::uint64_t>();
    config.validate();
    return config;
}

} // namespace detail

namespace {

using detail::network_config_from_obj;
using detail::network_config_to_obj;

json read_manifest(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint manifest " + path.string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::parse_error& e) {
        throw IoError("malformed checkpoint manifest " + path.string() + ": " + e.what());
    }
    if (manifest.value("format", "") != "revsci-checkpoint") {
        throw IoError(path.string() + " is not a revsci checkpoint manifest");
    }
    return manifest;
}

} // namespace

std::string to_json(const NetworkConfig& config) {
    return network_config_to_obj(config).dump(2);
}

NetworkConfig network_config_from_json(const std::string& text) {
    try {
        return network_config_from_obj(json::parse(text));
    } catch (const json::exception& e) {
        throw ValueError(std::string("malformed network config JSON: ") + e.what());
    }
}

template <typename T>
void save_checkpoint(const Network<T>& net, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json listing = json::array();
    for (const auto& param : parameters(net)) {
        const std::string file = param.name + ".rvt";
        write_rvt(dir / file, *param.tensor);
        listing.push_back({{"name", param.name}, {"file", file}});
    }
    json manifest{{"format", "revsci-checkpoint"},
                  {"version", 1},
                  {"config", network_config_to_obj(net.config)},
                  {"parameters", listing}};
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write checkpoint manifest in " + dir.string());
    out << manifest.dump(2) << "\n";
}

NetworkConfig read_checkpoint_config(const std::filesystem::path& dir) {
    return network_config_from_obj(read_manifest(dir).at("config"));
}

template <typename T>
Network<T> load_checkpoint(const std::filesystem::path& dir) {
    const json manifest = read_manifest(dir);
    const NetworkConfig config = network_config_from_obj(manifest.at("config"));
    const bool want_f32 = std::is_same_v<T, float>;
    if (want_f32 != (config.dtype == Dtype::f32)) {
        throw ValueError("checkpoint " + dir.string() + " holds " + to_string(config.dtype) +
                         " parameters; load it with the matching scalar type");
    }

    Network<T> net = build_network<T>(config);
    auto params = parameters(net);
    const auto& listing = manifest.at("parameters");
    if (listing.size() != params.size()) {
        throw IoError("checkpoint " + dir.string() + " lists " + std::to_string(listing.size()) +
                      " parameters, expected " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& entry = listing.at(i);
        if (entry.at("name").get<std::string>() != params[i].name) {
            throw IoError("checkpoint parameter " + std::to_string(i) + " is '" +
                          entry.at("name").get<std::string>() + "', expected '" + params[i].name + "'");
        }
        Tensor<T> loaded = read_rvt_as<T>(dir / entry.at("file").get<std::string>());
        if (!loaded.same_shape(*params[i].tensor)) {
            throw IoError("checkpoint parameter " + params[i].name + " has shape " +
                          loaded.shape_string() + ", expected " + params[i].tensor->shape_string());
        }
        *params[i].tensor = std::move(loaded);
    }
    return net;
}

template void save_checkpoint<float>(const Network<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const Network<double>&, const std::filesystem::path&);
template Network<float> load_checkpoint<float>(const std::filesystem::path&);
template Network<double> load_checkpoint<double>(const std::filesystem::path&);

} // namespace revsci
