#pragma once

#include <filesystem>
#include <string>

#include "revsci/network.hpp"

namespace revsci {

// A checkpoint is a directory: manifest.json (format marker, network config,
// parameter listing) plus one .rvt container per parameter tensor.
template <typename T>
void save_checkpoint(const Network<T>& net, const std::filesystem::path& dir);

// Reads the manifest config and every parameter; validates that the listing
// matches the rebuilt network's parameter enumeration exactly.
template <typename T>
Network<T> load_checkpoint(const std::filesystem::path& dir);

// Config stored in a checkpoint manifest, without loading the parameters.
NetworkConfig read_checkpoint_config(const std::filesystem::path& dir);

} // namespace revsci
