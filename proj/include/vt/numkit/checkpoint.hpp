#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vt/numkit/tensor.hpp"

namespace vt::numkit {

// Parameter checkpoint: 8-byte little-endian header length, UTF-8 JSON header
// (tensor shape registry, seed, epoch, free-form descriptor), then all tensor
// data concatenated as little-endian 32-bit floats in registry order.
struct Checkpoint {
    nlohmann::json header;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;

    const Tensor<float>& tensor(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, Tensor<float>>>& tensors,
                     const nlohmann::json& extra_header);

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vt::numkit
