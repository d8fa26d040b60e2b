#include "vt/numkit/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace vt::numkit {

namespace {
constexpr const char* kFormat = "vt-checkpoint-v1";
}

const Tensor<float>& Checkpoint::tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return t;
    }
    throw DataError("checkpoint has no tensor named '" + name + "'");
}

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, Tensor<float>>>& tensors,
                     const nlohmann::json& extra_header) {
    nlohmann::json header = extra_header;
    header["format"] = kFormat;
    header["dtype"] = "f32le";
    nlohmann::json registry = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        registry.push_back({{"name", name},
                            {"shape", t.shape()},
                            {"offset", offset},
                            {"count", t.data().size()}});
        offset += t.data().size();
    }
    header["tensors"] = std::move(registry);

    const std::string hbytes = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path.string());
    const std::uint64_t hlen = hbytes.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hbytes.data(), static_cast<std::streamsize>(hbytes.size()));
    for (const auto& [name, t] : tensors) {
        out.write(reinterpret_cast<const char*>(t.data().data()),
                  static_cast<std::streamsize>(t.data().size() * sizeof(float)));
    }
    if (!out) throw DataError("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path.string());
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!in || hlen == 0 || hlen > (1ull << 30)) {
        throw DataError("corrupt checkpoint header length in " + path.string());
    }
    std::string hbytes(hlen, '\0');
    in.read(hbytes.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw DataError("truncated checkpoint header in " + path.string());

    Checkpoint ckpt;
    ckpt.header = nlohmann::json::parse(hbytes, nullptr, false);
    if (ckpt.header.is_discarded() || ckpt.header.value("format", "") != kFormat) {
        throw DataError("unrecognized checkpoint format in " + path.string());
    }
    for (const auto& entry : ckpt.header.at("tensors")) {
        const std::string name = entry.at("name");
        std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        const std::uint64_t count = entry.at("count");
        std::vector<float> data(count);
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        if (!in) throw DataError("truncated tensor '" + name + "' in " + path.string());
        ckpt.tensors.emplace_back(name, Tensor<float>::from_data(std::move(data), std::move(shape)));
    }
    return ckpt;
}

}  // namespace vt::numkit
