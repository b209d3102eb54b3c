#include "stflow/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "stflow/ften.hpp"
#include "stflow/serialize.hpp"

namespace stflow {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'F', 'C', 'K', 'P', 'T', '1'};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    check_state(ckpt.state, ckpt.config);
    std::ostringstream payload;
    nlohmann::json params = nlohmann::json::array();
    for (std::size_t i = 0; i < ckpt.state.size(); ++i) {
        const auto& t = ckpt.state.tensors()[i];
        const auto offset = static_cast<std::uint64_t>(payload.tellp());
        ften::write(payload, t);
        params.push_back({{"name", ckpt.state.names()[i]},
                          {"shape", t.shape()},
                          {"offset", offset},
                          {"bytes", ften::encoded_size(t)}});
    }
    const nlohmann::json header{{"format", 1}, {"config", ckpt.config}, {"meta", ckpt.meta}, {"params", params}};
    const std::string text = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os.write(kMagic, sizeof(kMagic));
    std::uint64_t n = text.size();
    unsigned char len[8];
    for (int i = 0; i < 8; ++i) len[i] = static_cast<unsigned char>(n >> (8 * i));
    os.write(reinterpret_cast<const char*>(len), 8);
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    const std::string body = payload.str();
    os.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!os) throw DataError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint " + path.string());
    char magic[8];
    unsigned char len[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw DataError(path.string() + ": not a checkpoint");
    if (!is.read(reinterpret_cast<char*>(len), 8)) throw DataError(path.string() + ": truncated header");
    std::uint64_t n = 0;
    for (int i = 0; i < 8; ++i) n |= std::uint64_t(len[i]) << (8 * i);
    std::string text(n, '\0');
    if (!is.read(text.data(), static_cast<std::streamsize>(n))) throw DataError(path.string() + ": truncated header");
    const std::streamoff payload_start = is.tellg();

    Checkpoint ckpt;
    try {
        const auto header = nlohmann::json::parse(text);
        if (header.at("format").get<int>() != 1) throw DataError("unsupported checkpoint format");
        ckpt.config = header.at("config").get<ModelConfig>();
        ckpt.meta = header.value("meta", nlohmann::json::object());
        for (const auto& p : header.at("params")) {
            is.seekg(payload_start + static_cast<std::streamoff>(p.at("offset").get<std::uint64_t>()));
            TensorF t = ften::read<float>(is);
            if (t.shape() != p.at("shape").get<Shape>()) throw DataError("shape table disagrees with payload");
            ckpt.state.add(p.at("name").get<std::string>(), std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": malformed checkpoint header: " + e.what());
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    check_state(ckpt.state, ckpt.config);
    return ckpt;
}

}  // namespace stflow
