#include "ricc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace ricc {

namespace {

constexpr char kMagic[5] = {'R', 'I', 'C', 'C', 0x01};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    nlohmann::json header;
    header["arch"] = nlohmann::json::parse(model.arch.to_json());
    auto& manifest = header["tensors"] = nlohmann::json::array();
    std::string data;
    for (const auto& e : model.params.entries()) {
        manifest.push_back({{"name", e.name},
                            {"shape", e.tensor.shape()},
                            {"offset", data.size()},
                            {"learnable", e.learnable}});
        auto v = e.tensor.data();
        data.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
    }
    auto text = header.dump();

    std::string out(kMagic, sizeof kMagic);
    put_u32(out, kCheckpointVersion);
    put_u32(out, std::uint32_t(text.size()));
    out += text;
    out += data;

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot open '" + path.string() + "' for writing");
    f.write(out.data(), std::streamsize(out.size()));
    if (!f) throw CheckpointError("write to '" + path.string() + "' failed");
}

Model load_checkpoint(const std::filesystem::path& path, std::optional<ArchId> expected) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open '" + path.string() + "'");
    std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (in.size() < sizeof kMagic) throw Truncated("checkpoint shorter than its magic");
    if (std::memcmp(in.data(), kMagic, sizeof kMagic) != 0) throw MagicMismatch("not a RICC checkpoint");
    std::size_t pos = sizeof kMagic;
    if (in.size() < pos + 8) throw Truncated("checkpoint header prefix truncated");
    auto version = get_u32(in, pos);
    if (version != kCheckpointVersion)
        throw VersionMismatch("checkpoint version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));
    auto header_len = get_u32(in, pos + 4);
    pos += 8;
    if (in.size() < pos + header_len) throw Truncated("checkpoint header truncated");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(in.substr(pos, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
    }
    pos += header_len;
    const std::size_t data_begin = pos;

    auto arch = ArchDescriptor::from_json(header.at("arch").dump());
    if (expected && *expected != arch.id)
        throw ArchMismatch("checkpoint holds " + std::string(to_string(arch.id)) + ", expected " +
                           std::string(to_string(*expected)));

    // The manifest must match what the descriptor produces, name for name.
    auto reference = init_model<float>(arch, 0);
    const auto& manifest = header.at("tensors");
    const auto& ref = reference.params.entries();
    if (manifest.size() != ref.size()) throw ArchMismatch("checkpoint tensor count does not match its architecture");

    Model model{arch, ParamSet(arch.id)};
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const auto& m = manifest[i];
        auto name = m.at("name").get<std::string>();
        auto shape = m.at("shape").get<Shape>();
        auto offset = m.at("offset").get<std::size_t>();
        if (name != ref[i].name || shape != ref[i].tensor.shape())
            throw ArchMismatch("checkpoint tensor '" + name + "' " + shape_str(shape) + " does not match '" +
                               ref[i].name + "' " + shape_str(ref[i].tensor.shape()));
        std::size_t bytes = numel(shape) * sizeof(float);
        if (in.size() < data_begin + offset + bytes) throw Truncated("checkpoint data truncated at '" + name + "'");
        std::vector<float> v(numel(shape));
        std::memcpy(v.data(), in.data() + data_begin + offset, bytes);
        model.params.add(name, Tensor(shape, std::move(v)), ref[i].learnable);
    }
    return model;
}

}  // namespace ricc
