#include "mpdbm/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <span>
#include <sstream>

#include "mpdbm/data.hpp"
#include "mpdbm/error.hpp"

namespace mpdbm {

using nlohmann::json;
using Kind = FormatError::Kind;

json shape_to_json(const ModelShape& shape) {
    return json{{"visible", shape.visible}, {"hidden", shape.hidden}, {"classes", shape.classes}};
}

ModelShape shape_from_json(const json& j) {
    ModelShape s;
    s.visible = j.at("visible").get<std::size_t>();
    s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    s.classes = j.at("classes").get<std::size_t>();
    s.validate();
    return s;
}

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kPayload = "payload.bin";

struct TensorRef {
    std::string name;
    std::vector<std::size_t> dims;
    std::span<const double> data;
};

void append_le(std::vector<std::uint8_t>& out, double x) {
    const auto bits = std::bit_cast<std::uint64_t>(x);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

double read_le(const std::uint8_t* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t{p[i]} << (8 * i);
    return std::bit_cast<double>(bits);
}

std::string crc_hex(std::span<const std::uint8_t> bytes) {
    const uLong crc = crc32(crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(bytes.size()));
    std::ostringstream os;
    os << std::hex << std::setw(8) << std::setfill('0') << static_cast<std::uint32_t>(crc);
    return os.str();
}

json rng_to_json(const Rng::State& s) { return json(std::vector<std::uint64_t>(s.begin(), s.end())); }

Rng::State rng_from_json(const json& j) {
    const auto v = j.get<std::vector<std::uint64_t>>();
    if (v.size() != 4) throw FormatError(Kind::malformed, "checkpoint: rng state must have 4 words");
    return {v[0], v[1], v[2], v[3]};
}

void write_atomically(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError(Kind::io, "cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw FormatError(Kind::io, "write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
    const auto& shape = ckpt.params.shape;
    std::vector<TensorRef> tensors;
    for (std::size_t e = 0; e < ckpt.params.weights.size(); ++e) {
        const auto& w = ckpt.params.weights[e];
        tensors.push_back({weight_name(shape, e), {w.rows(), w.cols()}, w.data()});
    }
    for (std::size_t l = 0; l < ckpt.params.biases.size(); ++l)
        tensors.push_back({bias_name(shape, l), {ckpt.params.biases[l].size()}, ckpt.params.biases[l]});
    if (ckpt.params.offsets)
        for (std::size_t l = 0; l < ckpt.params.offsets->size(); ++l)
            tensors.push_back({"offset_" + layer_name(shape, l), {(*ckpt.params.offsets)[l].size()}, (*ckpt.params.offsets)[l]});
    for (std::size_t e = 0; e < ckpt.velocity.weights.size(); ++e) {
        const auto& w = ckpt.velocity.weights[e];
        tensors.push_back({"velocity_" + weight_name(shape, e), {w.rows(), w.cols()}, w.data()});
    }
    for (std::size_t l = 0; l < ckpt.velocity.biases.size(); ++l)
        tensors.push_back({"velocity_" + bias_name(shape, l), {ckpt.velocity.biases[l].size()}, ckpt.velocity.biases[l]});
    std::vector<double> chain_data;
    for (const auto& c : ckpt.chains)
        for (const auto& layer : c.layers) chain_data.insert(chain_data.end(), layer.begin(), layer.end());
    if (!ckpt.chains.empty()) tensors.push_back({"chains", {ckpt.chains.size(), shape.total_units()}, chain_data});

    std::vector<std::uint8_t> payload;
    json index = json::array();
    for (const auto& t : tensors) {
        const std::size_t offset = payload.size();
        for (double x : t.data) append_le(payload, x);
        index.push_back({{"name", t.name}, {"dims", t.dims}, {"offset", offset}, {"length", payload.size() - offset}});
    }

    json manifest = {
        {"format", "mpdbm-checkpoint"},
        {"version", Checkpoint::kVersion},
        {"method", ckpt.method},
        {"shape", shape_to_json(shape)},
        {"centered", ckpt.params.centered()},
        {"epoch", ckpt.epoch},
        {"rng", rng_to_json(ckpt.rng)},
        {"chain_rng", rng_to_json(ckpt.chain_rng)},
        {"trainer_state", ckpt.trainer_state},
        {"payload_bytes", payload.size()},
        {"crc32", crc_hex(payload)},
        {"tensors", index},
    };
    std::filesystem::create_directories(dir);
    write_atomically(dir / kPayload, payload);
    const std::string text = manifest.dump(2) + "\n";
    write_atomically(dir / kManifest, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    const auto manifest_bytes = read_file_bytes(dir / kManifest);
    json manifest;
    try {
        manifest = json::parse(manifest_bytes.begin(), manifest_bytes.end());
    } catch (const json::exception& e) {
        throw FormatError(Kind::malformed, std::string("checkpoint manifest: ") + e.what());
    }
    try {
        if (manifest.value("format", "") != "mpdbm-checkpoint")
            throw FormatError(Kind::malformed, "checkpoint manifest: not an mpdbm checkpoint");
        if (manifest.at("version").get<int>() != Checkpoint::kVersion)
            throw FormatError(Kind::unsupported_version,
                              "unsupported version " + manifest.at("version").dump() + " (expected " +
                                  std::to_string(Checkpoint::kVersion) + ")");

        const auto payload = read_file_bytes(dir / kPayload);
        const auto expected_bytes = manifest.at("payload_bytes").get<std::size_t>();
        if (payload.size() < expected_bytes)
            throw FormatError(Kind::truncated, "checkpoint payload truncated: " + std::to_string(payload.size()) +
                                                   " of " + std::to_string(expected_bytes) + " bytes");
        if (payload.size() != expected_bytes)
            throw FormatError(Kind::malformed, "checkpoint payload has trailing bytes");
        if (crc_hex(payload) != manifest.at("crc32").get<std::string>())
            throw FormatError(Kind::checksum, "checkpoint checksum mismatch");

        Checkpoint ckpt;
        ckpt.method = manifest.at("method").get<std::string>();
        const ModelShape shape = shape_from_json(manifest.at("shape"));
        ckpt.params = Params::zeros(shape);
        ckpt.velocity = Gradient::zeros(shape);
        if (manifest.at("centered").get<bool>()) ckpt.params.offsets = FullState::zeros(shape).layers;
        ckpt.epoch = manifest.at("epoch").get<std::size_t>();
        ckpt.rng = rng_from_json(manifest.at("rng"));
        ckpt.chain_rng = rng_from_json(manifest.at("chain_rng"));
        ckpt.trainer_state = manifest.at("trainer_state");

        std::vector<double> chain_data;
        std::size_t n_chains = 0;
        auto target = [&](const std::string& name) -> std::span<double> {
            for (std::size_t e = 0; e < shape.num_edges(); ++e) {
                if (name == weight_name(shape, e)) return ckpt.params.weights[e].data();
                if (name == "velocity_" + weight_name(shape, e)) return ckpt.velocity.weights[e].data();
            }
            for (std::size_t l = 0; l < shape.num_layers(); ++l) {
                if (name == bias_name(shape, l)) return ckpt.params.biases[l];
                if (name == "velocity_" + bias_name(shape, l)) return ckpt.velocity.biases[l];
                if (name == "offset_" + layer_name(shape, l) && ckpt.params.offsets) return (*ckpt.params.offsets)[l];
            }
            throw FormatError(Kind::malformed, "checkpoint: unknown tensor " + name);
        };
        for (const auto& t : manifest.at("tensors")) {
            const auto name = t.at("name").get<std::string>();
            const auto offset = t.at("offset").get<std::size_t>();
            const auto length = t.at("length").get<std::size_t>();
            if (offset + length > payload.size() || length % 8 != 0)
                throw FormatError(Kind::truncated, "checkpoint tensor " + name + " exceeds payload");
            std::span<double> dst;
            if (name == "chains") {
                const auto dims = t.at("dims").get<std::vector<std::size_t>>();
                if (dims.size() != 2 || dims[1] != shape.total_units())
                    throw FormatError(Kind::malformed, "checkpoint: chains tensor has wrong dims");
                n_chains = dims[0];
                chain_data.resize(n_chains * dims[1]);
                dst = chain_data;
            } else {
                dst = target(name);
            }
            if (dst.size() * 8 != length)
                throw FormatError(Kind::malformed, "checkpoint tensor " + name + " has wrong length");
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = read_le(payload.data() + offset + 8 * i);
        }
        std::size_t pos = 0;
        for (std::size_t c = 0; c < n_chains; ++c) {
            FullState s = FullState::zeros(shape);
            for (auto& layer : s.layers)
                for (double& x : layer) x = chain_data[pos++];
            ckpt.chains.push_back(std::move(s));
        }
        return ckpt;
    } catch (const json::exception& e) {
        throw FormatError(Kind::malformed, std::string("checkpoint manifest: ") + e.what());
    }
}

}  // namespace mpdbm
