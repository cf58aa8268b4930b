#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpdbm/model.hpp"

namespace mpdbm {

/// Everything needed to resume training bit-exactly.
///
/// On disk a checkpoint is a directory holding
///   manifest.json  format version, shape, tensor index (name, dims, byte
///                  offset, byte length), CRC-32 of the payload, RNG states,
///                  epoch counter and trainer bookkeeping
///   payload.bin    little-endian IEEE-754 doubles, row-major, in index order
struct Checkpoint {
    static constexpr int kVersion = 1;

    std::string method = "init";  // "init", "mp" or "pcd-centered"
    Params params;
    Gradient velocity;
    Rng::State rng{};
    std::size_t epoch = 0;
    std::vector<FullState> chains;  // PCD only
    Rng::State chain_rng{};
    nlohmann::json trainer_state = nlohmann::json::object();  // early-stopping bookkeeping

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);

// Throws FormatError: unsupported_version, checksum, truncated, malformed, io.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

nlohmann::json shape_to_json(const ModelShape& shape);
ModelShape shape_from_json(const nlohmann::json& j);

}  // namespace mpdbm
