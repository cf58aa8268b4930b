#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "mpdbm/checkpoint.hpp"
#include "mpdbm/data.hpp"
#include "mpdbm/error.hpp"
#include "mpdbm/pcd.hpp"
#include "mpdbm/verification.hpp"
#include "test_util.hpp"

using namespace mpdbm;
using Kind = FormatError::Kind;

namespace {

Checkpoint sample_checkpoint(bool centered) {
    const ModelShape shape{5, {4, 3}, 3};
    Rng rng(42);
    Checkpoint c;
    c.method = centered ? "pcd-centered" : "mp";
    c.params = verify::random_params(shape, rng, 1.0, centered);
    // Values that only survive a bit-exact encoding.
    c.params.weights[0](0, 0) = 0.1 + 0.2;
    c.params.weights[0](1, 1) = -0.0;
    c.params.biases[0][0] = std::numeric_limits<double>::denorm_min();
    c.params.biases[0][1] = 1e308;
    c.velocity = Gradient::zeros(shape);
    c.velocity.weights[1](2, 1) = -3.5e-7;
    c.rng = Rng(7).state();
    c.epoch = 12;
    c.trainer_state = {{"best_error", 0.25}, {"bad_epochs", 2}};
    if (centered) {
        const ChainPool pool = ChainPool::random(shape, 4, 9);
        c.chains = pool.chains;
        c.chain_rng = pool.rng.state();
    }
    return c;
}

void corrupt_byte(const std::filesystem::path& p, std::size_t offset) {
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(static_cast<std::streamoff>(offset));
    char b;
    f.get(b);
    f.seekp(static_cast<std::streamoff>(offset));
    f.put(static_cast<char>(b ^ 0x40));
}

FormatError::Kind load_kind(const std::filesystem::path& dir) {
    try {
        load_checkpoint(dir);
    } catch (const FormatError& e) {
        return e.kind();
    }
    FAIL("checkpoint loaded");
    return Kind::io;
}

}  // namespace

TEST_CASE("round trip is bit-exact") {
    for (bool centered : {false, true}) {
        const auto dir = scratch_dir(centered ? "ckpt_centered" : "ckpt_plain");
        const Checkpoint c = sample_checkpoint(centered);
        save_checkpoint(dir, c);
        const Checkpoint back = load_checkpoint(dir);
        CHECK(back == c);
        CHECK(std::signbit(back.params.weights[0](1, 1)));
        // Saving again yields identical bytes.
        const auto dir2 = scratch_dir(centered ? "ckpt_centered2" : "ckpt_plain2");
        save_checkpoint(dir2, back);
        CHECK(read_file_bytes(dir / "payload.bin") == read_file_bytes(dir2 / "payload.bin"));
        CHECK(read_file_bytes(dir / "manifest.json") == read_file_bytes(dir2 / "manifest.json"));
    }
}

TEST_CASE("manifest describes every tensor") {
    const auto dir = scratch_dir("ckpt_manifest");
    save_checkpoint(dir, sample_checkpoint(true));
    const auto bytes = read_file_bytes(dir / "manifest.json");
    const auto m = nlohmann::json::parse(bytes.begin(), bytes.end());
    CHECK(m["version"] == 1);
    CHECK(m["shape"]["hidden"] == nlohmann::json({4, 3}));
    std::size_t expected_offset = 0;
    bool saw_wy = false, saw_chains = false;
    for (const auto& t : m["tensors"]) {
        CHECK(t["offset"] == expected_offset);
        std::size_t n = 1;
        for (auto d : t["dims"]) n *= d.get<std::size_t>();
        CHECK(t["length"] == 8 * n);
        expected_offset += t["length"].get<std::size_t>();
        saw_wy |= t["name"] == "wy";
        saw_chains |= t["name"] == "chains";
    }
    CHECK(saw_wy);
    CHECK(saw_chains);
    CHECK(m["payload_bytes"] == expected_offset);
    CHECK(m["crc32"].get<std::string>().size() == 8);
}

TEST_CASE("corruption is detected with distinct errors") {
    const Checkpoint c = sample_checkpoint(false);

    auto dir = scratch_dir("ckpt_flip");
    save_checkpoint(dir, c);
    corrupt_byte(dir / "payload.bin", 100);
    CHECK(load_kind(dir) == Kind::checksum);
    try {
        load_checkpoint(dir);
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("checksum") != std::string::npos);
    }

    dir = scratch_dir("ckpt_truncated");
    save_checkpoint(dir, c);
    std::filesystem::resize_file(dir / "payload.bin", std::filesystem::file_size(dir / "payload.bin") - 16);
    CHECK(load_kind(dir) == Kind::truncated);

    dir = scratch_dir("ckpt_version");
    save_checkpoint(dir, c);
    {
        const auto bytes = read_file_bytes(dir / "manifest.json");
        auto m = nlohmann::json::parse(bytes.begin(), bytes.end());
        m["version"] = 2;
        std::ofstream(dir / "manifest.json", std::ios::trunc) << m.dump(2);
    }
    CHECK(load_kind(dir) == Kind::unsupported_version);
    try {
        load_checkpoint(dir);
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("unsupported version") != std::string::npos);
    }

    dir = scratch_dir("ckpt_garbage");
    save_checkpoint(dir, c);
    std::ofstream(dir / "manifest.json", std::ios::trunc) << "{not json";
    CHECK(load_kind(dir) == Kind::malformed);

    CHECK(load_kind(scratch_dir("ckpt_empty")) == Kind::io);
}
