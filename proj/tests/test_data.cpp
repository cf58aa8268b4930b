#include <doctest.h>
#include <zlib.h>

#include <fstream>

#include "mpdbm/data.hpp"
#include "mpdbm/error.hpp"
#include "test_util.hpp"

using namespace mpdbm;
using Kind = FormatError::Kind;

namespace {

std::vector<std::uint8_t> gzip(const std::vector<std::uint8_t>& in) {
    z_stream zs{};
    REQUIRE(deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 16 + MAX_WBITS, 8, Z_DEFAULT_STRATEGY) == Z_OK);
    std::vector<std::uint8_t> out(deflateBound(&zs, in.size()) + 32);
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    REQUIRE(deflate(&zs, Z_FINISH) == Z_STREAM_END);
    out.resize(zs.total_out);
    deflateEnd(&zs);
    return out;
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
    std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

FormatError::Kind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const FormatError& e) {
        return e.kind();
    }
    FAIL("no FormatError");
    return Kind::io;
}

IdxImages tiny_images() {
    // Two 2x3 images.
    return IdxImages{2, 2, 3, {0, 255, 128, 10, 200, 0, 255, 255, 0, 0, 127, 129}};
}

}  // namespace

TEST_CASE("IDX header layout") {
    const auto bytes = encode_idx_images(tiny_images());
    REQUIRE(bytes.size() == 16 + 12);
    CHECK(bytes[0] == 0x00);
    CHECK(bytes[2] == 0x08);
    CHECK(bytes[3] == 0x03);
    CHECK(bytes[7] == 2);
    CHECK(bytes[11] == 2);
    CHECK(bytes[15] == 3);
    const std::vector<std::uint8_t> labels{3, 1};
    const auto lb = encode_idx_labels(labels);
    CHECK(lb.size() == 10);
    CHECK(lb[3] == 0x01);
}

TEST_CASE("IDX round trip, plain and gzip") {
    const auto img = tiny_images();
    const std::vector<std::uint8_t> labels{3, 1};
    for (bool compressed : {false, true}) {
        auto ib = encode_idx_images(img);
        auto lb = encode_idx_labels(labels);
        if (compressed) {
            ib = gzip(ib);
            lb = gzip(lb);
            CHECK(ib[0] == 0x1f);
        }
        const auto back = decode_idx_images(ib);
        CHECK(back.count == 2);
        CHECK(back.rows == 2);
        CHECK(back.cols == 3);
        CHECK(back.pixels == img.pixels);
        CHECK(decode_idx_labels(lb) == labels);
    }
}

TEST_CASE("load_idx scales pixels and infers classes") {
    const auto dir = scratch_dir("idx_load");
    write_bytes(dir / "img", encode_idx_images(tiny_images()));
    write_bytes(dir / "lbl.gz", gzip(encode_idx_labels(std::vector<std::uint8_t>{3, 1})));
    const Dataset ds = load_idx(dir / "img", dir / "lbl.gz");
    CHECK(ds.visible == 6);
    CHECK(ds.classes == 4);
    CHECK(ds.size() == 2);
    CHECK(ds.examples[0].v[1] == 1.0);
    CHECK(ds.examples[0].v[2] == doctest::Approx(128.0 / 255.0));
    CHECK(ds.examples[1].label == 1);
    CHECK_FALSE(ds.is_binary());

    const Dataset b = binarize(ds, BinarizeMode::threshold);
    CHECK(b.is_binary());
    CHECK(b.examples[1].v == Vector{1.0, 1.0, 0.0, 0.0, 0.0, 1.0});
    const Dataset s1 = binarize(ds, BinarizeMode::stochastic, 5);
    CHECK(s1.is_binary());
    CHECK(s1.examples[0].v[0] == 0.0);
    CHECK(s1.examples[0].v[1] == 1.0);
    CHECK(binarize(ds, BinarizeMode::stochastic, 5).examples == s1.examples);
}

TEST_CASE("IDX errors carry distinct kinds") {
    const auto good = encode_idx_images(tiny_images());
    auto bad_magic = good;
    bad_magic[3] = 0x02;
    CHECK(kind_of([&] { decode_idx_images(bad_magic); }) == Kind::bad_magic);
    const std::vector<std::uint8_t> short_payload(good.begin(), good.end() - 1);
    CHECK(kind_of([&] { decode_idx_images(short_payload); }) == Kind::truncated);
    const std::vector<std::uint8_t> short_header(good.begin(), good.begin() + 9);
    CHECK(kind_of([&] { decode_idx_images(short_header); }) == Kind::truncated);
    auto gz = gzip(good);
    gz.resize(gz.size() / 2);
    CHECK(kind_of([&] { decode_idx_images(gz); }) == Kind::truncated);
    CHECK(kind_of([&] { decode_idx_labels(good); }) == Kind::bad_magic);

    const auto dir = scratch_dir("idx_errors");
    write_bytes(dir / "img", good);
    write_bytes(dir / "lbl", encode_idx_labels(std::vector<std::uint8_t>{1, 2, 3}));
    CHECK(kind_of([&] { load_idx(dir / "img", dir / "lbl"); }) == Kind::count_mismatch);
    CHECK(kind_of([&] { load_idx(dir / "missing", dir / "lbl"); }) == Kind::io);
}

TEST_CASE("synthetic patterns") {
    const auto protos = synth_prototypes(4, 16, 3);
    REQUIRE(protos.size() == 4);
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = a + 1; b < 4; ++b) {
            std::size_t d = 0;
            for (std::size_t j = 0; j < 16; ++j) d += protos[a][j] != protos[b][j];
            CHECK(d >= 4);
        }
    const auto sp = synth_patterns(4, 16, 0.05, 4000, 3);
    CHECK(sp.prototypes == protos);
    CHECK(sp.data.classes == 4);
    CHECK(sp.data.visible == 16);
    CHECK(sp.data.is_binary());
    std::size_t flips = 0, misclassified = 0;
    for (std::size_t i = 0; i < sp.data.size(); ++i) {
        const auto& ex = sp.data.examples[i];
        CHECK(ex.label == i % 4);
        for (std::size_t j = 0; j < 16; ++j) flips += ex.v[j] != protos[*ex.label][j];
        misclassified += nearest_prototype(protos, ex.v) != *ex.label;
    }
    CHECK(flips / (4000.0 * 16.0) == doctest::Approx(0.05).epsilon(0.1));
    CHECK(misclassified / 4000.0 < 0.05);

    const auto clean = synth_patterns(4, 16, 0.0, 8, 3);
    for (const auto& ex : clean.data.examples) CHECK(ex.v == protos[*ex.label]);
    CHECK(synth_patterns(4, 16, 0.05, 50, 3).data.examples == synth_patterns(4, 16, 0.05, 50, 3).data.examples);
    CHECK_THROWS_AS(synth_patterns(5, 2, 0.1, 10, 1), Error);
}

TEST_CASE("missing-input queries") {
    const auto ds = synth_patterns(3, 10, 0.1, 20, 1).data;
    const auto q = make_missing_input_queries(ds, 0.35, 4);
    REQUIRE(q.size() == 20);
    for (std::size_t i = 0; i < q.size(); ++i) {
        CHECK(q[i].first.v == ds.examples[i].v);
        CHECK_FALSE(q[i].second.label_observed);
        CHECK(q[i].second.num_visible_observed() == 10 - 3);
    }
    for (const auto& [ex, m] : make_missing_input_queries(ds, 0.0, 4)) CHECK(m.num_visible_observed() == 10);
    CHECK_THROWS_AS(make_missing_input_queries(ds, 1.5, 4), Error);
}

TEST_CASE("dataset helpers") {
    Dataset ds{2, 2, {{{1.0, 0.0}, 0}, {{1.0, 1.0}, 1}, {{0.0, 1.0}, 1}}};
    CHECK(ds.pixel_means() == Vector{2.0 / 3.0, 2.0 / 3.0});
    CHECK(ds.slice(1, 3).size() == 2);
    CHECK(ds.slice(1, 3).examples[0].v == Vector{1.0, 1.0});
    CHECK_THROWS_AS(ds.slice(2, 5), Error);
    CHECK_NOTHROW(ds.validate());
    ds.examples[0].label = 2;
    CHECK_THROWS_AS(ds.validate(), DimensionError);
}
