#include "mpdbm/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>

#include "mpdbm/error.hpp"

namespace mpdbm {

Vector Dataset::pixel_means() const {
    Vector m(visible, 0.0);
    if (examples.empty()) return m;
    for (const auto& ex : examples)
        for (std::size_t j = 0; j < visible; ++j) m[j] += ex.v[j];
    for (double& x : m) x /= static_cast<double>(examples.size());
    return m;
}

bool Dataset::is_binary() const {
    for (const auto& ex : examples)
        for (double x : ex.v)
            if (x != 0.0 && x != 1.0) return false;
    return true;
}

void Dataset::validate() const {
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& ex = examples[i];
        if (ex.v.size() != visible)
            throw DimensionError("example " + std::to_string(i) + " has " + std::to_string(ex.v.size()) +
                                 " visibles, dataset declares " + std::to_string(visible));
        if (ex.label && *ex.label >= classes)
            throw DimensionError("example " + std::to_string(i) + " label out of range");
        for (double x : ex.v)
            if (!(x >= 0.0 && x <= 1.0)) throw Error("example " + std::to_string(i) + " has a value outside [0,1]");
    }
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > examples.size()) throw Error("dataset slice out of range");
    Dataset out{visible, classes, {}};
    out.examples.assign(examples.begin() + static_cast<std::ptrdiff_t>(begin),
                        examples.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
}

namespace {

using Kind = FormatError::Kind;

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

bool is_gzip(std::span<const std::uint8_t> bytes) {
    return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes) {
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw FormatError(Kind::io, "gzip: cannot initialize inflate");
    zs.next_in = const_cast<Bytef*>(bytes.data());
    zs.avail_in = static_cast<uInt>(bytes.size());
    std::vector<std::uint8_t> out;
    std::uint8_t buf[1 << 16];
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = buf;
        zs.avail_out = sizeof(buf);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw FormatError(Kind::truncated, "gzip: truncated or corrupt stream");
        }
        out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
        if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
            inflateEnd(&zs);
            throw FormatError(Kind::truncated, "gzip: truncated stream");
        }
    }
    inflateEnd(&zs);
    return out;
}

std::vector<std::uint8_t> maybe_gunzip(std::span<const std::uint8_t> bytes) {
    if (is_gzip(bytes)) return gunzip(bytes);
    return {bytes.begin(), bytes.end()};
}

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t off) {
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t x) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(x >> shift));
}

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(Kind::io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

IdxImages decode_idx_images(std::span<const std::uint8_t> raw) {
    const auto bytes = maybe_gunzip(raw);
    if (bytes.size() < 4) throw FormatError(Kind::truncated, "idx images: truncated header");
    if (read_be32(bytes, 0) != kImageMagic) throw FormatError(Kind::bad_magic, "idx images: bad magic");
    if (bytes.size() < 16) throw FormatError(Kind::truncated, "idx images: truncated header");
    IdxImages img{read_be32(bytes, 4), read_be32(bytes, 8), read_be32(bytes, 12), {}};
    const std::size_t payload = img.count * img.rows * img.cols;
    if (bytes.size() < 16 + payload) throw FormatError(Kind::truncated, "idx images: truncated payload");
    img.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(payload));
    return img;
}

std::vector<std::uint8_t> decode_idx_labels(std::span<const std::uint8_t> raw) {
    const auto bytes = maybe_gunzip(raw);
    if (bytes.size() < 4) throw FormatError(Kind::truncated, "idx labels: truncated header");
    if (read_be32(bytes, 0) != kLabelMagic) throw FormatError(Kind::bad_magic, "idx labels: bad magic");
    if (bytes.size() < 8) throw FormatError(Kind::truncated, "idx labels: truncated header");
    const std::size_t count = read_be32(bytes, 4);
    if (bytes.size() < 8 + count) throw FormatError(Kind::truncated, "idx labels: truncated payload");
    return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

std::vector<std::uint8_t> encode_idx_images(const IdxImages& images) {
    std::vector<std::uint8_t> out;
    write_be32(out, kImageMagic);
    write_be32(out, static_cast<std::uint32_t>(images.count));
    write_be32(out, static_cast<std::uint32_t>(images.rows));
    write_be32(out, static_cast<std::uint32_t>(images.cols));
    out.insert(out.end(), images.pixels.begin(), images.pixels.end());
    return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
    std::vector<std::uint8_t> out;
    write_be32(out, kLabelMagic);
    write_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const auto images = decode_idx_images(read_file_bytes(images_path));
    const auto labels = decode_idx_labels(read_file_bytes(labels_path));
    if (images.count != labels.size())
        throw FormatError(Kind::count_mismatch, "idx: " + std::to_string(images.count) + " images but " +
                                                    std::to_string(labels.size()) + " labels");
    Dataset ds;
    ds.visible = images.rows * images.cols;
    std::size_t max_label = 0;
    for (auto l : labels) max_label = std::max<std::size_t>(max_label, l);
    ds.classes = labels.empty() ? 0 : max_label + 1;
    ds.examples.reserve(images.count);
    for (std::size_t i = 0; i < images.count; ++i) {
        Example ex;
        ex.v.resize(ds.visible);
        for (std::size_t j = 0; j < ds.visible; ++j) ex.v[j] = images.pixels[i * ds.visible + j] / 255.0;
        ex.label = labels[i];
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

Dataset binarize(const Dataset& data, BinarizeMode mode, std::uint64_t seed) {
    Dataset out = data;
    Rng rng(seed);
    for (auto& ex : out.examples)
        for (double& x : ex.v) {
            if (mode == BinarizeMode::threshold)
                x = x > 0.5 ? 1.0 : 0.0;
            else
                x = rng.bernoulli(std::clamp(x, 0.0, 1.0)) ? 1.0 : 0.0;
        }
    return out;
}

namespace {

std::size_t hamming(const Vector& a, const Vector& b) {
    std::size_t d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
    return d;
}

}  // namespace

std::vector<Vector> synth_prototypes(std::size_t n_classes, std::size_t d, std::uint64_t seed) {
    if (n_classes == 0 || d == 0) throw Error("synth_patterns: need at least one class and one pixel");
    if (d < 64 && n_classes > (std::size_t{1} << d)) throw Error("synth_patterns: more classes than binary patterns");
    Rng rng(seed);
    std::vector<Vector> protos;
    // Prefer well-separated templates; fall back to mere distinctness when the
    // separation target cannot be met.
    std::size_t min_dist = std::max<std::size_t>(1, d / 4);
    std::size_t failures = 0;
    while (protos.size() < n_classes) {
        Vector p(d);
        for (double& x : p) x = rng.bernoulli(0.5) ? 1.0 : 0.0;
        const bool ok = std::all_of(protos.begin(), protos.end(), [&](const Vector& q) { return hamming(p, q) >= min_dist; });
        if (ok) {
            protos.push_back(std::move(p));
            continue;
        }
        if (++failures > 10000 && min_dist > 1) {
            --min_dist;
            failures = 0;
        }
    }
    return protos;
}

SynthPatterns synth_patterns(std::size_t n_classes, std::size_t d, double noise_rate, std::size_t n_examples,
                             std::uint64_t seed) {
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw Error("synth_patterns: noise rate outside [0,1]");
    SynthPatterns out;
    out.prototypes = synth_prototypes(n_classes, d, seed);
    Rng rng(seed ^ 0x5eed5eed5eed5eedULL);
    out.data.visible = d;
    out.data.classes = n_classes;
    out.data.examples.reserve(n_examples);
    for (std::size_t i = 0; i < n_examples; ++i) {
        const std::size_t c = i % n_classes;
        Example ex{out.prototypes[c], c};
        for (double& x : ex.v)
            if (rng.bernoulli(noise_rate)) x = 1.0 - x;
        out.data.examples.push_back(std::move(ex));
    }
    return out;
}

std::size_t nearest_prototype(std::span<const Vector> prototypes, std::span<const double> v) {
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < prototypes.size(); ++c) {
        double dist = 0.0;
        for (std::size_t j = 0; j < v.size(); ++j) dist += std::abs(prototypes[c][j] - v[j]);
        if (dist < best_dist) {
            best_dist = dist;
            best = c;
        }
    }
    return best;
}

std::vector<std::pair<Example, Mask>> make_missing_input_queries(const Dataset& data, double fraction_missing,
                                                                 std::uint64_t seed) {
    if (!(fraction_missing >= 0.0 && fraction_missing <= 1.0))
        throw Error("missing fraction outside [0,1]");
    const std::size_t d = data.visible;
    const auto n_missing = static_cast<std::size_t>(std::floor(fraction_missing * static_cast<double>(d)));
    Rng rng(seed);
    std::vector<std::pair<Example, Mask>> out;
    out.reserve(data.size());
    std::vector<std::size_t> idx(d);
    for (const auto& ex : data.examples) {
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        Mask m{std::vector<std::uint8_t>(d, 1), false};
        for (std::size_t i = 0; i < n_missing; ++i) {
            std::swap(idx[i], idx[i + rng.uniform_index(d - i)]);
            m.visible_observed[idx[i]] = 0;
        }
        out.emplace_back(ex, std::move(m));
    }
    return out;
}

}  // namespace mpdbm
