#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mpdbm/mask.hpp"
#include "mpdbm/model.hpp"

namespace mpdbm {

/// Examples with their shape metadata. Training requires binary visibles;
/// load_idx yields intensities in [0,1] until binarized.
struct Dataset {
    std::size_t visible = 0;
    std::size_t classes = 0;
    std::vector<Example> examples;

    std::size_t size() const noexcept { return examples.size(); }
    bool empty() const noexcept { return examples.empty(); }

    Vector pixel_means() const;
    bool is_binary() const;
    void validate() const;  // labels in range, sizes consistent

    // Rows [begin, end).
    Dataset slice(std::size_t begin, std::size_t end) const;
};

// IDX (MNIST) images + labels. Gzip-compressed files are detected by their
// magic bytes. Errors carry FormatError kinds bad_magic / truncated /
// count_mismatch / io.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// In-memory decoders behind load_idx (input may be gzip-compressed).
struct IdxImages {
    std::size_t count = 0, rows = 0, cols = 0;
    std::vector<std::uint8_t> pixels;
};
IdxImages decode_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> decode_idx_labels(std::span<const std::uint8_t> bytes);

// Uncompressed IDX encoders (inverse of the decoders).
std::vector<std::uint8_t> encode_idx_images(const IdxImages& images);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

enum class BinarizeMode { threshold, stochastic };

// threshold: pixel > 0.5 -> 1. stochastic: Bernoulli(pixel) with the given seed.
Dataset binarize(const Dataset& data, BinarizeMode mode, std::uint64_t seed = 0);

struct SynthPatterns {
    Dataset data;
    std::vector<Vector> prototypes;
};

// Fixed distinct binary prototypes per class (derived from seed) with each bit
// flipped independently at noise_rate. Example i has class i mod n_classes.
SynthPatterns synth_patterns(std::size_t n_classes, std::size_t d, double noise_rate, std::size_t n_examples,
                             std::uint64_t seed);

// Prototypes only; synth_patterns uses the same ones for the same (n_classes, d, seed).
std::vector<Vector> synth_prototypes(std::size_t n_classes, std::size_t d, std::uint64_t seed);

std::size_t nearest_prototype(std::span<const Vector> prototypes, std::span<const double> v);

// floor(fraction * D) uniformly chosen pixels unobserved; the label is always a target.
std::vector<std::pair<Example, Mask>> make_missing_input_queries(const Dataset& data, double fraction_missing,
                                                                 std::uint64_t seed);

}  // namespace mpdbm
