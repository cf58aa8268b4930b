#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mpdbm/data.hpp"
#include "mpdbm/inference.hpp"

namespace mpdbm {

struct InferenceSpec {
    InferenceMode mode = InferenceMode::standard;
    std::size_t n_iters = 10;
};

// Mean-field label prediction for one query (argmax of y_hat, lowest index on ties).
std::size_t predict_label(const Params& params, const Example& data, const Mask& mask, const InferenceSpec& spec);

// Error rate of label prediction with every pixel observed.
double classification_error(const Params& params, const Dataset& data, const InferenceSpec& spec);

// Error rate for arbitrary (example, mask) queries; the label is always the target.
double query_error(const Params& params, std::span<const std::pair<Example, Mask>> queries, const InferenceSpec& spec);

// Error rate per missing-pixel fraction.
std::vector<double> missing_input_errors(const Params& params, const Dataset& data, std::span<const double> fractions,
                                         const InferenceSpec& spec, std::uint64_t seed);

// Mean per-variable cross-entropy when predicting a uniformly random subset of
// `size` variables (visibles plus the label) from the rest, one value per size.
std::vector<double> general_query_xent(const Params& params, const Dataset& data, std::span<const std::size_t> sizes,
                                       const InferenceSpec& spec, std::uint64_t seed);

struct InpaintRecord {
    std::size_t example;
    Mask mask;
    std::vector<Vector> v_hat;  // one per iteration
    std::vector<Vector> y_hat;  // one per iteration (empty when no label)
};

// Per-iteration predictions for the first `count` examples under random p=1/2 masks.
std::vector<InpaintRecord> inpaint(const Params& params, const Dataset& data, std::size_t count,
                                   const InferenceSpec& spec, std::uint64_t seed);

double spearman_rho(std::span<const double> x, std::span<const double> y);

}  // namespace mpdbm
