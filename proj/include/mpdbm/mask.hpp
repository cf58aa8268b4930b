#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mpdbm/model.hpp"

namespace mpdbm {

/// Observed/target partition of the visible units and the label. Everything
/// not observed is a prediction target.
struct Mask {
    std::vector<std::uint8_t> visible_observed;
    bool label_observed = false;

    static Mask all_observed(const ModelShape& shape);
    static Mask none_observed(const ModelShape& shape);

    bool observed(std::size_t j) const { return visible_observed[j] != 0; }
    std::size_t num_visible_observed() const;
    // Counts include the label only when the model has one.
    std::size_t num_observed(const ModelShape& shape) const;
    std::size_t num_targets(const ModelShape& shape) const;

    friend bool operator==(const Mask&, const Mask&) = default;
};

// Throws DimensionError when the mask or example do not fit the shape, or when
// an observed label is missing from the example.
void check_query(const ModelShape& shape, const Example& data, const Mask& mask);

}  // namespace mpdbm
