#include "mpdbm/mask.hpp"

#include <algorithm>

#include "mpdbm/error.hpp"

namespace mpdbm {

Mask Mask::all_observed(const ModelShape& shape) {
    return Mask{std::vector<std::uint8_t>(shape.visible, 1), shape.has_label()};
}

Mask Mask::none_observed(const ModelShape& shape) {
    return Mask{std::vector<std::uint8_t>(shape.visible, 0), false};
}

std::size_t Mask::num_visible_observed() const {
    return static_cast<std::size_t>(std::count_if(visible_observed.begin(), visible_observed.end(),
                                                  [](std::uint8_t b) { return b != 0; }));
}

std::size_t Mask::num_observed(const ModelShape& shape) const {
    return num_visible_observed() + (shape.has_label() && label_observed ? 1 : 0);
}

std::size_t Mask::num_targets(const ModelShape& shape) const {
    return (shape.visible + (shape.has_label() ? 1 : 0)) - num_observed(shape);
}

void check_query(const ModelShape& shape, const Example& data, const Mask& mask) {
    if (mask.visible_observed.size() != shape.visible)
        throw DimensionError("mask covers " + std::to_string(mask.visible_observed.size()) + " visibles, model has " +
                             std::to_string(shape.visible));
    if (mask.num_visible_observed() > 0 && data.v.size() != shape.visible)
        throw DimensionError("example has " + std::to_string(data.v.size()) + " visibles, model has " +
                             std::to_string(shape.visible));
    if (mask.label_observed) {
        if (!shape.has_label()) throw DimensionError("label observed but model has no label unit");
        if (!data.label) throw DimensionError("label observed but example carries none");
    }
    if (data.label && shape.has_label() && *data.label >= shape.classes)
        throw DimensionError("label " + std::to_string(*data.label) + " out of range for " +
                             std::to_string(shape.classes) + " classes");
}

}  // namespace mpdbm
