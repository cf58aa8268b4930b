#include "mpdbm/oracle.hpp"

#include <cmath>

#include "mpdbm/error.hpp"

namespace mpdbm::oracle {

namespace {

std::size_t ceil_log2(std::size_t n) {
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    return bits;
}

}  // namespace

StateSpace::StateSpace(const ModelShape& shape, const Example& data, const Mask& mask, EnumBound bound)
    : shape_(shape), base_(FullState::zeros(shape)) {
    check_query(shape, data, mask);
    for (std::size_t j = 0; j < shape.visible; ++j) {
        if (mask.observed(j))
            base_.v()[j] = data.v[j];
        else
            free_units_.emplace_back(0, j);
    }
    for (std::size_t l = 1; l <= shape.depth(); ++l)
        for (std::size_t j = 0; j < shape.layer_size(l); ++j) free_units_.emplace_back(l, j);
    if (shape.has_label()) {
        label_free_ = !mask.label_observed;
        if (!label_free_) base_.layers[shape.label_layer()] = one_hot(*data.label, shape.classes);
    }
    const std::size_t units = free_units_.size() + (label_free_ ? ceil_log2(shape.classes) : 0);
    if (units > bound.max_total_units)
        throw EnumerationBoundError(std::to_string(units) + " free units > " + std::to_string(bound.max_total_units));
    size_ = (std::size_t{1} << free_units_.size()) * (label_free_ ? shape.classes : 1);
}

StateSpace StateSpace::joint(const ModelShape& shape, EnumBound bound) {
    return StateSpace(shape, Example{}, Mask::none_observed(shape), bound);
}

void StateSpace::decode(std::size_t code, FullState& out) const {
    out = base_;
    for (std::size_t b = 0; b < free_units_.size(); ++b) {
        const auto [layer, unit] = free_units_[b];
        out.layers[layer][unit] = static_cast<double>((code >> b) & 1u);
    }
    if (label_free_) {
        auto& y = out.layers[shape_.label_layer()];
        std::fill(y.begin(), y.end(), 0.0);
        y[code >> free_units_.size()] = 1.0;
    }
}

FullState StateSpace::decode(std::size_t code) const {
    FullState s;
    decode(code, s);
    return s;
}

namespace {

ExactConditional normalize(const Params& params, StateSpace space) {
    Vector neg_energy(space.size());
    FullState s;
    for (std::size_t c = 0; c < space.size(); ++c) {
        space.decode(c, s);
        neg_energy[c] = -energy(params, s);
    }
    const double log_norm = log_sum_exp(neg_energy);
    for (double& x : neg_energy) x = std::exp(x - log_norm);
    return ExactConditional{std::move(space), std::move(neg_energy), log_norm};
}

}  // namespace

double exact_log_z(const Params& params, EnumBound bound) {
    return exact_joint(params, bound).log_normalizer;
}

ExactConditional exact_joint(const Params& params, EnumBound bound) {
    return normalize(params, StateSpace::joint(params.shape, bound));
}

ExactConditional exact_conditional(const Params& params, const Example& data, const Mask& mask, EnumBound bound) {
    return normalize(params, StateSpace(params.shape, data, mask, bound));
}

std::vector<Vector> exact_marginals(const Params& params, const Example& data, const Mask& mask, EnumBound bound) {
    const auto cond = exact_conditional(params, data, mask, bound);
    std::vector<Vector> means = FullState::zeros(params.shape).layers;
    FullState s;
    for (std::size_t c = 0; c < cond.space.size(); ++c) {
        cond.space.decode(c, s);
        for (std::size_t l = 0; l < means.size(); ++l)
            for (std::size_t j = 0; j < means[l].size(); ++j) means[l][j] += cond.probs[c] * s.layers[l][j];
    }
    return means;
}

void accumulate_statistics(const Params& params, const FullState& state, double weight, Gradient& out) {
    std::vector<Vector> centered;
    for (std::size_t l = 0; l < state.layers.size(); ++l) centered.push_back(params.centered_values(l, state.layers[l]));
    for (std::size_t e = 0; e < out.weights.size(); ++e) add_outer(out.weights[e], centered[e], centered[e + 1], weight);
    for (std::size_t l = 0; l < out.biases.size(); ++l)
        for (std::size_t j = 0; j < out.biases[l].size(); ++j) out.biases[l][j] += weight * centered[l][j];
}

namespace {

Mask data_mask(const ModelShape& shape, const Example& ex) {
    Mask m = Mask::all_observed(shape);
    m.label_observed = shape.has_label() && ex.label.has_value();
    return m;
}

double example_weight(std::optional<std::span<const double>> weights, std::size_t n) {
    return weights ? (*weights)[n] : 1.0;
}

void check_weights(std::span<const Example> dataset, std::optional<std::span<const double>> weights) {
    if (weights && weights->size() != dataset.size())
        throw DimensionError("weights: " + std::to_string(weights->size()) + " entries for " +
                             std::to_string(dataset.size()) + " examples");
}

}  // namespace

Gradient exact_ll_grad(const Params& params, std::span<const Example> dataset,
                       std::optional<std::span<const double>> weights, EnumBound bound) {
    check_weights(dataset, weights);
    Gradient grad = Gradient::zeros(params.shape);
    double total_weight = 0.0;
    FullState s;
    for (std::size_t n = 0; n < dataset.size(); ++n) {
        const double w = example_weight(weights, n);
        total_weight += w;
        const auto cond = exact_conditional(params, dataset[n], data_mask(params.shape, dataset[n]), bound);
        for (std::size_t c = 0; c < cond.space.size(); ++c) {
            cond.space.decode(c, s);
            accumulate_statistics(params, s, w * cond.probs[c], grad);
        }
    }
    const auto joint = exact_joint(params, bound);
    for (std::size_t c = 0; c < joint.space.size(); ++c) {
        joint.space.decode(c, s);
        accumulate_statistics(params, s, -total_weight * joint.probs[c], grad);
    }
    return grad;
}

double exact_log_likelihood(const Params& params, std::span<const Example> dataset,
                            std::optional<std::span<const double>> weights, EnumBound bound) {
    check_weights(dataset, weights);
    const double log_z = exact_log_z(params, bound);
    double ll = 0.0;
    for (std::size_t n = 0; n < dataset.size(); ++n) {
        const auto cond = exact_conditional(params, dataset[n], data_mask(params.shape, dataset[n]), bound);
        ll += example_weight(weights, n) * (cond.log_normalizer - log_z);
    }
    return ll;
}

Gradient finite_difference_gradient(const Params& params, const std::function<double(const Params&)>& f,
                                    double eps) {
    Gradient g = Gradient::zeros(params.shape);
    Params probe = params;
    auto diff = [&](double& slot) {
        const double saved = slot;
        slot = saved + eps;
        const double up = f(probe);
        slot = saved - eps;
        const double down = f(probe);
        slot = saved;
        return (up - down) / (2.0 * eps);
    };
    for (std::size_t e = 0; e < probe.weights.size(); ++e) {
        auto data = probe.weights[e].data();
        auto out = g.weights[e].data();
        for (std::size_t i = 0; i < data.size(); ++i) out[i] = diff(data[i]);
    }
    for (std::size_t l = 0; l < probe.biases.size(); ++l)
        for (std::size_t i = 0; i < probe.biases[l].size(); ++i) g.biases[l][i] = diff(probe.biases[l][i]);
    return g;
}

}  // namespace mpdbm::oracle
