#include "mpdbm/model.hpp"

#include <algorithm>
#include <cmath>

#include "mpdbm/error.hpp"

namespace mpdbm {

std::size_t ModelShape::layer_size(std::size_t layer) const {
    if (layer == 0) return visible;
    if (layer <= hidden.size()) return hidden[layer - 1];
    if (is_label_layer(layer)) return classes;
    throw DimensionError("layer index " + std::to_string(layer) + " out of range");
}

std::size_t ModelShape::total_units() const noexcept {
    std::size_t n = visible + classes;
    for (auto h : hidden) n += h;
    return n;
}

void ModelShape::validate() const {
    if (visible < 1) throw Error("model shape: visible count must be >= 1");
    if (hidden.empty()) throw Error("model shape: at least one hidden layer required");
    for (auto h : hidden)
        if (h < 1) throw Error("model shape: hidden layer sizes must be >= 1");
}

std::string layer_name(const ModelShape& shape, std::size_t layer) {
    if (layer == 0) return "v";
    if (shape.is_label_layer(layer)) return "y";
    return "h" + std::to_string(layer);
}

std::string weight_name(const ModelShape& shape, std::size_t edge) {
    if (shape.is_label_layer(edge + 1)) return "wy";
    return "w" + std::to_string(edge + 1);
}

std::string bias_name(const ModelShape& shape, std::size_t layer) {
    return "b_" + layer_name(shape, layer);
}

Gradient Gradient::zeros(const ModelShape& shape) {
    Gradient g;
    for (std::size_t e = 0; e < shape.num_edges(); ++e)
        g.weights.emplace_back(shape.layer_size(e), shape.layer_size(e + 1));
    for (std::size_t l = 0; l < shape.num_layers(); ++l) g.biases.emplace_back(shape.layer_size(l), 0.0);
    return g;
}

namespace {

template <typename A, typename B>
void check_same_layout(const A& a, const B& b) {
    if (a.weights.size() != b.weights.size() || a.biases.size() != b.biases.size())
        throw DimensionError("tensor sets have different layouts");
    for (std::size_t i = 0; i < a.weights.size(); ++i)
        if (a.weights[i].rows() != b.weights[i].rows() || a.weights[i].cols() != b.weights[i].cols())
            throw DimensionError("weight " + std::to_string(i) + ": " + a.weights[i].shape_string() + " vs " +
                                 b.weights[i].shape_string());
    for (std::size_t i = 0; i < a.biases.size(); ++i)
        if (a.biases[i].size() != b.biases[i].size())
            throw DimensionError("bias " + std::to_string(i) + ": " + std::to_string(a.biases[i].size()) +
                                 " vs " + std::to_string(b.biases[i].size()));
}

template <typename Dst>
void add_scaled_tensors(Dst& dst, const Gradient& src, double scale) {
    check_same_layout(dst, src);
    for (std::size_t i = 0; i < dst.weights.size(); ++i) {
        auto d = dst.weights[i].data();
        auto s = src.weights[i].data();
        for (std::size_t j = 0; j < d.size(); ++j) d[j] += scale * s[j];
    }
    for (std::size_t i = 0; i < dst.biases.size(); ++i)
        for (std::size_t j = 0; j < dst.biases[i].size(); ++j) dst.biases[i][j] += scale * src.biases[i][j];
}

}  // namespace

void Gradient::add_scaled(const Gradient& other, double s) { add_scaled_tensors(*this, other, s); }

void Gradient::scale(double s) {
    for (auto& w : weights)
        for (double& x : w.data()) x *= s;
    for (auto& b : biases)
        for (double& x : b) x *= s;
}

std::size_t Gradient::num_elements() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += w.size();
    for (const auto& b : biases) n += b.size();
    return n;
}

std::string Gradient::first_non_finite(const ModelShape& shape) const {
    for (std::size_t i = 0; i < weights.size(); ++i)
        if (!all_finite(weights[i].data())) return weight_name(shape, i);
    for (std::size_t i = 0; i < biases.size(); ++i)
        if (!all_finite(biases[i])) return bias_name(shape, i);
    return {};
}

Params Params::zeros(const ModelShape& shape) {
    shape.validate();
    Params p;
    p.shape = shape;
    Gradient g = Gradient::zeros(shape);
    p.weights = std::move(g.weights);
    p.biases = std::move(g.biases);
    return p;
}

Vector Params::centered_values(std::size_t layer, std::span<const double> values) const {
    Vector out(values.begin(), values.end());
    if (offsets) {
        const auto& off = (*offsets)[layer];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= off[i];
    }
    return out;
}

void Params::add_scaled(const Gradient& g, double scale) { add_scaled_tensors(*this, g, scale); }

std::size_t Params::num_parameters() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += w.size();
    for (const auto& b : biases) n += b.size();
    return n;
}

void Params::validate() const {
    shape.validate();
    check_same_layout(*this, Gradient::zeros(shape));
    for (std::size_t i = 0; i < weights.size(); ++i)
        if (!all_finite(weights[i].data())) throw NumericError("non-finite entry in " + weight_name(shape, i));
    for (std::size_t i = 0; i < biases.size(); ++i)
        if (!all_finite(biases[i])) throw NumericError("non-finite entry in " + bias_name(shape, i));
    if (offsets) {
        if (offsets->size() != shape.num_layers()) throw DimensionError("offsets: wrong number of layers");
        for (std::size_t l = 0; l < offsets->size(); ++l) {
            if ((*offsets)[l].size() != shape.layer_size(l))
                throw DimensionError("offsets for " + layer_name(shape, l) + " have wrong size");
            for (double o : (*offsets)[l])
                if (!(o >= 0.0 && o <= 1.0)) throw Error("offset outside [0,1] in " + layer_name(shape, l));
        }
    }
}

FullState FullState::zeros(const ModelShape& shape) {
    FullState s;
    for (std::size_t l = 0; l < shape.num_layers(); ++l) s.layers.emplace_back(shape.layer_size(l), 0.0);
    return s;
}

Vector one_hot(std::size_t index, std::size_t size) {
    if (index >= size) throw DimensionError("one_hot: index " + std::to_string(index) + " >= " + std::to_string(size));
    Vector out(size, 0.0);
    out[index] = 1.0;
    return out;
}

double energy(const Params& params, const FullState& state) {
    const auto& shape = params.shape;
    if (state.layers.size() != shape.num_layers())
        throw DimensionError("energy: state has " + std::to_string(state.layers.size()) + " layers, model has " +
                             std::to_string(shape.num_layers()));
    std::vector<Vector> centered;
    centered.reserve(state.layers.size());
    for (std::size_t l = 0; l < state.layers.size(); ++l) {
        if (state.layers[l].size() != shape.layer_size(l))
            throw DimensionError("energy: layer " + layer_name(shape, l) + " has size " +
                                 std::to_string(state.layers[l].size()) + ", expected " +
                                 std::to_string(shape.layer_size(l)));
        centered.push_back(params.centered_values(l, state.layers[l]));
    }
    double e = 0.0;
    for (std::size_t i = 0; i < params.weights.size(); ++i)
        e -= dot(centered[i], matvec(params.weights[i], centered[i + 1]));
    for (std::size_t l = 0; l < params.biases.size(); ++l) e -= dot(params.biases[l], centered[l]);
    return e;
}

Params to_uncentered(const Params& params) {
    Params out = params;
    out.offsets.reset();
    if (!params.offsets) return out;
    const auto& off = *params.offsets;
    // -(x-a)^T W (y-b) = -x^T W y + x^T W b + a^T W y + const
    for (std::size_t i = 0; i < params.weights.size(); ++i) {
        const Vector below_shift = matvec(params.weights[i], off[i + 1]);
        const Vector above_shift = transpose_apply(params.weights[i], off[i]);
        for (std::size_t j = 0; j < below_shift.size(); ++j) out.biases[i][j] -= below_shift[j];
        for (std::size_t j = 0; j < above_shift.size(); ++j) out.biases[i + 1][j] -= above_shift[j];
    }
    return out;
}

Params init_params(const ModelShape& shape, Rng& rng, const InitConfig& config,
                   std::optional<std::span<const double>> visible_means) {
    Params p = Params::zeros(shape);
    if (visible_means && visible_means->size() != shape.visible)
        throw DimensionError("init_params: visible means have size " + std::to_string(visible_means->size()) +
                             ", expected " + std::to_string(shape.visible));
    const double a = config.weight_scale;
    for (auto& w : p.weights)
        for (double& x : w.data()) x = a * (2.0 * rng.uniform() - 1.0);

    for (std::size_t j = 0; j < shape.visible; ++j) {
        if (visible_means) {
            const double m = std::clamp((*visible_means)[j], 1e-3, 1.0 - 1e-3);
            p.b_v()[j] = std::log(m / (1.0 - m));
        } else {
            p.b_v()[j] = config.visible_bias;
        }
    }
    for (std::size_t i = 0; i < shape.depth(); ++i) std::fill(p.b_h(i).begin(), p.b_h(i).end(), config.hidden_bias);
    if (shape.has_label()) std::fill(p.b_y().begin(), p.b_y().end(), config.label_bias);

    if (config.centered) {
        std::vector<Vector> off;
        for (std::size_t l = 0; l < shape.num_layers(); ++l) {
            const std::size_t n = shape.layer_size(l);
            if (l == 0)
                off.push_back(visible_means ? Vector(visible_means->begin(), visible_means->end()) : Vector(n, 0.5));
            else if (shape.is_label_layer(l))
                off.emplace_back(n, config.label_offset);
            else
                off.emplace_back(n, config.hidden_offset);
        }
        p.offsets = std::move(off);
    }
    return p;
}

}  // namespace mpdbm
