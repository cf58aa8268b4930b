#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpdbm/numerics.hpp"

namespace mpdbm {

/// Layer sizes of a binary DBM with an optional one-of-k label unit.
///
/// Internally the model is handled as a chain of layers:
///   layer 0 = v, layers 1..L = h^(1)..h^(L), layer L+1 = y (when classes > 0).
/// Chain edge i couples layer i (rows) with layer i+1 (columns), so the label
/// coupling is the last edge and attaches to the top hidden layer.
struct ModelShape {
    std::size_t visible = 0;
    std::vector<std::size_t> hidden;
    std::size_t classes = 0;

    std::size_t depth() const noexcept { return hidden.size(); }
    bool has_label() const noexcept { return classes > 0; }
    std::size_t num_layers() const noexcept { return 1 + hidden.size() + (has_label() ? 1 : 0); }
    std::size_t num_edges() const noexcept { return num_layers() - 1; }
    std::size_t label_layer() const noexcept { return hidden.size() + 1; }
    bool is_label_layer(std::size_t layer) const noexcept { return has_label() && layer == label_layer(); }
    std::size_t layer_size(std::size_t layer) const;
    // Sum of all layer sizes (label counted as `classes` units).
    std::size_t total_units() const noexcept;

    void validate() const;  // throws Error

    friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

std::string layer_name(const ModelShape& shape, std::size_t layer);  // "v", "h1", ..., "y"

/// Parameter-shaped tensors (weights per chain edge, biases per layer). Used
/// for gradients and optimizer velocity.
struct Gradient {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    static Gradient zeros(const ModelShape& shape);

    void add_scaled(const Gradient& other, double scale);
    void scale(double s);
    std::size_t num_elements() const;
    // Name of the first tensor containing a non-finite entry, or empty.
    std::string first_non_finite(const ModelShape& shape) const;

    friend bool operator==(const Gradient&, const Gradient&) = default;
};

std::string weight_name(const ModelShape& shape, std::size_t edge);  // "w1", "w2", ..., "wy"
std::string bias_name(const ModelShape& shape, std::size_t layer);   // "b_v", "b_h1", ..., "b_y"

struct Params {
    ModelShape shape;
    std::vector<Matrix> weights;                  // chain edges
    std::vector<Vector> biases;                   // per chain layer
    std::optional<std::vector<Vector>> offsets;   // centering offsets per chain layer

    static Params zeros(const ModelShape& shape);

    Matrix& w(std::size_t i) { return weights.at(i); }              // w(0) couples v and h^(1)
    const Matrix& w(std::size_t i) const { return weights.at(i); }
    Matrix& wy() { return weights.at(shape.label_layer() - 1); }
    const Matrix& wy() const { return weights.at(shape.label_layer() - 1); }
    Vector& b_v() { return biases.front(); }
    const Vector& b_v() const { return biases.front(); }
    Vector& b_h(std::size_t i) { return biases.at(i + 1); }         // b_h(0) is the bias of h^(1)
    const Vector& b_h(std::size_t i) const { return biases.at(i + 1); }
    Vector& b_y() { return biases.at(shape.label_layer()); }
    const Vector& b_y() const { return biases.at(shape.label_layer()); }

    bool centered() const noexcept { return offsets.has_value(); }
    // Offset of one unit; zero for uncentered models.
    double offset(std::size_t layer, std::size_t unit) const {
        return offsets ? (*offsets)[layer][unit] : 0.0;
    }
    // x - beta for a layer's values.
    Vector centered_values(std::size_t layer, std::span<const double> values) const;

    void add_scaled(const Gradient& g, double scale);
    std::size_t num_parameters() const;
    void validate() const;  // shapes, finiteness, offsets in [0,1]

    friend bool operator==(const Params&, const Params&) = default;
};

/// A joint configuration of every unit, stored by chain layer. The label layer
/// holds a one-hot vector.
struct FullState {
    std::vector<Vector> layers;

    static FullState zeros(const ModelShape& shape);

    Vector& v() { return layers.front(); }
    const Vector& v() const { return layers.front(); }

    friend bool operator==(const FullState&, const FullState&) = default;
};

/// One observation: visible values and, optionally, a class index.
struct Example {
    Vector v;
    std::optional<std::size_t> label;

    friend bool operator==(const Example&, const Example&) = default;
};

Vector one_hot(std::size_t index, std::size_t size);

double energy(const Params& params, const FullState& state);

// Offset-free parameters defining the same Boltzmann distribution.
Params to_uncentered(const Params& params);

struct InitConfig {
    double weight_scale = 0.05;      // weights ~ U(-a, a)
    double visible_bias = 0.0;
    double hidden_bias = 0.0;
    double label_bias = 0.0;
    bool centered = false;
    double hidden_offset = 0.5;      // offsets for hidden and label units
    double label_offset = 0.5;
};

// Pixel means, when supplied, set the visible bias to logit(mean) and (for
// centered models) the visible offsets to the means themselves.
Params init_params(const ModelShape& shape, Rng& rng, const InitConfig& config = {},
                   std::optional<std::span<const double>> visible_means = std::nullopt);

}  // namespace mpdbm
