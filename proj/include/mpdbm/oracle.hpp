#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mpdbm/mask.hpp"
#include "mpdbm/model.hpp"

// Brute-force computations on models small enough to enumerate. These are the
// ground truth the approximate machinery is checked against.
namespace mpdbm::oracle {

struct EnumBound {
    std::size_t max_total_units = 22;
};

/// All completions of a partially observed joint state. State codes put the
/// free binary units in the low bits and the free label index above them.
class StateSpace {
public:
    StateSpace(const ModelShape& shape, const Example& data, const Mask& mask, EnumBound bound = {});

    // Every unit free.
    static StateSpace joint(const ModelShape& shape, EnumBound bound = {});

    std::size_t size() const noexcept { return size_; }
    std::size_t free_bits() const noexcept { return free_units_.size(); }
    bool label_free() const noexcept { return label_free_; }

    // Writes the completion with the given code into `out` (shaped like the model).
    void decode(std::size_t code, FullState& out) const;
    FullState decode(std::size_t code) const;

private:
    ModelShape shape_;
    FullState base_;
    std::vector<std::pair<std::size_t, std::size_t>> free_units_;  // (layer, unit)
    bool label_free_ = false;
    std::size_t size_ = 0;
};

struct ExactConditional {
    StateSpace space;
    Vector probs;              // indexed by state code
    double log_normalizer;     // log sum_completions exp(-E)
};

double exact_log_z(const Params& params, EnumBound bound = {});

// Boltzmann probabilities of every joint state, indexed by StateSpace::joint codes.
ExactConditional exact_joint(const Params& params, EnumBound bound = {});

ExactConditional exact_conditional(const Params& params, const Example& data, const Mask& mask,
                                   EnumBound bound = {});

// Exact conditional means by chain layer; observed coordinates carry the data
// and the label layer holds the exact label posterior.
std::vector<Vector> exact_marginals(const Params& params, const Example& data, const Mask& mask,
                                    EnumBound bound = {});

// Gradient of sum_n weight_n * log P(v_n, y_n) (ascent direction); hidden units
// and absent labels are marginalized. Weights default to 1.
Gradient exact_ll_grad(const Params& params, std::span<const Example> dataset,
                       std::optional<std::span<const double>> weights = std::nullopt, EnumBound bound = {});

// sum_n weight_n * log P(v_n, y_n)
double exact_log_likelihood(const Params& params, std::span<const Example> dataset,
                            std::optional<std::span<const double>> weights = std::nullopt, EnumBound bound = {});

// Sufficient statistics d(-E)/d(theta) of one joint state, accumulated with a weight.
void accumulate_statistics(const Params& params, const FullState& state, double weight, Gradient& out);

// Central finite differences of `f` with respect to every weight and bias.
Gradient finite_difference_gradient(const Params& params, const std::function<double(const Params&)>& f,
                                    double eps = 1e-5);

}  // namespace mpdbm::oracle
