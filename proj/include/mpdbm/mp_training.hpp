#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mpdbm/inference.hpp"
#include "mpdbm/mask.hpp"
#include "mpdbm/model.hpp"

namespace mpdbm {

struct SparsityConfig {
    bool enabled = false;
    std::vector<double> target;   // t per hidden layer; a single entry applies to all layers
    double slack = 0.0;           // lambda
    double weight = 1.0;          // coefficient on the penalty
    bool per_example = false;     // penalize each example's means instead of the minibatch mean
    bool mean_over_units = false; // average instead of sum over the units of a layer

    double target_for(std::size_t hidden_layer) const;
    void validate(const ModelShape& shape) const;
};

/// Learning-rate and momentum schedules follow the usual epoch-indexed forms:
///   lr(e)       = max(lr_min, learning_rate * lr_decay^e)
///   momentum(e) = linear ramp from momentum_initial to momentum_final over
///                 momentum_saturate epochs
struct Schedule {
    double learning_rate = 0.05;
    double lr_decay = 1.0;
    double lr_min = 0.0;
    double momentum_initial = 0.5;
    double momentum_final = 0.9;
    std::size_t momentum_saturate = 10;

    double lr_at(std::size_t epoch) const;
    double momentum_at(std::size_t epoch) const;
};

struct MpConfig {
    std::size_t n_mf_iters = 10;
    Schedule schedule;
    SparsityConfig sparsity;
    std::vector<double> column_norm_cap;  // one per weight matrix, or a single shared value
    std::size_t minibatch_size = 100;
    std::size_t epochs = 50;
    std::uint64_t seed = 0;

    void validate(const ModelShape& shape) const;
};

// Each visible unit and the label is observed with probability 1/2; masks with
// no inputs or no targets are resampled. Throws "no valid mask" after 1000 draws.
Mask sample_mask(const ModelShape& shape, Rng& rng);

// Cross-entropy of the final mean-field predictions on the masked targets.
// Only labelled examples contribute a label term.
double mp_loss(const Params& params, const Example& data, const Mask& mask, std::size_t n_iters);

// sum_j max(|m_j - t| - lambda, 0) over the given means of one layer.
double sparsity_penalty(std::span<const double> means, double target, double slack);

struct MpGradResult {
    Gradient gradient;
    double loss;  // mean MP loss plus sparsity penalty
};

// Reverse-mode gradient of the minibatch-averaged MP loss (plus sparsity
// penalty) through the unrolled inference graph. Throws NumericError naming
// the tensor when a non-finite value appears.
MpGradResult mp_grad(const Params& params, std::span<const Example> minibatch, std::span<const Mask> masks,
                     std::size_t n_iters, const SparsityConfig& sparsity = {});

// Objective value matching mp_grad (no gradient).
double mp_batch_objective(const Params& params, std::span<const Example> minibatch, std::span<const Mask> masks,
                          std::size_t n_iters, const SparsityConfig& sparsity = {});

// Rescales every weight column whose Euclidean norm exceeds its cap.
void max_norm_project(Params& params, std::span<const double> caps);

// Heavy-ball momentum: velocity = momentum * velocity - lr * grad; params += velocity; project.
void sgd_step(Params& params, const Gradient& grad, Gradient& velocity, double lr, double momentum,
              std::span<const double> caps);

struct Estimate {
    double mean;
    double std_error;
};

// Monte-Carlo estimate of the MP objective from n_masks (example, mask) draws.
Estimate mp_objective_estimate(const Params& params, std::span<const Example> dataset, std::size_t n_masks,
                               std::size_t n_iters, Rng& rng);

// Exact expectation of mp_loss over the dataset and every valid mask (uniform
// over the masks sample_mask can return). Feasible only for small visible counts.
double enumerated_mp_objective(const Params& params, std::span<const Example> dataset, std::size_t n_iters);

/// Minibatch SGD on the MP objective. Holds everything needed to resume.
class MpTrainer {
public:
    MpTrainer(Params params, MpConfig config);

    // One pass over a reshuffled dataset.
    double run_epoch(std::span<const Example> dataset);
    // One minibatch step with freshly sampled masks.
    double step(std::span<const Example> minibatch, std::size_t epoch);

    const Params& params() const noexcept { return params_; }
    const Gradient& velocity() const noexcept { return velocity_; }
    Rng& rng() noexcept { return rng_; }
    const Rng& rng() const noexcept { return rng_; }
    std::size_t epoch() const noexcept { return epoch_; }
    const MpConfig& config() const noexcept { return config_; }

    void restore(Params params, Gradient velocity, Rng::State rng_state, std::size_t epoch);

private:
    Params params_;
    MpConfig config_;
    Gradient velocity_;
    Rng rng_;
    std::size_t epoch_ = 0;
    std::vector<double> caps_;
};

// Resolves a cap list (empty = unconstrained, one value = shared) to one per weight matrix.
std::vector<double> resolve_caps(const ModelShape& shape, std::span<const double> caps);

}  // namespace mpdbm
