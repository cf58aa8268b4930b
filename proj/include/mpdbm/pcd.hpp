#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mpdbm/mask.hpp"
#include "mpdbm/model.hpp"
#include "mpdbm/mp_training.hpp"

namespace mpdbm {

/// Persistent negative-phase chains.
struct ChainPool {
    std::vector<FullState> chains;
    Rng rng;

    // Uniform random binary states (uniform random class for the label).
    static ChainPool random(const ModelShape& shape, std::size_t n_chains, std::uint64_t seed);
};

// Exact conditional distribution of one layer given the current values of its
// neighbors: Bernoulli means, or class probabilities for the label layer.
Vector layer_conditional(const Params& params, const FullState& state, std::size_t layer);

// Block Gibbs: odd-parity layers given even ones, then even given odd. Clamped
// visible coordinates and a clamped label keep their current values.
FullState gibbs_sweep(const Params& params, const FullState& state, Rng& rng,
                      const std::optional<Mask>& clamp = std::nullopt);

// d(-E)/d(theta) at a sampled state.
Gradient sample_statistics(const Params& params, const FullState& state);

// Rao-Blackwellized statistics for a state produced by gibbs_sweep: pairwise
// and odd-layer terms use the odd layers' conditional means given the sampled
// even layers; even-layer bias terms use their conditional means given the
// sampled odd layers.
Gradient rao_blackwell_statistics(const Params& params, const FullState& state);

// Positive-phase statistics from clamped mean field, averaged over the batch.
Gradient positive_statistics(const Params& params, std::span<const Example> minibatch, std::size_t mf_iters);

// Gradient of the minibatch mean negative log-likelihood (descent direction):
// negative-phase minus positive-phase statistics. Advances the chains.
Gradient pcd_grad(const Params& params, std::span<const Example> minibatch, ChainPool& chains,
                  std::size_t mf_iters_pos, std::size_t gibbs_steps_neg, bool rao_blackwell = true);

struct PcdConfig {
    std::size_t mf_iters_pos = 10;
    std::size_t gibbs_steps = 5;
    std::size_t n_chains = 100;
    bool rao_blackwell = true;
    Schedule schedule;
    std::vector<double> column_norm_cap;
    std::size_t minibatch_size = 100;
    std::size_t epochs = 100;
    std::uint64_t seed = 0;

    void validate(const ModelShape& shape) const;
};

/// SGD with momentum over pcd_grad; chains persist across steps.
class PcdTrainer {
public:
    PcdTrainer(Params params, PcdConfig config);

    double run_epoch(std::span<const Example> dataset);  // returns 0 (no cheap objective)
    void step(std::span<const Example> minibatch, std::size_t epoch);

    const Params& params() const noexcept { return params_; }
    const Gradient& velocity() const noexcept { return velocity_; }
    const ChainPool& chains() const noexcept { return chains_; }
    Rng& rng() noexcept { return rng_; }
    const Rng& rng() const noexcept { return rng_; }
    std::size_t epoch() const noexcept { return epoch_; }
    const PcdConfig& config() const noexcept { return config_; }

    void restore(Params params, Gradient velocity, Rng::State rng_state, std::vector<FullState> chains,
                 Rng::State chain_rng_state, std::size_t epoch);

private:
    Params params_;
    PcdConfig config_;
    Gradient velocity_;
    Rng rng_;
    ChainPool chains_;
    std::size_t epoch_ = 0;
    std::vector<double> caps_;
};

// Runs config.epochs epochs (or `steps` minibatch steps when given) and returns the parameters.
Params train_pcd(const Params& params, std::span<const Example> dataset, const PcdConfig& config,
                 std::optional<std::size_t> steps = std::nullopt);

}  // namespace mpdbm
