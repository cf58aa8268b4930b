#include "mpdbm/pcd.hpp"

#include <algorithm>
#include <numeric>

#include "mpdbm/error.hpp"
#include "mpdbm/inference.hpp"
#include "mpdbm/oracle.hpp"

namespace mpdbm {

ChainPool ChainPool::random(const ModelShape& shape, std::size_t n_chains, std::uint64_t seed) {
    ChainPool pool{{}, Rng(seed)};
    for (std::size_t c = 0; c < n_chains; ++c) {
        FullState s = FullState::zeros(shape);
        for (std::size_t l = 0; l < shape.num_layers(); ++l) {
            if (shape.is_label_layer(l)) {
                s.layers[l][pool.rng.uniform_index(shape.classes)] = 1.0;
                continue;
            }
            for (double& x : s.layers[l]) x = pool.rng.bernoulli(0.5) ? 1.0 : 0.0;
        }
        pool.chains.push_back(std::move(s));
    }
    return pool;
}

Vector layer_conditional(const Params& params, const FullState& state, std::size_t layer) {
    Vector field = params.biases.at(layer);
    if (layer > 0) {
        const Vector in = transpose_apply(params.weights[layer - 1], params.centered_values(layer - 1, state.layers[layer - 1]));
        for (std::size_t i = 0; i < field.size(); ++i) field[i] += in[i];
    }
    if (layer + 1 < state.layers.size()) {
        const Vector in = matvec(params.weights[layer], params.centered_values(layer + 1, state.layers[layer + 1]));
        for (std::size_t i = 0; i < field.size(); ++i) field[i] += in[i];
    }
    if (params.shape.is_label_layer(layer)) return softmax(field);
    for (double& f : field) f = sigmoid(f);
    return field;
}

FullState gibbs_sweep(const Params& params, const FullState& state, Rng& rng, const std::optional<Mask>& clamp) {
    const auto& shape = params.shape;
    if (state.layers.size() != shape.num_layers()) throw DimensionError("gibbs_sweep: state has wrong layer count");
    FullState s = state;
    for (std::size_t parity : {1u, 0u}) {
        for (std::size_t l = parity; l < shape.num_layers(); l += 2) {
            if (shape.is_label_layer(l)) {
                if (clamp && clamp->label_observed) continue;
                const Vector probs = layer_conditional(params, s, l);
                s.layers[l] = one_hot(rng.categorical(probs), shape.classes);
                continue;
            }
            const Vector probs = layer_conditional(params, s, l);
            for (std::size_t j = 0; j < probs.size(); ++j) {
                if (l == 0 && clamp && clamp->observed(j)) continue;
                s.layers[l][j] = rng.uniform() < probs[j] ? 1.0 : 0.0;
            }
        }
    }
    return s;
}

Gradient sample_statistics(const Params& params, const FullState& state) {
    Gradient g = Gradient::zeros(params.shape);
    oracle::accumulate_statistics(params, state, 1.0, g);
    return g;
}

Gradient rao_blackwell_statistics(const Params& params, const FullState& state) {
    const auto& shape = params.shape;
    FullState odd_expected = state;  // odd layers -> E[odd | sampled even]
    FullState even_expected = state; // even layers -> E[even | sampled odd]
    for (std::size_t l = 0; l < shape.num_layers(); ++l) {
        if (l % 2 == 1)
            odd_expected.layers[l] = layer_conditional(params, state, l);
        else
            even_expected.layers[l] = layer_conditional(params, state, l);
    }
    Gradient g = Gradient::zeros(shape);
    // Every edge joins an odd and an even layer.
    for (std::size_t e = 0; e < g.weights.size(); ++e)
        add_outer(g.weights[e], params.centered_values(e, odd_expected.layers[e]),
                  params.centered_values(e + 1, odd_expected.layers[e + 1]));
    for (std::size_t l = 0; l < shape.num_layers(); ++l) {
        const Vector& src = (l % 2 == 1) ? odd_expected.layers[l] : even_expected.layers[l];
        g.biases[l] = params.centered_values(l, src);
    }
    return g;
}

Gradient positive_statistics(const Params& params, std::span<const Example> minibatch, std::size_t mf_iters) {
    if (minibatch.empty()) throw Error("positive phase: empty minibatch");
    std::vector<MeanFieldState> states(minibatch.size());
    parallel_for(minibatch.size(), [&](std::size_t b) {
        Mask mask = Mask::all_observed(params.shape);
        mask.label_observed = params.shape.has_label() && minibatch[b].label.has_value();
        states[b] = mf_run(params, minibatch[b], mask, MfOptions{.n_iters = mf_iters}).state;
    });
    Gradient pos = Gradient::zeros(params.shape);
    const double w = 1.0 / static_cast<double>(minibatch.size());
    for (const auto& s : states) oracle::accumulate_statistics(params, FullState{s.layers}, w, pos);
    return pos;
}

Gradient pcd_grad(const Params& params, std::span<const Example> minibatch, ChainPool& chains,
                  std::size_t mf_iters_pos, std::size_t gibbs_steps_neg, bool rao_blackwell) {
    if (chains.chains.empty()) throw Error("pcd_grad: chain pool is empty");
    Gradient grad = Gradient::zeros(params.shape);
    const double w = 1.0 / static_cast<double>(chains.chains.size());
    for (auto& chain : chains.chains) {
        for (std::size_t s = 0; s < gibbs_steps_neg; ++s) chain = gibbs_sweep(params, chain, chains.rng);
        grad.add_scaled(rao_blackwell ? rao_blackwell_statistics(params, chain) : sample_statistics(params, chain), w);
    }
    grad.add_scaled(positive_statistics(params, minibatch, mf_iters_pos), -1.0);
    if (auto bad = grad.first_non_finite(params.shape); !bad.empty())
        throw NumericError("non-finite gradient in " + bad);
    return grad;
}

void PcdConfig::validate(const ModelShape& shape) const {
    if (mf_iters_pos < 1 || mf_iters_pos > 50) throw Error("pcd: mf_iters_pos must lie in [1, 50]");
    if (n_chains < 1) throw Error("pcd: n_chains must be >= 1");
    if (minibatch_size < 1) throw Error("pcd: minibatch_size must be >= 1");
    for (double c : column_norm_cap)
        if (!(c > 0.0)) throw Error("pcd: column norm caps must be > 0");
    resolve_caps(shape, column_norm_cap);
}

PcdTrainer::PcdTrainer(Params params, PcdConfig config)
    : params_(std::move(params)), config_(std::move(config)), velocity_(Gradient::zeros(params_.shape)),
      rng_(config_.seed) {
    config_.validate(params_.shape);
    caps_ = resolve_caps(params_.shape, config_.column_norm_cap);
    chains_ = ChainPool::random(params_.shape, config_.n_chains, rng_.next_u64());
}

void PcdTrainer::step(std::span<const Example> minibatch, std::size_t epoch) {
    const Gradient g = pcd_grad(params_, minibatch, chains_, config_.mf_iters_pos, config_.gibbs_steps,
                                config_.rao_blackwell);
    sgd_step(params_, g, velocity_, config_.schedule.lr_at(epoch), config_.schedule.momentum_at(epoch), caps_);
}

double PcdTrainer::run_epoch(std::span<const Example> dataset) {
    if (dataset.empty()) throw Error("training set is empty");
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_.uniform_index(i)]);
    std::vector<Example> batch;
    for (std::size_t start = 0; start < order.size(); start += config_.minibatch_size) {
        const std::size_t end = std::min(order.size(), start + config_.minibatch_size);
        batch.clear();
        for (std::size_t i = start; i < end; ++i) batch.push_back(dataset[order[i]]);
        step(batch, epoch_);
    }
    ++epoch_;
    return 0.0;
}

void PcdTrainer::restore(Params params, Gradient velocity, Rng::State rng_state, std::vector<FullState> chains,
                         Rng::State chain_rng_state, std::size_t epoch) {
    if (!(params.shape == params_.shape)) throw DimensionError("restore: model shape differs");
    params_ = std::move(params);
    velocity_ = std::move(velocity);
    rng_.set_state(rng_state);
    chains_.chains = std::move(chains);
    chains_.rng.set_state(chain_rng_state);
    epoch_ = epoch;
}

Params train_pcd(const Params& params, std::span<const Example> dataset, const PcdConfig& config,
                 std::optional<std::size_t> steps) {
    PcdTrainer trainer(params, config);
    if (!steps) {
        for (std::size_t e = 0; e < config.epochs; ++e) trainer.run_epoch(dataset);
        return trainer.params();
    }
    if (dataset.empty()) throw Error("training set is empty");
    // Fixed-step mode cycles through the data in order.
    std::vector<Example> batch;
    std::size_t cursor = 0;
    for (std::size_t s = 0; s < *steps; ++s) {
        batch.clear();
        for (std::size_t i = 0; i < config.minibatch_size; ++i) batch.push_back(dataset[(cursor++) % dataset.size()]);
        trainer.step(batch, 0);
    }
    return trainer.params();
}

}  // namespace mpdbm
