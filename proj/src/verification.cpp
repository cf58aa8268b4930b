#include "mpdbm/verification.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mpdbm/error.hpp"
#include "mpdbm/inference.hpp"
#include "mpdbm/pcd.hpp"

namespace mpdbm::verify {

Params random_params(const ModelShape& shape, Rng& rng, double scale, bool centered) {
    Params p = Params::zeros(shape);
    auto draw = [&] { return scale * (2.0 * rng.uniform() - 1.0); };
    for (auto& w : p.weights)
        for (double& x : w.data()) x = draw();
    for (auto& b : p.biases)
        for (double& x : b) x = draw();
    if (centered) {
        std::vector<Vector> off;
        for (std::size_t l = 0; l < shape.num_layers(); ++l) {
            Vector o(shape.layer_size(l));
            for (double& x : o) x = 0.2 + 0.6 * rng.uniform();
            off.push_back(std::move(o));
        }
        p.offsets = std::move(off);
    }
    return p;
}

std::vector<Example> random_examples(const ModelShape& shape, std::size_t n, Rng& rng) {
    std::vector<Example> out;
    for (std::size_t i = 0; i < n; ++i) {
        Example ex;
        ex.v.resize(shape.visible);
        for (double& x : ex.v) x = rng.bernoulli(0.5) ? 1.0 : 0.0;
        if (shape.has_label()) ex.label = rng.uniform_index(shape.classes);
        out.push_back(std::move(ex));
    }
    return out;
}

double relative_error(double a, double b, double abs_floor) {
    const double diff = std::abs(a - b);
    if (diff <= abs_floor) return 0.0;
    return diff / std::max(std::abs(a), std::abs(b));
}

GradientCheck check_mp_gradient(const Params& params, std::span<const Example> batch, std::span<const Mask> masks,
                                std::size_t n_iters, const SparsityConfig& sparsity, double eps, double fault) {
    Gradient analytic = mp_grad(params, batch, masks, n_iters, sparsity).gradient;
    if (fault != 0.0) {
        if (!analytic.weights.empty() && analytic.weights[0].size() > 0) analytic.weights[0].data()[0] += fault;
        else analytic.biases[0][0] += fault;
    }
    const Gradient numeric = oracle::finite_difference_gradient(
        params, [&](const Params& p) { return mp_batch_objective(p, batch, masks, n_iters, sparsity); }, eps);

    GradientCheck out;
    const auto& shape = params.shape;
    auto consider = [&](std::span<const double> a, std::span<const double> n, const std::string& name) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double err = relative_error(a[i], n[i]);
            ++out.coordinates;
            if (err > out.max_rel_error) {
                out.max_rel_error = err;
                out.worst_tensor = name;
            }
        }
    };
    for (std::size_t e = 0; e < analytic.weights.size(); ++e)
        consider(analytic.weights[e].data(), numeric.weights[e].data(), weight_name(shape, e));
    for (std::size_t l = 0; l < analytic.biases.size(); ++l)
        consider(analytic.biases[l], numeric.biases[l], bias_name(shape, l));
    return out;
}

double sparsity_kink_distance(const Params& params, std::span<const Example> batch, std::span<const Mask> masks,
                              std::size_t n_iters, const SparsityConfig& sparsity) {
    if (!sparsity.enabled) return std::numeric_limits<double>::infinity();
    std::vector<MeanFieldState> states;
    for (std::size_t b = 0; b < batch.size(); ++b)
        states.push_back(mf_run(params, batch[b], masks[b], MfOptions{.n_iters = n_iters}).state);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < params.shape.depth(); ++i) {
        const double t = sparsity.target_for(i);
        const std::size_t units = params.shape.hidden[i];
        auto kink = [&](double m) { return std::abs(std::abs(m - t) - sparsity.slack); };
        if (sparsity.per_example) {
            for (const auto& s : states)
                for (double m : s.layers[i + 1]) best = std::min(best, kink(m));
        } else {
            for (std::size_t j = 0; j < units; ++j) {
                double m = 0.0;
                for (const auto& s : states) m += s.layers[i + 1][j];
                best = std::min(best, kink(m / static_cast<double>(states.size())));
            }
        }
    }
    return best;
}

KlTrajectory kl_trajectory(const Params& params, const Example& data, const Mask& mask, std::size_t sweeps) {
    KlTrajectory out;
    MeanFieldState state = mf_init(params, data, mask);
    out.kl.push_back(mf_kl_to_exact(params, data, mask, state));
    for (std::size_t s = 0; s < sweeps; ++s) {
        state = mf_sweep(params, state, data, mask);
        out.kl.push_back(mf_kl_to_exact(params, data, mask, state));
    }
    out.max_increase = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < out.kl.size(); ++i) out.max_increase = std::max(out.max_increase, out.kl[i] - out.kl[i - 1]);
    out.min_value = *std::min_element(out.kl.begin(), out.kl.end());
    return out;
}

std::size_t joint_state_code(const ModelShape& shape, const FullState& state) {
    std::size_t code = 0, bit = 0;
    for (std::size_t l = 0; l <= shape.depth(); ++l)
        for (double x : state.layers[l]) code |= static_cast<std::size_t>(x != 0.0) << bit++;
    if (shape.has_label()) {
        const auto& y = state.layers[shape.label_layer()];
        code |= static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin()) << bit;
    }
    return code;
}

double gibbs_total_variation(const Params& params, std::size_t samples, std::size_t thin, std::size_t burn_in,
                             Rng& rng) {
    const auto exact = oracle::exact_joint(params);
    std::vector<double> counts(exact.space.size(), 0.0);
    FullState state = ChainPool::random(params.shape, 1, rng.next_u64()).chains.front();
    for (std::size_t i = 0; i < burn_in; ++i) state = gibbs_sweep(params, state, rng);
    for (std::size_t s = 0; s < samples; ++s) {
        for (std::size_t t = 0; t < std::max<std::size_t>(thin, 1); ++t) state = gibbs_sweep(params, state, rng);
        counts[joint_state_code(params.shape, state)] += 1.0;
    }
    double tv = 0.0;
    for (std::size_t c = 0; c < counts.size(); ++c)
        tv += std::abs(counts[c] / static_cast<double>(samples) - exact.probs[c]);
    return 0.5 * tv;
}

double centering_max_probability_gap(const Params& centered) {
    const auto a = oracle::exact_joint(centered);
    const auto b = oracle::exact_joint(to_uncentered(centered));
    double gap = 0.0;
    for (std::size_t c = 0; c < a.probs.size(); ++c) gap = std::max(gap, std::abs(a.probs[c] - b.probs[c]));
    return gap;
}

}  // namespace mpdbm::verify
