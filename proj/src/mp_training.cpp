#include "mpdbm/mp_training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mpdbm/error.hpp"

namespace mpdbm {

namespace {

constexpr double kClip = 1e-12;
constexpr std::size_t kMaxMaskDraws = 1000;

double clip(double p) { return std::clamp(p, kClip, 1.0 - kClip); }

struct ExampleLoss {
    double loss = 0.0;
    std::vector<Vector> adjoints;  // dloss/dfinal mean, per layer
};

ExampleLoss prediction_loss(const ModelShape& shape, const MeanFieldState& state, const Example& data,
                            const Mask& mask) {
    ExampleLoss out;
    out.adjoints.resize(shape.num_layers());
    const Vector& v = state.v_hat();
    Vector& dv = out.adjoints[0];
    dv.assign(v.size(), 0.0);
    for (std::size_t j = 0; j < v.size(); ++j) {
        if (mask.observed(j)) continue;
        const double x = data.v[j];
        const double p = clip(v[j]);
        out.loss -= x * std::log(p) + (1.0 - x) * std::log(1.0 - p);
        if (p == v[j]) dv[j] = -x / p + (1.0 - x) / (1.0 - p);
    }
    if (shape.has_label() && !mask.label_observed && data.label) {
        const std::size_t c = *data.label;
        const double p = clip(state.y_hat()[c]);
        out.loss -= std::log(p);
        Vector& dy = out.adjoints[shape.label_layer()];
        dy.assign(shape.classes, 0.0);
        if (p == state.y_hat()[c]) dy[c] = -1.0 / p;
    }
    return out;
}

void check_batch(std::span<const Example> minibatch, std::span<const Mask> masks) {
    if (minibatch.size() != masks.size())
        throw DimensionError("mp_grad: " + std::to_string(masks.size()) + " masks for " +
                             std::to_string(minibatch.size()) + " examples");
    if (minibatch.empty()) throw Error("mp_grad: empty minibatch");
}

struct Forward {
    std::vector<MfResult> runs;
    std::vector<ExampleLoss> losses;
};

Forward forward_batch(const Params& params, std::span<const Example> minibatch, std::span<const Mask> masks,
                      std::size_t n_iters) {
    Forward f;
    f.runs.resize(minibatch.size());
    f.losses.resize(minibatch.size());
    const MfOptions opts{.n_iters = n_iters};
    parallel_for(minibatch.size(), [&](std::size_t b) {
        f.runs[b] = mf_run(params, minibatch[b], masks[b], opts);
        f.losses[b] = prediction_loss(params.shape, f.runs[b].state, minibatch[b], masks[b]);
    });
    return f;
}

double penalty_scale(const SparsityConfig& cfg, std::size_t units) {
    return cfg.mean_over_units ? cfg.weight / static_cast<double>(units) : cfg.weight;
}

double sign_outside(double m, double t, double slack) {
    const double d = m - t;
    if (std::abs(d) - slack <= 0.0) return 0.0;
    return d > 0.0 ? 1.0 : -1.0;
}

// Adds B * dpenalty/dh to each example's adjoints; returns the penalty.
double apply_sparsity(const ModelShape& shape, const SparsityConfig& cfg, Forward& f) {
    if (!cfg.enabled) return 0.0;
    const std::size_t batch = f.runs.size();
    double penalty = 0.0;
    for (std::size_t i = 0; i < shape.depth(); ++i) {
        const std::size_t layer = i + 1;
        const std::size_t units = shape.hidden[i];
        const double t = cfg.target_for(i);
        const double scale = penalty_scale(cfg, units);
        auto adjoint = [&](std::size_t b) -> Vector& {
            Vector& a = f.losses[b].adjoints[layer];
            if (a.empty()) a.assign(units, 0.0);
            return a;
        };
        if (cfg.per_example) {
            for (std::size_t b = 0; b < batch; ++b) {
                const Vector& h = f.runs[b].state.layers[layer];
                penalty += scale * sparsity_penalty(h, t, cfg.slack) / static_cast<double>(batch);
                Vector& a = adjoint(b);
                for (std::size_t j = 0; j < units; ++j) a[j] += scale * sign_outside(h[j], t, cfg.slack);
            }
        } else {
            Vector m(units, 0.0);
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t j = 0; j < units; ++j) m[j] += f.runs[b].state.layers[layer][j];
            for (double& x : m) x /= static_cast<double>(batch);
            penalty += scale * sparsity_penalty(m, t, cfg.slack);
            for (std::size_t b = 0; b < batch; ++b) {
                Vector& a = adjoint(b);
                for (std::size_t j = 0; j < units; ++j) a[j] += scale * sign_outside(m[j], t, cfg.slack);
            }
        }
    }
    return penalty;
}

double mean_loss(const Forward& f) {
    double total = 0.0;
    for (const auto& l : f.losses) total += l.loss;
    return total / static_cast<double>(f.losses.size());
}

}  // namespace

double SparsityConfig::target_for(std::size_t hidden_layer) const {
    if (target.empty()) throw Error("sparsity: no target configured");
    return target.size() == 1 ? target[0] : target.at(hidden_layer);
}

void SparsityConfig::validate(const ModelShape& shape) const {
    if (!enabled) return;
    if (target.size() != 1 && target.size() != shape.depth())
        throw Error("sparsity: need one target or one per hidden layer");
    for (double t : target)
        if (!(t > 0.0 && t < 1.0)) throw Error("sparsity: target must lie in (0,1)");
    if (!(slack >= 0.0)) throw Error("sparsity: slack must be >= 0");
}

double Schedule::lr_at(std::size_t epoch) const {
    return std::max(lr_min, learning_rate * std::pow(lr_decay, static_cast<double>(epoch)));
}

double Schedule::momentum_at(std::size_t epoch) const {
    if (momentum_saturate == 0 || epoch >= momentum_saturate) return momentum_final;
    const double frac = static_cast<double>(epoch) / static_cast<double>(momentum_saturate);
    return momentum_initial + frac * (momentum_final - momentum_initial);
}

void MpConfig::validate(const ModelShape& shape) const {
    if (n_mf_iters < 1 || n_mf_iters > 50) throw Error("mp: n_mf_iters must lie in [1, 50]");
    if (minibatch_size < 1) throw Error("mp: minibatch_size must be >= 1");
    for (double c : column_norm_cap)
        if (!(c > 0.0)) throw Error("mp: column norm caps must be > 0");
    resolve_caps(shape, column_norm_cap);
    sparsity.validate(shape);
}

std::vector<double> resolve_caps(const ModelShape& shape, std::span<const double> caps) {
    const std::size_t n = shape.num_edges();
    if (caps.empty()) return std::vector<double>(n, std::numeric_limits<double>::infinity());
    if (caps.size() == 1) return std::vector<double>(n, caps[0]);
    if (caps.size() != n)
        throw Error("column norm caps: expected 1 or " + std::to_string(n) + " values, got " +
                    std::to_string(caps.size()));
    return {caps.begin(), caps.end()};
}

Mask sample_mask(const ModelShape& shape, Rng& rng) {
    Mask m = Mask::none_observed(shape);
    for (std::size_t attempt = 0; attempt < kMaxMaskDraws; ++attempt) {
        for (auto& bit : m.visible_observed) bit = rng.bernoulli(0.5) ? 1 : 0;
        m.label_observed = shape.has_label() && rng.bernoulli(0.5);
        if (m.num_observed(shape) > 0 && m.num_targets(shape) > 0) return m;
    }
    throw Error("no valid mask");
}

double mp_loss(const Params& params, const Example& data, const Mask& mask, std::size_t n_iters) {
    const auto run = mf_run(params, data, mask, MfOptions{.n_iters = n_iters});
    return prediction_loss(params.shape, run.state, data, mask).loss;
}

double sparsity_penalty(std::span<const double> means, double target, double slack) {
    double total = 0.0;
    for (double m : means) total += std::max(std::abs(m - target) - slack, 0.0);
    return total;
}

MpGradResult mp_grad(const Params& params, std::span<const Example> minibatch, std::span<const Mask> masks,
                     std::size_t n_iters, const SparsityConfig& sparsity) {
    check_batch(minibatch, masks);
    Forward f = forward_batch(params, minibatch, masks, n_iters);
    const double penalty = apply_sparsity(params.shape, sparsity, f);

    MpGradResult out{Gradient::zeros(params.shape), mean_loss(f) + penalty};
    // Per-example gradients are computed in parallel chunks and summed in
    // example order, so the result does not depend on the worker count.
    const std::size_t chunk = std::max<std::size_t>(1, thread_count());
    std::vector<Gradient> slots(std::min(chunk, minibatch.size()), Gradient::zeros(params.shape));
    for (std::size_t start = 0; start < minibatch.size(); start += chunk) {
        const std::size_t n = std::min(chunk, minibatch.size() - start);
        parallel_for(n, [&](std::size_t i) {
            Gradient& g = slots[i];
            g.scale(0.0);
            backpropagate(params, f.runs[start + i].trace, f.losses[start + i].adjoints, g);
        });
        for (std::size_t i = 0; i < n; ++i) out.gradient.add_scaled(slots[i], 1.0);
    }
    out.gradient.scale(1.0 / static_cast<double>(minibatch.size()));

    if (!std::isfinite(out.loss)) throw NumericError("non-finite MP loss");
    if (auto bad = out.gradient.first_non_finite(params.shape); !bad.empty())
        throw NumericError("non-finite gradient in " + bad);
    return out;
}

double mp_batch_objective(const Params& params, std::span<const Example> minibatch, std::span<const Mask> masks,
                          std::size_t n_iters, const SparsityConfig& sparsity) {
    check_batch(minibatch, masks);
    Forward f = forward_batch(params, minibatch, masks, n_iters);
    const double penalty = apply_sparsity(params.shape, sparsity, f);
    return mean_loss(f) + penalty;
}

void max_norm_project(Params& params, std::span<const double> caps) {
    const auto resolved = resolve_caps(params.shape, caps);
    for (std::size_t e = 0; e < params.weights.size(); ++e) {
        Matrix& w = params.weights[e];
        const double cap = resolved[e];
        if (!std::isfinite(cap)) continue;
        for (std::size_t c = 0; c < w.cols(); ++c) {
            double sq = 0.0;
            for (std::size_t r = 0; r < w.rows(); ++r) sq += w(r, c) * w(r, c);
            const double norm = std::sqrt(sq);
            if (norm <= cap) continue;
            const double s = cap / norm;
            for (std::size_t r = 0; r < w.rows(); ++r) w(r, c) *= s;
        }
    }
}

void sgd_step(Params& params, const Gradient& grad, Gradient& velocity, double lr, double momentum,
              std::span<const double> caps) {
    velocity.scale(momentum);
    velocity.add_scaled(grad, -lr);
    params.add_scaled(velocity, 1.0);
    max_norm_project(params, caps);
}

Estimate mp_objective_estimate(const Params& params, std::span<const Example> dataset, std::size_t n_masks,
                               std::size_t n_iters, Rng& rng) {
    if (dataset.empty()) throw Error("mp_objective_estimate: empty dataset");
    if (n_masks == 0) throw Error("mp_objective_estimate: n_masks must be >= 1");
    std::vector<std::size_t> idx(n_masks);
    std::vector<Mask> masks(n_masks);
    for (std::size_t i = 0; i < n_masks; ++i) {
        idx[i] = rng.uniform_index(dataset.size());
        masks[i] = sample_mask(params.shape, rng);
    }
    Vector losses(n_masks);
    parallel_for(n_masks, [&](std::size_t i) { losses[i] = mp_loss(params, dataset[idx[i]], masks[i], n_iters); });
    double mean = 0.0;
    for (double l : losses) mean += l;
    mean /= static_cast<double>(n_masks);
    double var = 0.0;
    for (double l : losses) var += (l - mean) * (l - mean);
    const double se = n_masks > 1 ? std::sqrt(var / static_cast<double>(n_masks - 1) / static_cast<double>(n_masks)) : 0.0;
    return {mean, se};
}

double enumerated_mp_objective(const Params& params, std::span<const Example> dataset, std::size_t n_iters) {
    const auto& shape = params.shape;
    if (dataset.empty()) throw Error("enumerated_mp_objective: empty dataset");
    const std::size_t bits = shape.visible + (shape.has_label() ? 1 : 0);
    if (bits > 20) throw EnumerationBoundError("too many maskable variables");
    std::vector<Mask> masks;
    for (std::size_t code = 0; code < (std::size_t{1} << bits); ++code) {
        Mask m = Mask::none_observed(shape);
        for (std::size_t j = 0; j < shape.visible; ++j) m.visible_observed[j] = (code >> j) & 1u;
        if (shape.has_label()) m.label_observed = (code >> shape.visible) & 1u;
        if (m.num_observed(shape) > 0 && m.num_targets(shape) > 0) masks.push_back(std::move(m));
    }
    if (masks.empty()) throw Error("no valid mask");
    double total = 0.0;
    for (const auto& ex : dataset)
        for (const auto& m : masks) total += mp_loss(params, ex, m, n_iters);
    return total / static_cast<double>(dataset.size() * masks.size());
}

MpTrainer::MpTrainer(Params params, MpConfig config)
    : params_(std::move(params)), config_(std::move(config)), velocity_(Gradient::zeros(params_.shape)),
      rng_(config_.seed) {
    config_.validate(params_.shape);
    caps_ = resolve_caps(params_.shape, config_.column_norm_cap);
}

double MpTrainer::step(std::span<const Example> minibatch, std::size_t epoch) {
    std::vector<Mask> masks;
    masks.reserve(minibatch.size());
    for (std::size_t i = 0; i < minibatch.size(); ++i) masks.push_back(sample_mask(params_.shape, rng_));
    const auto result = mp_grad(params_, minibatch, masks, config_.n_mf_iters, config_.sparsity);
    sgd_step(params_, result.gradient, velocity_, config_.schedule.lr_at(epoch), config_.schedule.momentum_at(epoch),
             caps_);
    return result.loss;
}

double MpTrainer::run_epoch(std::span<const Example> dataset) {
    if (dataset.empty()) throw Error("training set is empty");
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_.uniform_index(i)]);

    double total = 0.0;
    std::size_t batches = 0;
    std::vector<Example> batch;
    for (std::size_t start = 0; start < order.size(); start += config_.minibatch_size) {
        const std::size_t end = std::min(order.size(), start + config_.minibatch_size);
        batch.clear();
        for (std::size_t i = start; i < end; ++i) batch.push_back(dataset[order[i]]);
        total += step(batch, epoch_);
        ++batches;
    }
    ++epoch_;
    return total / static_cast<double>(batches);
}

void MpTrainer::restore(Params params, Gradient velocity, Rng::State rng_state, std::size_t epoch) {
    if (!(params.shape == params_.shape)) throw DimensionError("restore: model shape differs");
    params_ = std::move(params);
    velocity_ = std::move(velocity);
    rng_.set_state(rng_state);
    epoch_ = epoch;
}

}  // namespace mpdbm
