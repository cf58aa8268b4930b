#include "mpdbm/inference.hpp"

#include <algorithm>
#include <cmath>

#include "mpdbm/error.hpp"

namespace mpdbm {

namespace {

using Kind = TraceNode::Kind;

bool is_softmax_layer(const ModelShape& shape, std::size_t layer) { return shape.is_label_layer(layer); }

void activate(const ModelShape& shape, std::size_t layer, const Vector& pre, Vector& out) {
    if (is_softmax_layer(shape, layer)) {
        out = softmax(pre);
    } else {
        out.resize(pre.size());
        for (std::size_t i = 0; i < pre.size(); ++i) out[i] = sigmoid(pre[i]);
    }
}

// Observed visible coordinates are constants, never activations.
void clamp_visible(const Example& data, const Mask& mask, Vector& v) {
    for (std::size_t j = 0; j < v.size(); ++j)
        if (mask.observed(j)) v[j] = data.v[j];
}

/// Builds the unrolled graph node by node while computing it.
class Unroller {
public:
    Unroller(const Params& params, const Example& data, const Mask& mask, Trace& trace)
        : p_(params), shape_(params.shape), data_(data), mask_(mask), trace_(trace) {
        current_.assign(shape_.num_layers(), -1);
    }

    void init() {
        for (std::size_t l = 0; l < shape_.num_layers(); ++l) {
            TraceNode node{.kind = Kind::init, .layer = l};
            if (shape_.is_label_layer(l) && mask_.label_observed) {
                node.kind = Kind::clamped;
                node.value = one_hot(*data_.label, shape_.classes);
            } else {
                node.pre = p_.biases[l];
                activate(shape_, l, node.pre, node.value);
                if (l == 0) clamp_visible(data_, mask_, node.value);
            }
            current_[l] = push(std::move(node));
        }
    }

    // Seeds the graph with an existing state as constants.
    void seed(const MeanFieldState& state) {
        if (state.layers.size() != shape_.num_layers()) throw DimensionError("mean-field state has wrong layer count");
        for (std::size_t l = 0; l < shape_.num_layers(); ++l) {
            if (state.layers[l].size() != shape_.layer_size(l))
                throw DimensionError("mean-field state layer " + layer_name(shape_, l) + " has wrong size");
            current_[l] = push(TraceNode{.kind = Kind::clamped, .layer = l, .value = state.layers[l]});
        }
    }

    void sweep(InferenceMode mode, const ReconstructionHook& hook) {
        visible_input_ = current_[0];
        if (mode == InferenceMode::multi_inference) {
            TraceNode recon{.kind = Kind::reconstruction, .layer = 0, .above = current_[1]};
            compute(recon);
            if (hook) hook(recon.value, data_);
            const int recon_id = push(std::move(recon));
            TraceNode mix{.kind = Kind::mix, .layer = 0, .recon = recon_id, .current = current_[0]};
            compute(mix);
            visible_input_ = push(std::move(mix));
            last_r_ = trace_.nodes[recon_id].value;
        }
        for (std::size_t parity : {1u, 0u}) {
            std::vector<std::pair<std::size_t, int>> updated;
            for (std::size_t l = parity; l < shape_.num_layers(); l += 2) {
                if (shape_.is_label_layer(l) && mask_.label_observed) continue;
                TraceNode node{.kind = Kind::update, .layer = l};
                if (l > 0) node.below = input_for(l - 1);
                if (l + 1 < shape_.num_layers()) node.above = input_for(l + 1);
                compute(node);
                updated.emplace_back(l, push(std::move(node)));
            }
            for (auto [l, id] : updated) current_[l] = id;
        }
        ++trace_.sweeps;
    }

    MeanFieldState state() const {
        MeanFieldState s;
        for (int id : current_) s.layers.push_back(trace_.nodes[id].value);
        s.r = last_r_;
        return s;
    }

    void finish() { trace_.final_nodes = current_; }

    // Recomputes a node from its wiring (used both forward and for replay).
    void compute(TraceNode& node) const {
        switch (node.kind) {
            case Kind::clamped:
                return;
            case Kind::init:
                node.pre = p_.biases[node.layer];
                activate(shape_, node.layer, node.pre, node.value);
                if (node.layer == 0) clamp_visible(data_, mask_, node.value);
                return;
            case Kind::update:
            case Kind::reconstruction: {
                const std::size_t l = node.layer;
                node.pre = p_.biases[l];
                if (node.below >= 0) {
                    const Vector x = p_.centered_values(l - 1, trace_.nodes[node.below].value);
                    const Vector in = transpose_apply(p_.weights[l - 1], x);
                    for (std::size_t i = 0; i < in.size(); ++i) node.pre[i] += in[i];
                }
                if (node.above >= 0) {
                    const Vector x = p_.centered_values(l + 1, trace_.nodes[node.above].value);
                    const Vector in = matvec(p_.weights[l], x);
                    for (std::size_t i = 0; i < in.size(); ++i) node.pre[i] += in[i];
                }
                activate(shape_, l, node.pre, node.value);
                if (l == 0 && node.kind == Kind::update) clamp_visible(data_, mask_, node.value);
                return;
            }
            case Kind::mix: {
                const Vector& r = trace_.nodes[node.recon].value;
                const Vector& cur = trace_.nodes[node.current].value;
                node.value.resize(cur.size());
                for (std::size_t j = 0; j < cur.size(); ++j)
                    node.value[j] = mask_.observed(j) ? 0.5 * (data_.v[j] + r[j]) : cur[j];
                return;
            }
        }
    }

private:
    int input_for(std::size_t layer) const { return layer == 0 ? visible_input_ : current_[layer]; }

    int push(TraceNode node) {
        trace_.nodes.push_back(std::move(node));
        return static_cast<int>(trace_.nodes.size() - 1);
    }

    const Params& p_;
    const ModelShape& shape_;
    const Example& data_;
    const Mask& mask_;
    Trace& trace_;
    std::vector<int> current_;
    int visible_input_ = -1;
    Vector last_r_;
};

double max_change(const MeanFieldState& a, const MeanFieldState& b) {
    double m = 0.0;
    for (std::size_t l = 0; l < a.layers.size(); ++l)
        for (std::size_t j = 0; j < a.layers[l].size(); ++j)
            m = std::max(m, std::abs(a.layers[l][j] - b.layers[l][j]));
    return m;
}

}  // namespace

MeanFieldState mf_init(const Params& params, const Example& data, const Mask& mask) {
    check_query(params.shape, data, mask);
    Trace trace{.data = data, .mask = mask};
    Unroller u(params, data, mask, trace);
    u.init();
    return u.state();
}

MeanFieldState mf_sweep(const Params& params, const MeanFieldState& state, const Example& data, const Mask& mask) {
    check_query(params.shape, data, mask);
    Trace trace{.data = data, .mask = mask};
    Unroller u(params, data, mask, trace);
    u.seed(state);
    u.sweep(InferenceMode::standard, {});
    return u.state();
}

MfResult mf_run(const Params& params, const Example& data, const Mask& mask, const MfOptions& options) {
    if (options.n_iters == 0) throw Error("mf_run: n_iters must be >= 1");
    check_query(params.shape, data, mask);
    if (options.mode == InferenceMode::multi_inference && data.v.size() != params.shape.visible)
        throw DimensionError("multi-inference needs the full visible vector");
    MfResult result;
    result.trace.data = data;
    result.trace.mask = mask;
    result.trace.mode = options.mode;
    Unroller u(params, result.trace.data, result.trace.mask, result.trace);
    u.init();
    MeanFieldState previous = u.state();
    for (std::size_t it = 0; it < options.n_iters; ++it) {
        u.sweep(options.mode, options.reconstruction_hook);
        if (options.tolerance > 0.0) {
            MeanFieldState now = u.state();
            const bool settled = max_change(previous, now) < options.tolerance;
            previous = std::move(now);
            if (settled) break;
        }
    }
    u.finish();
    result.state = u.state();
    return result;
}

MeanFieldState replay(const Params& params, const Trace& trace) {
    Trace copy = trace;
    Unroller u(params, copy.data, copy.mask, copy);
    for (auto& node : copy.nodes) u.compute(node);
    MeanFieldState s;
    for (int id : copy.final_nodes) s.layers.push_back(copy.nodes[id].value);
    for (auto it = copy.nodes.rbegin(); it != copy.nodes.rend(); ++it)
        if (it->kind == Kind::reconstruction) {
            s.r = it->value;
            break;
        }
    return s;
}

void backpropagate(const Params& params, const Trace& trace, const std::vector<Vector>& final_adjoints,
                   Gradient& grad) {
    const auto& shape = params.shape;
    if (final_adjoints.size() != trace.final_nodes.size())
        throw DimensionError("backpropagate: expected one adjoint per layer");
    std::vector<Vector> adj(trace.nodes.size());
    auto add_to = [&](int id, const Vector& d, double scale = 1.0) {
        Vector& a = adj[id];
        if (a.empty()) a.assign(d.size(), 0.0);
        for (std::size_t i = 0; i < d.size(); ++i) a[i] += scale * d[i];
    };
    for (std::size_t l = 0; l < final_adjoints.size(); ++l)
        if (!final_adjoints[l].empty()) add_to(trace.final_nodes[l], final_adjoints[l]);

    for (std::size_t n = trace.nodes.size(); n-- > 0;) {
        const TraceNode& node = trace.nodes[n];
        const Vector& a = adj[n];
        if (a.empty() || node.kind == Kind::clamped) continue;
        const std::size_t l = node.layer;

        if (node.kind == Kind::mix) {
            Vector to_recon(a.size(), 0.0), to_current(a.size(), 0.0);
            for (std::size_t j = 0; j < a.size(); ++j) {
                if (trace.mask.observed(j))
                    to_recon[j] = 0.5 * a[j];
                else
                    to_current[j] = a[j];
            }
            add_to(node.recon, to_recon);
            add_to(node.current, to_current);
            continue;
        }

        Vector d_pre(a.size());
        if (is_softmax_layer(shape, l)) {
            const double inner = dot(node.value, a);
            for (std::size_t i = 0; i < a.size(); ++i) d_pre[i] = node.value[i] * (a[i] - inner);
        } else {
            for (std::size_t i = 0; i < a.size(); ++i) d_pre[i] = a[i] * node.value[i] * (1.0 - node.value[i]);
        }
        if (l == 0 && node.kind != Kind::reconstruction)
            for (std::size_t j = 0; j < d_pre.size(); ++j)
                if (trace.mask.observed(j)) d_pre[j] = 0.0;

        for (std::size_t i = 0; i < d_pre.size(); ++i) grad.biases[l][i] += d_pre[i];
        if (node.below >= 0) {
            const Vector x = params.centered_values(l - 1, trace.nodes[node.below].value);
            add_outer(grad.weights[l - 1], x, d_pre);
            add_to(node.below, matvec(params.weights[l - 1], d_pre));
        }
        if (node.above >= 0) {
            const Vector x = params.centered_values(l + 1, trace.nodes[node.above].value);
            add_outer(grad.weights[l], d_pre, x);
            add_to(node.above, transpose_apply(params.weights[l], d_pre));
        }
    }
}

double mf_kl_to_exact(const Params& params, const Example& data, const Mask& mask, const MeanFieldState& state,
                      oracle::EnumBound bound) {
    const auto& shape = params.shape;
    const auto cond = oracle::exact_conditional(params, data, mask, bound);

    // Q is factorial and E is linear in every layer with no intra-layer terms,
    // so E_Q[E] is the energy evaluated at the means.
    FullState means{state.layers};
    double neg_entropy = 0.0;
    auto xlogx = [](double q) { return q > 0.0 ? q * std::log(q) : 0.0; };
    for (std::size_t l = 0; l < shape.num_layers(); ++l) {
        const Vector& q = state.layers[l];
        if (shape.is_label_layer(l)) {
            if (mask.label_observed) continue;
            for (double p : q) neg_entropy += xlogx(p);
            continue;
        }
        for (std::size_t j = 0; j < q.size(); ++j) {
            if (l == 0 && mask.observed(j)) continue;
            neg_entropy += xlogx(q[j]) + xlogx(1.0 - q[j]);
        }
    }
    return neg_entropy + energy(params, means) + cond.log_normalizer;
}

}  // namespace mpdbm
