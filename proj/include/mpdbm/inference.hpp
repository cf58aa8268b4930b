#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "mpdbm/mask.hpp"
#include "mpdbm/model.hpp"
#include "mpdbm/oracle.hpp"

namespace mpdbm {

/// Factorial variational parameters, one mean vector per chain layer.
/// Observed visible coordinates (and an observed label) hold the data.
struct MeanFieldState {
    std::vector<Vector> layers;
    Vector r;  // multi-inference reconstruction of v; empty in standard mode

    const Vector& v_hat() const { return layers.front(); }
    const Vector& h_hat(std::size_t i) const { return layers.at(i + 1); }  // h_hat(0) is h^(1)
    const Vector& y_hat() const { return layers.back(); }

    friend bool operator==(const MeanFieldState&, const MeanFieldState&) = default;
};

enum class InferenceMode { standard, multi_inference };

/// One recorded vector in the unrolled inference graph.
struct TraceNode {
    enum class Kind {
        clamped,         // fixed data (observed label)
        init,            // act(bias); visible coordinates that are observed hold the data
        update,          // act(bias + couplings to neighbor nodes)
        reconstruction,  // visible update ignoring the mask (multi-inference r)
        mix,             // observed v -> 0.5 (data + r), unobserved v -> current v
    };
    Kind kind;
    std::size_t layer;
    int below = -1;  // update/reconstruction: node feeding from layer-1
    int above = -1;  // update/reconstruction: node feeding from layer+1
    int recon = -1;  // mix: reconstruction node
    int current = -1;  // mix: current visible node
    Vector pre;      // pre-activation (init/update/reconstruction)
    Vector value;
};

/// Replayable record of an unrolled mean-field run.
struct Trace {
    Example data;
    Mask mask;
    InferenceMode mode = InferenceMode::standard;
    std::size_t sweeps = 0;
    std::vector<TraceNode> nodes;
    std::vector<int> final_nodes;  // node holding each layer's final means
};

// Test seam: called with the freshly computed r before it is used.
using ReconstructionHook = std::function<void(Vector& r, const Example& data)>;

struct MfOptions {
    std::size_t n_iters = 10;
    InferenceMode mode = InferenceMode::standard;
    // Evaluation only: stop early once no mean moves by more than this (0 = off).
    double tolerance = 0.0;
    ReconstructionHook reconstruction_hook;
};

struct MfResult {
    MeanFieldState state;
    Trace trace;
};

MeanFieldState mf_init(const Params& params, const Example& data, const Mask& mask);

// One standard sweep: the odd-parity layers (h1, h3, ...) first, then the even
// ones (unobserved v, h2, ...). The label sits opposite the top hidden layer.
MeanFieldState mf_sweep(const Params& params, const MeanFieldState& state, const Example& data, const Mask& mask);

MfResult mf_run(const Params& params, const Example& data, const Mask& mask, const MfOptions& options);

// Recomputes every node of the trace from its recorded wiring.
MeanFieldState replay(const Params& params, const Trace& trace);

// Reverse-mode pass through the trace. `final_adjoints` holds dLoss/dmean for
// each layer's final node (empty vectors are treated as zero). Accumulates
// into `grad`.
void backpropagate(const Params& params, const Trace& trace, const std::vector<Vector>& final_adjoints,
                   Gradient& grad);

// KL(Q || P(unobserved, hidden | observed)) by enumeration.
double mf_kl_to_exact(const Params& params, const Example& data, const Mask& mask, const MeanFieldState& state,
                      oracle::EnumBound bound = {});

}  // namespace mpdbm
