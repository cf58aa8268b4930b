#include <doctest.h>

#include <cmath>

#include "mpdbm/error.hpp"
#include "mpdbm/inference.hpp"
#include "mpdbm/oracle.hpp"
#include "mpdbm/verification.hpp"

using namespace mpdbm;

namespace {

Mask mask_from(std::initializer_list<int> bits, bool label) {
    Mask m;
    for (int b : bits) m.visible_observed.push_back(static_cast<std::uint8_t>(b));
    m.label_observed = label;
    return m;
}

}  // namespace

TEST_CASE("mf_init uses biases and clamps observations") {
    const ModelShape shape{3, {2}, 2};
    Params p = Params::zeros(shape);
    p.b_v() = {1.0, 2.0, 3.0};
    p.b_h(0) = {-1.0, 0.0};
    p.b_y() = {0.0, std::log(3.0)};
    const Example ex{{1.0, 0.0, 1.0}, 0};
    const auto s = mf_init(p, ex, mask_from({1, 0, 0}, false));
    CHECK(s.v_hat()[0] == 1.0);
    CHECK(s.v_hat()[1] == doctest::Approx(sigmoid(2.0)));
    CHECK(s.h_hat(0)[0] == doctest::Approx(sigmoid(-1.0)));
    CHECK(s.y_hat()[1] == doctest::Approx(0.75));

    const auto clamped = mf_init(p, ex, mask_from({1, 1, 1}, true));
    CHECK(clamped.y_hat() == Vector{1.0, 0.0});
    CHECK(clamped.v_hat() == ex.v);
}

TEST_CASE("a single-hidden-layer model with observed visibles is exact after one sweep") {
    const ModelShape shape{4, {3}, 0};
    Rng rng(2);
    const Params p = verify::random_params(shape, rng, 1.5);
    const Example ex{{1.0, 0.0, 1.0, 1.0}, std::nullopt};
    const Mask mask = Mask::all_observed(shape);
    const auto run = mf_run(p, ex, mask, MfOptions{.n_iters = 1});
    const auto exact = oracle::exact_marginals(p, ex, mask);
    for (std::size_t j = 0; j < 3; ++j) CHECK(run.state.h_hat(0)[j] == doctest::Approx(exact[1][j]).epsilon(1e-13));
}

TEST_CASE("sweep order: odd layers see the previous even layers") {
    // v - h1 - h2; after one sweep h1 uses the initial h2 and h2 the new h1.
    const ModelShape shape{1, {1, 1}, 0};
    Params p = Params::zeros(shape);
    p.w(0)(0, 0) = 1.0;
    p.w(1)(0, 0) = 2.0;
    p.b_h(1) = {-1.0};
    const Example ex{{1.0}, std::nullopt};
    const auto s = mf_sweep(p, mf_init(p, ex, Mask::all_observed(shape)), ex, Mask::all_observed(shape));
    const double h2_0 = sigmoid(-1.0);
    const double h1 = sigmoid(1.0 + 2.0 * h2_0);
    CHECK(s.h_hat(0)[0] == doctest::Approx(h1).epsilon(1e-15));
    CHECK(s.h_hat(1)[0] == doctest::Approx(sigmoid(2.0 * h1 - 1.0)).epsilon(1e-15));
}

TEST_CASE("mf_run matches repeated mf_sweep and replays exactly") {
    const ModelShape shape{4, {3, 2}, 3};
    Rng rng(8);
    for (bool centered : {false, true}) {
        const Params p = verify::random_params(shape, rng, 1.0, centered);
        const Example ex = verify::random_examples(shape, 1, rng).front();
        const Mask mask = mask_from({1, 0, 1, 0}, false);
        const auto run = mf_run(p, ex, mask, MfOptions{.n_iters = 4});
        MeanFieldState s = mf_init(p, ex, mask);
        for (int i = 0; i < 4; ++i) s = mf_sweep(p, s, ex, mask);
        CHECK(s.layers == run.state.layers);
        CHECK(replay(p, run.trace).layers == run.state.layers);
        CHECK(run.trace.sweeps == 4);
    }
    CHECK_THROWS_AS(mf_run(Params::zeros(shape), Example{Vector(4, 0.0), 0}, Mask::all_observed(shape),
                           MfOptions{.n_iters = 0}),
                    Error);
}

TEST_CASE("query validation") {
    const ModelShape shape{3, {2}, 2};
    const Params p = Params::zeros(shape);
    CHECK_THROWS_AS(mf_init(p, Example{{1.0, 0.0}, 0}, Mask::all_observed(shape)), DimensionError);
    CHECK_THROWS_AS(mf_init(p, Example{{1.0, 0.0, 1.0}, std::nullopt}, Mask::all_observed(shape)), DimensionError);
    CHECK_THROWS_AS(mf_init(p, Example{{1.0, 0.0, 1.0}, 0}, mask_from({1, 1}, true)), DimensionError);
}

TEST_CASE("tolerance stops early without changing the fixed point") {
    const ModelShape shape{4, {3, 3}, 2};
    Rng rng(3);
    const Params p = verify::random_params(shape, rng, 0.5);
    const Example ex = verify::random_examples(shape, 1, rng).front();
    const Mask mask = Mask::all_observed(shape);
    const auto early = mf_run(p, ex, {mask.visible_observed, false}, MfOptions{.n_iters = 200, .tolerance = 1e-12});
    const auto full = mf_run(p, ex, {mask.visible_observed, false}, MfOptions{.n_iters = 200});
    CHECK(early.trace.sweeps < 200);
    for (std::size_t l = 0; l < full.state.layers.size(); ++l)
        for (std::size_t j = 0; j < full.state.layers[l].size(); ++j)
            CHECK(early.state.layers[l][j] == doctest::Approx(full.state.layers[l][j]).epsilon(1e-10));
}

TEST_CASE("KL to the exact posterior never increases") {
    const ModelShape shape{3, {3, 2}, 2};
    Rng rng(12);
    for (int m = 0; m < 5; ++m) {
        const Params p = verify::random_params(shape, rng, 2.0, m % 2 == 1);
        const Example ex = verify::random_examples(shape, 1, rng).front();
        const auto traj = verify::kl_trajectory(p, ex, mask_from({1, 0, 1}, m % 3 == 0), 20);
        CHECK(traj.max_increase <= 1e-10);
        CHECK(traj.kl.back() >= 0.0);
    }
}

TEST_CASE("multi-inference feeds half data plus reconstruction") {
    const ModelShape shape{3, {2}, 2};
    Rng rng(6);
    const Params p = verify::random_params(shape, rng, 1.0);
    const Example ex{{1.0, 0.0, 1.0}, 1};
    const Mask mask = mask_from({1, 1, 0}, false);

    // Replacing r with the data itself makes the mix equal the data, so the
    // result must coincide with standard mean field.
    MfOptions opts{.n_iters = 5, .mode = InferenceMode::multi_inference};
    opts.reconstruction_hook = [](Vector& r, const Example& d) { r = d.v; };
    const auto hooked = mf_run(p, ex, mask, opts);
    const auto standard = mf_run(p, ex, mask, MfOptions{.n_iters = 5});
    for (std::size_t l = 1; l < standard.state.layers.size(); ++l)
        for (std::size_t j = 0; j < standard.state.layers[l].size(); ++j)
            CHECK(hooked.state.layers[l][j] == doctest::Approx(standard.state.layers[l][j]).epsilon(1e-14));

    const auto multi = mf_run(p, ex, mask, MfOptions{.n_iters = 5, .mode = InferenceMode::multi_inference});
    REQUIRE(multi.state.r.size() == 3);
    CHECK(standard.state.r.empty());
    // The observed visibles stay clamped to the data in the returned state.
    CHECK(multi.state.v_hat()[0] == 1.0);
    CHECK(multi.state.v_hat()[1] == 0.0);
    CHECK(replay(p, multi.trace).layers == multi.state.layers);
    CHECK_FALSE(multi.state.y_hat() == standard.state.y_hat());
}

TEST_CASE("backpropagate matches finite differences of a linear readout") {
    const ModelShape shape{3, {3, 2}, 2};
    Rng rng(31);
    for (auto mode : {InferenceMode::standard, InferenceMode::multi_inference}) {
        for (bool centered : {false, true}) {
            const Params p = verify::random_params(shape, rng, 1.0, centered);
            const Example ex = verify::random_examples(shape, 1, rng).front();
            const Mask mask = mask_from({0, 1, 1}, false);
            std::vector<Vector> coeff;
            for (std::size_t l = 0; l < shape.num_layers(); ++l) {
                Vector c(shape.layer_size(l));
                for (double& x : c) x = rng.uniform() - 0.5;
                coeff.push_back(c);
            }
            auto readout = [&](const Params& q) {
                const auto s = mf_run(q, ex, mask, MfOptions{.n_iters = 3, .mode = mode}).state;
                double f = 0.0;
                for (std::size_t l = 0; l < coeff.size(); ++l) f += dot(coeff[l], s.layers[l]);
                return f;
            };
            const auto run = mf_run(p, ex, mask, MfOptions{.n_iters = 3, .mode = mode});
            Gradient g = Gradient::zeros(shape);
            backpropagate(p, run.trace, coeff, g);
            const Gradient fd = oracle::finite_difference_gradient(p, readout);
            for (std::size_t e = 0; e < g.weights.size(); ++e)
                for (std::size_t i = 0; i < g.weights[e].size(); ++i)
                    CHECK(verify::relative_error(g.weights[e].data()[i], fd.weights[e].data()[i], 1e-10) < 1e-6);
            for (std::size_t l = 0; l < g.biases.size(); ++l)
                for (std::size_t i = 0; i < g.biases[l].size(); ++i)
                    CHECK(verify::relative_error(g.biases[l][i], fd.biases[l][i], 1e-10) < 1e-6);
        }
    }
}
