#include <doctest.h>

#include <cmath>

#include "mpdbm/error.hpp"
#include "mpdbm/oracle.hpp"
#include "mpdbm/verification.hpp"

using namespace mpdbm;

TEST_CASE("zero-parameter partition function counts states") {
    const ModelShape shape{3, {1}, 2};  // 2^4 binary states times 2 labels
    CHECK(oracle::exact_log_z(Params::zeros(shape)) == doctest::Approx(std::log(32.0)).epsilon(1e-14));
    const auto joint = oracle::exact_joint(Params::zeros(shape));
    CHECK(joint.probs.size() == 32);
    for (double p : joint.probs) CHECK(p == doctest::Approx(1.0 / 32.0));
}

TEST_CASE("decoupled units factorize") {
    const ModelShape shape{1, {1}, 0};
    Params p = Params::zeros(shape);
    p.b_v() = {0.7};
    p.b_h(0) = {-1.3};
    const double expected = std::log1p(std::exp(0.7)) + std::log1p(std::exp(-1.3));
    CHECK(oracle::exact_log_z(p) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("conditional of a single hidden unit is logistic") {
    const ModelShape shape{2, {1}, 0};
    Params p = Params::zeros(shape);
    p.w(0)(0, 0) = 1.5;
    p.w(0)(1, 0) = -0.4;
    p.b_h(0) = {0.2};
    const Example ex{{1.0, 1.0}, std::nullopt};
    const auto m = oracle::exact_marginals(p, ex, Mask::all_observed(shape));
    CHECK(m[0] == ex.v);
    CHECK(m[1][0] == doctest::Approx(sigmoid(1.5 - 0.4 + 0.2)).epsilon(1e-14));
}

TEST_CASE("state codes put free units low and the label high") {
    const ModelShape shape{2, {1}, 3};
    const auto space = oracle::StateSpace::joint(shape);
    CHECK(space.size() == 8 * 3);
    CHECK(space.free_bits() == 3);
    CHECK(space.label_free());
    const FullState s = space.decode(0b101 + (2 << 3));
    CHECK(s.layers[0] == Vector{1.0, 0.0});
    CHECK(s.layers[1] == Vector{1.0});
    CHECK(s.layers[2] == Vector{0.0, 0.0, 1.0});
    for (std::size_t c = 0; c < space.size(); ++c) CHECK(verify::joint_state_code(shape, space.decode(c)) == c);

    Mask mask = Mask::none_observed(shape);
    mask.visible_observed[1] = 1;
    mask.label_observed = true;
    const oracle::StateSpace cond(shape, Example{{0.0, 1.0}, 1}, mask);
    CHECK(cond.size() == 4);
    CHECK_FALSE(cond.label_free());
    const FullState c3 = cond.decode(3);
    CHECK(c3.layers[0] == Vector{1.0, 1.0});
    CHECK(c3.layers[2] == Vector{0.0, 1.0, 0.0});
}

TEST_CASE("enumeration bound") {
    const ModelShape big{10, {8, 8}, 3};
    CHECK_THROWS_AS(oracle::StateSpace::joint(big), EnumerationBoundError);
    try {
        oracle::exact_log_z(Params::zeros(big));
        FAIL("no throw");
    } catch (const EnumerationBoundError& e) {
        CHECK(std::string(e.what()).find("enumeration bound exceeded") != std::string::npos);
    }
    // Observed visibles shrink the free set.
    Mask mask = Mask::all_observed(big);
    mask.label_observed = false;
    Example ex{Vector(10, 0.0), std::nullopt};
    CHECK(oracle::StateSpace(big, ex, mask).size() == (std::size_t{1} << 16) * 3);
    CHECK_THROWS_AS(oracle::StateSpace(big, ex, mask, oracle::EnumBound{17}), EnumerationBoundError);
}

TEST_CASE("conditional probabilities agree with the joint") {
    const ModelShape shape{3, {2}, 2};
    Rng rng(9);
    const Params p = verify::random_params(shape, rng, 1.0);
    const auto joint = oracle::exact_joint(p);
    const Example ex{{1.0, 0.0, 1.0}, 1};
    const auto cond = oracle::exact_conditional(p, ex, Mask::all_observed(shape));
    // Sum the joint over the states consistent with the observation.
    double mass = 0.0;
    for (std::size_t c = 0; c < joint.space.size(); ++c) {
        const FullState s = joint.space.decode(c);
        if (s.layers[0] == ex.v && s.layers[2][1] == 1.0) mass += joint.probs[c];
    }
    CHECK(std::log(mass) == doctest::Approx(cond.log_normalizer - joint.log_normalizer).epsilon(1e-12));
    CHECK(oracle::exact_log_likelihood(p, std::span(&ex, 1)) == doctest::Approx(std::log(mass)).epsilon(1e-12));
}

TEST_CASE("exact log-likelihood gradient matches finite differences") {
    Rng rng(21);
    for (bool centered : {false, true}) {
        const ModelShape shape{3, {2, 2}, 2};
        const Params p = verify::random_params(shape, rng, 1.0, centered);
        auto data = verify::random_examples(shape, 4, rng);
        data[2].label.reset();
        const Vector weights{1.0, 0.5, 2.0, 1.0};
        const Gradient g = oracle::exact_ll_grad(p, data, weights);
        const Gradient fd = oracle::finite_difference_gradient(
            p, [&](const Params& q) { return oracle::exact_log_likelihood(q, data, weights); });
        for (std::size_t e = 0; e < g.weights.size(); ++e)
            for (std::size_t i = 0; i < g.weights[e].size(); ++i)
                CHECK(verify::relative_error(g.weights[e].data()[i], fd.weights[e].data()[i]) < 1e-6);
        for (std::size_t l = 0; l < g.biases.size(); ++l)
            for (std::size_t i = 0; i < g.biases[l].size(); ++i)
                CHECK(verify::relative_error(g.biases[l][i], fd.biases[l][i]) < 1e-6);
    }
}

TEST_CASE("sufficient statistics are the negative energy derivative") {
    const ModelShape shape{2, {2}, 2};
    Rng rng(4);
    const Params p = verify::random_params(shape, rng, 1.0, true);
    const FullState s = oracle::StateSpace::joint(shape).decode(13);
    Gradient g = Gradient::zeros(shape);
    oracle::accumulate_statistics(p, s, 1.0, g);
    const Gradient fd = oracle::finite_difference_gradient(p, [&](const Params& q) { return -energy(q, s); });
    for (std::size_t e = 0; e < g.weights.size(); ++e)
        for (std::size_t i = 0; i < g.weights[e].size(); ++i)
            CHECK(g.weights[e].data()[i] == doctest::Approx(fd.weights[e].data()[i]).epsilon(1e-8));
    for (std::size_t l = 0; l < g.biases.size(); ++l)
        for (std::size_t i = 0; i < g.biases[l].size(); ++i)
            CHECK(g.biases[l][i] == doctest::Approx(fd.biases[l][i]).epsilon(1e-8));
}
