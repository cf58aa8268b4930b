#include <doctest.h>

#include <cmath>

#include "mpdbm/error.hpp"
#include "mpdbm/evaluation.hpp"
#include "mpdbm/verification.hpp"

using namespace mpdbm;

TEST_CASE("untrained model is at chance on a balanced set") {
    const auto data = synth_patterns(10, 12, 0.1, 200, 1).data;
    const Params p = Params::zeros(ModelShape{12, {6}, 10});
    // Uniform posteriors resolve to class 0, which is right for a tenth of the examples.
    CHECK(classification_error(p, data, {}) == doctest::Approx(0.9));
    CHECK(predict_label(p, data.examples[3], Mask::all_observed(p.shape), {}) == 0);
}

TEST_CASE("missing fraction zero equals plain classification") {
    const ModelShape shape{8, {6}, 3};
    Rng rng(2);
    const Params p = verify::random_params(shape, rng, 1.0);
    const auto data = synth_patterns(3, 8, 0.1, 60, 2).data;
    for (auto mode : {InferenceMode::standard, InferenceMode::multi_inference}) {
        const InferenceSpec spec{mode, 5};
        const std::vector<double> fractions{0.0, 0.5};
        const auto errs = missing_input_errors(p, data, fractions, spec, 9);
        CHECK(errs[0] == classification_error(p, data, spec));
    }
}

TEST_CASE("shape mismatch is rejected") {
    const Params p = Params::zeros(ModelShape{8, {6}, 3});
    const auto data = synth_patterns(3, 9, 0.1, 10, 2).data;
    CHECK_THROWS_AS(classification_error(p, data, {}), DimensionError);
}

TEST_CASE("general-query cross-entropy of the zero model is log 2 per variable") {
    const ModelShape shape{6, {4}, 2};
    const auto data = synth_patterns(2, 6, 0.1, 30, 3).data;
    const std::vector<std::size_t> sizes{1, 3, 7};
    for (double x : general_query_xent(Params::zeros(shape), data, sizes, {}, 5))
        CHECK(x == doctest::Approx(std::log(2.0)));
    CHECK_THROWS_AS(general_query_xent(Params::zeros(shape), data, std::vector<std::size_t>{8}, {}, 5), Error);
}

TEST_CASE("inpaint records one prediction per iteration") {
    const ModelShape shape{6, {4}, 2};
    Rng rng(4);
    const Params p = verify::random_params(shape, rng, 1.0);
    const auto data = synth_patterns(2, 6, 0.1, 30, 3).data;
    const auto recs = inpaint(p, data, 3, InferenceSpec{InferenceMode::standard, 4}, 1);
    REQUIRE(recs.size() == 3);
    for (const auto& r : recs) {
        CHECK(r.v_hat.size() == 4);
        CHECK(r.y_hat.size() == 4);
        for (std::size_t j = 0; j < 6; ++j)
            if (r.mask.observed(j)) CHECK(r.v_hat.back()[j] == data.examples[r.example].v[j]);
    }
    const auto last = mf_run(p, data.examples[1], recs[1].mask, MfOptions{.n_iters = 4}).state;
    CHECK(recs[1].v_hat.back() == last.v_hat());
}

TEST_CASE("spearman rank correlation") {
    CHECK(spearman_rho(Vector{1, 2, 3, 4}, Vector{10, 20, 30, 40}) == doctest::Approx(1.0));
    CHECK(spearman_rho(Vector{1, 2, 3, 4}, Vector{4, 3, 2, 1}) == doctest::Approx(-1.0));
    // Ties take the average rank: ranks (1, 2.5, 2.5, 4).
    CHECK(spearman_rho(Vector{1, 2, 3, 4}, Vector{1, 5, 5, 9}) == doctest::Approx(0.9486832980505138));
    CHECK(spearman_rho(Vector{1, 2, 3}, Vector{1, 8, 2}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(spearman_rho(Vector{1}, Vector{1}), Error);
}
