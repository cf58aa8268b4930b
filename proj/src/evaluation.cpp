#include "mpdbm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mpdbm/error.hpp"
#include "mpdbm/mp_training.hpp"

namespace mpdbm {

namespace {

void check_dataset(const Params& params, const Dataset& data) {
    if (data.visible != params.shape.visible)
        throw DimensionError("dataset has " + std::to_string(data.visible) + " visibles, model has " +
                             std::to_string(params.shape.visible));
    if (data.classes > params.shape.classes)
        throw DimensionError("dataset has " + std::to_string(data.classes) + " classes, model has " +
                             std::to_string(params.shape.classes));
}

MfOptions options_for(const InferenceSpec& spec) { return MfOptions{.n_iters = spec.n_iters, .mode = spec.mode}; }

}  // namespace

std::size_t predict_label(const Params& params, const Example& data, const Mask& mask, const InferenceSpec& spec) {
    if (!params.shape.has_label()) throw Error("model has no label unit");
    Mask query = mask;
    query.label_observed = false;
    const auto state = mf_run(params, data, query, options_for(spec)).state;
    const auto& y = state.y_hat();
    return static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
}

double query_error(const Params& params, std::span<const std::pair<Example, Mask>> queries, const InferenceSpec& spec) {
    if (queries.empty()) throw Error("no queries to evaluate");
    std::vector<std::uint8_t> wrong(queries.size(), 0);
    parallel_for(queries.size(), [&](std::size_t i) {
        const auto& [ex, mask] = queries[i];
        if (!ex.label) throw Error("query " + std::to_string(i) + " has no label");
        wrong[i] = predict_label(params, ex, mask, spec) != *ex.label;
    });
    const auto n_wrong = std::accumulate(wrong.begin(), wrong.end(), std::size_t{0});
    return static_cast<double>(n_wrong) / static_cast<double>(queries.size());
}

double classification_error(const Params& params, const Dataset& data, const InferenceSpec& spec) {
    check_dataset(params, data);
    std::vector<std::pair<Example, Mask>> queries;
    queries.reserve(data.size());
    for (const auto& ex : data.examples) queries.emplace_back(ex, Mask{std::vector<std::uint8_t>(data.visible, 1), false});
    return query_error(params, queries, spec);
}

std::vector<double> missing_input_errors(const Params& params, const Dataset& data, std::span<const double> fractions,
                                         const InferenceSpec& spec, std::uint64_t seed) {
    check_dataset(params, data);
    std::vector<double> out;
    for (double f : fractions) {
        const auto queries = make_missing_input_queries(data, f, seed);
        out.push_back(query_error(params, queries, spec));
    }
    return out;
}

std::vector<double> general_query_xent(const Params& params, const Dataset& data, std::span<const std::size_t> sizes,
                                       const InferenceSpec& spec, std::uint64_t seed) {
    check_dataset(params, data);
    const auto& shape = params.shape;
    const std::size_t n_vars = shape.visible + (shape.has_label() ? 1 : 0);
    std::vector<double> out;
    for (std::size_t size : sizes) {
        if (size < 1 || size > n_vars)
            throw Error("query size " + std::to_string(size) + " outside [1, " + std::to_string(n_vars) + "]");
        Rng rng(seed + size);
        std::vector<Mask> masks(data.size());
        std::vector<std::size_t> idx(n_vars);
        for (auto& m : masks) {
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            m = Mask::all_observed(shape);
            for (std::size_t i = 0; i < size; ++i) {
                std::swap(idx[i], idx[i + rng.uniform_index(n_vars - i)]);
                if (idx[i] == shape.visible)
                    m.label_observed = false;
                else
                    m.visible_observed[idx[i]] = 0;
            }
        }
        Vector per_example(data.size());
        parallel_for(data.size(), [&](std::size_t i) {
            const auto& ex = data.examples[i];
            Mask m = masks[i];
            if (m.label_observed && !ex.label) m.label_observed = false;
            const auto state = mf_run(params, ex, m, options_for(spec)).state;
            double total = 0.0;
            std::size_t count = 0;
            for (std::size_t j = 0; j < shape.visible; ++j) {
                if (m.observed(j)) continue;
                const double p = std::clamp(state.v_hat()[j], 1e-12, 1.0 - 1e-12);
                total -= ex.v[j] * std::log(p) + (1.0 - ex.v[j]) * std::log(1.0 - p);
                ++count;
            }
            if (shape.has_label() && !masks[i].label_observed && ex.label) {
                total -= std::log(std::clamp(state.y_hat()[*ex.label], 1e-12, 1.0));
                ++count;
            }
            per_example[i] = count ? total / static_cast<double>(count) : 0.0;
        });
        out.push_back(std::accumulate(per_example.begin(), per_example.end(), 0.0) /
                      static_cast<double>(per_example.size()));
    }
    return out;
}

std::vector<InpaintRecord> inpaint(const Params& params, const Dataset& data, std::size_t count,
                                   const InferenceSpec& spec, std::uint64_t seed) {
    check_dataset(params, data);
    Rng rng(seed);
    std::vector<InpaintRecord> out;
    for (std::size_t i = 0; i < std::min(count, data.size()); ++i) {
        const auto& ex = data.examples[i];
        InpaintRecord rec{i, sample_mask(params.shape, rng), {}, {}};
        if (!ex.label) rec.mask.label_observed = false;
        for (std::size_t it = 1; it <= spec.n_iters; ++it) {
            const auto state = mf_run(params, ex, rec.mask, MfOptions{.n_iters = it, .mode = spec.mode}).state;
            rec.v_hat.push_back(state.v_hat());
            if (params.shape.has_label()) rec.y_hat.push_back(state.y_hat());
        }
        out.push_back(std::move(rec));
    }
    return out;
}

namespace {

Vector average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    Vector ranks(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman_rho(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw Error("spearman_rho: need two equal-length series");
    const Vector rx = average_ranks(x), ry = average_ranks(y);
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(rx.size());
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(ry.size());
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace mpdbm
