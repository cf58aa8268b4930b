#include "mpdbm/config.hpp"

#include <fstream>
#include <set>

#include "mpdbm/error.hpp"

namespace mpdbm {

using nlohmann::json;

std::string method_name(TrainMethod m) { return m == TrainMethod::mp ? "mp" : "pcd-centered"; }

namespace {

/// Typed access to one JSON object that remembers which keys were consumed.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_, "expected an object");
    }

    bool has(const std::string& key) {
        known_.insert(key);
        return j_.contains(key);
    }

    std::string child(const std::string& key) const { return path_ + "." + key; }

    const json& raw(const std::string& key) {
        known_.insert(key);
        return j_.at(key);
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (!has(key)) return;
        out = convert<T>(j_.at(key), child(key));
    }

    Section section(const std::string& key) {
        known_.insert(key);
        static const json empty = json::object();
        return Section(j_.contains(key) ? j_.at(key) : empty, child(key));
    }

    // Accepts a number or an array of numbers.
    void read_list(const std::string& key, std::vector<double>& out) {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (v.is_number()) {
            out = {v.get<double>()};
            return;
        }
        out = convert<std::vector<double>>(v, child(key));
    }

    void finish() const {
        for (const auto& [key, _] : j_.items())
            if (!known_.count(key)) throw ConfigError(child(key), "unknown key");
    }

    template <typename T>
    static T convert(const json& v, const std::string& path) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(path, "expected a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
            if constexpr (std::is_unsigned_v<T>)
                if (!v.is_number_unsigned() && v.get<long long>() < 0)
                    throw ConfigError(path, "expected a non-negative integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(path, "expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(path, "expected a string");
        } else {
            if (!v.is_array()) throw ConfigError(path, "expected an array");
            T out;
            for (std::size_t i = 0; i < v.size(); ++i)
                out.push_back(convert<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]"));
            return out;
        }
        return v.get<T>();
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> known_;
};

void read_schedule(Section& s, Schedule& sch) {
    s.read("learning_rate", sch.learning_rate);
    s.read("lr_decay", sch.lr_decay);
    s.read("lr_min", sch.lr_min);
    s.read("momentum_initial", sch.momentum_initial);
    s.read("momentum_final", sch.momentum_final);
    s.read("momentum_saturate", sch.momentum_saturate);
    if (!(sch.learning_rate >= 0.0)) throw ConfigError(s.child("learning_rate"), "must be >= 0");
    if (!(sch.lr_decay > 0.0)) throw ConfigError(s.child("lr_decay"), "must be > 0");
    for (double m : {sch.momentum_initial, sch.momentum_final})
        if (!(m >= 0.0 && m < 1.0)) throw ConfigError(s.child("momentum_final"), "momentum must lie in [0, 1)");
}

template <typename F>
void wrap(const std::string& path, F&& f) {
    try {
        f();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(path, e.what());
    }
}

}  // namespace

RunConfig parse_run_config(const json& j) {
    RunConfig cfg;
    Section root(j, "$");
    root.read("seed", cfg.seed);
    root.read("output_dir", cfg.output_dir);
    if (root.has("method")) {
        const auto m = Section::convert<std::string>(root.raw("method"), "$.method");
        if (m == "mp")
            cfg.method = TrainMethod::mp;
        else if (m == "pcd-centered")
            cfg.method = TrainMethod::pcd_centered;
        else
            throw ConfigError("$.method", "expected \"mp\" or \"pcd-centered\"");
    }

    {
        Section d = root.section("data");
        d.read("kind", cfg.data.kind);
        if (cfg.data.kind != "synthetic" && cfg.data.kind != "idx")
            throw ConfigError("$.data.kind", "expected \"synthetic\" or \"idx\"");
        d.read("classes", cfg.data.classes);
        d.read("visible", cfg.data.visible);
        d.read("noise", cfg.data.noise);
        d.read("train", cfg.data.train);
        d.read("valid", cfg.data.valid);
        d.read("test", cfg.data.test);
        d.read("seed", cfg.data.seed);
        d.read("train_images", cfg.data.train_images);
        d.read("train_labels", cfg.data.train_labels);
        d.read("test_images", cfg.data.test_images);
        d.read("test_labels", cfg.data.test_labels);
        d.read("validation", cfg.data.validation);
        d.read("limit_train", cfg.data.limit_train);
        if (d.has("binarize")) {
            const auto b = Section::convert<std::string>(d.raw("binarize"), "$.data.binarize");
            if (b == "threshold")
                cfg.data.binarize = BinarizeMode::threshold;
            else if (b == "stochastic")
                cfg.data.binarize = BinarizeMode::stochastic;
            else
                throw ConfigError("$.data.binarize", "expected \"threshold\" or \"stochastic\"");
        }
        d.read("binarize_seed", cfg.data.binarize_seed);
        d.finish();
        if (cfg.data.kind == "synthetic") {
            if (!(cfg.data.noise >= 0.0 && cfg.data.noise <= 1.0)) throw ConfigError("$.data.noise", "must lie in [0,1]");
            if (cfg.data.train == 0) throw ConfigError("$.data.train", "must be >= 1");
        } else if (cfg.data.train_images.empty() || cfg.data.train_labels.empty()) {
            throw ConfigError("$.data.train_images", "idx data needs train_images and train_labels");
        }
    }

    {
        Section m = root.section("model");
        const bool synthetic = cfg.data.kind == "synthetic";
        cfg.shape.visible = synthetic ? cfg.data.visible : 784;
        cfg.shape.classes = synthetic ? cfg.data.classes : 10;
        cfg.shape.hidden = {500, 1000};
        m.read("visible", cfg.shape.visible);
        m.read("hidden", cfg.shape.hidden);
        m.read("classes", cfg.shape.classes);
        if (synthetic && cfg.shape.visible != cfg.data.visible)
            throw ConfigError("$.model.visible", "does not match $.data.visible");
        if (synthetic && cfg.shape.classes != cfg.data.classes)
            throw ConfigError("$.model.classes", "does not match $.data.classes");
        wrap("$.model", [&] { cfg.shape.validate(); });
        Section init = m.section("init");
        init.read("weight_scale", cfg.init.weight_scale);
        init.read("visible_bias", cfg.init.visible_bias);
        init.read("hidden_bias", cfg.init.hidden_bias);
        init.read("label_bias", cfg.init.label_bias);
        init.read("visible_bias_from_data", cfg.visible_bias_from_data);
        init.read("hidden_offset", cfg.init.hidden_offset);
        init.read("label_offset", cfg.init.label_offset);
        init.finish();
        if (!(cfg.init.weight_scale >= 0.0)) throw ConfigError("$.model.init.weight_scale", "must be >= 0");
        for (auto [v, k] : {std::pair{cfg.init.hidden_offset, "hidden_offset"}, std::pair{cfg.init.label_offset, "label_offset"}})
            if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string("$.model.init.") + k, "must lie in [0,1]");
        m.finish();
        cfg.init.centered = cfg.method == TrainMethod::pcd_centered;
    }

    {
        Section s = root.section("mp");
        s.read("mf_iters", cfg.mp.n_mf_iters);
        read_schedule(s, cfg.mp.schedule);
        s.read("minibatch_size", cfg.mp.minibatch_size);
        s.read("epochs", cfg.mp.epochs);
        s.read_list("column_norm_cap", cfg.mp.column_norm_cap);
        Section sp = s.section("sparsity");
        sp.read("enabled", cfg.mp.sparsity.enabled);
        sp.read_list("target", cfg.mp.sparsity.target);
        sp.read("slack", cfg.mp.sparsity.slack);
        sp.read("weight", cfg.mp.sparsity.weight);
        sp.read("per_example", cfg.mp.sparsity.per_example);
        sp.read("mean_over_units", cfg.mp.sparsity.mean_over_units);
        sp.finish();
        s.finish();
        cfg.mp.seed = cfg.seed;
        wrap("$.mp", [&] { cfg.mp.validate(cfg.shape); });
    }

    {
        Section s = root.section("pcd");
        s.read("mf_iters_pos", cfg.pcd.mf_iters_pos);
        s.read("gibbs_steps", cfg.pcd.gibbs_steps);
        s.read("n_chains", cfg.pcd.n_chains);
        s.read("rao_blackwell", cfg.pcd.rao_blackwell);
        read_schedule(s, cfg.pcd.schedule);
        s.read("minibatch_size", cfg.pcd.minibatch_size);
        s.read("epochs", cfg.pcd.epochs);
        s.read_list("column_norm_cap", cfg.pcd.column_norm_cap);
        s.finish();
        cfg.pcd.seed = cfg.seed;
        wrap("$.pcd", [&] { cfg.pcd.validate(cfg.shape); });
    }

    {
        Section e = root.section("eval");
        if (e.has("inference")) {
            const auto inf = Section::convert<std::string>(e.raw("inference"), "$.eval.inference");
            if (inf == "mean_field")
                cfg.eval.inference.mode = InferenceMode::standard;
            else if (inf == "multi_inference")
                cfg.eval.inference.mode = InferenceMode::multi_inference;
            else
                throw ConfigError("$.eval.inference", "expected \"mean_field\" or \"multi_inference\"");
        }
        e.read("mf_iters", cfg.eval.inference.n_iters);
        e.read("patience", cfg.eval.patience);
        e.read("monitor_objective", cfg.eval.monitor_objective);
        e.read("objective_masks", cfg.eval.objective_masks);
        e.read("modes", cfg.eval.modes);
        e.read("fractions", cfg.eval.fractions);
        e.read("query_sizes", cfg.eval.query_sizes);
        e.read("inpaint_examples", cfg.eval.inpaint_examples);
        e.read("split", cfg.eval.split);
        e.read("query_seed", cfg.eval.query_seed);
        e.finish();
        if (cfg.eval.inference.n_iters < 1) throw ConfigError("$.eval.mf_iters", "must be >= 1");
        for (std::size_t i = 0; i < cfg.eval.modes.size(); ++i) {
            const auto& mode = cfg.eval.modes[i];
            if (mode != "classify" && mode != "missing_inputs" && mode != "general_query" && mode != "inpaint")
                throw ConfigError("$.eval.modes[" + std::to_string(i) + "]", "unknown mode \"" + mode + "\"");
        }
        for (std::size_t i = 0; i < cfg.eval.fractions.size(); ++i)
            if (!(cfg.eval.fractions[i] >= 0.0 && cfg.eval.fractions[i] <= 1.0))
                throw ConfigError("$.eval.fractions[" + std::to_string(i) + "]", "must lie in [0,1]");
        if (cfg.eval.split != "test" && cfg.eval.split != "valid")
            throw ConfigError("$.eval.split", "expected \"test\" or \"valid\"");
    }

    {
        Section o = root.section("oracle");
        o.read("visible", cfg.oracle.shape.visible);
        o.read("hidden", cfg.oracle.shape.hidden);
        o.read("classes", cfg.oracle.shape.classes);
        o.read("models", cfg.oracle.models);
        o.read("seed", cfg.oracle.seed);
        o.read("gibbs_samples", cfg.oracle.gibbs_samples);
        o.read("gibbs_thin", cfg.oracle.gibbs_thin);
        o.read("weight_scale", cfg.oracle.weight_scale);
        o.read("inject_gradient_fault", cfg.oracle.inject_gradient_fault);
        o.read("max_total_units", cfg.oracle.max_total_units);
        o.finish();
        wrap("$.oracle", [&] { cfg.oracle.shape.validate(); });
    }

    root.finish();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("$", "cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("$", std::string("invalid JSON: ") + e.what());
    }
    return parse_run_config(j);
}

Splits load_splits(const DataSpec& spec) {
    Splits s;
    if (spec.kind == "synthetic") {
        const auto all = synth_patterns(spec.classes, spec.visible, spec.noise, spec.train + spec.valid + spec.test,
                                        spec.seed).data;
        s.train = all.slice(0, spec.train);
        s.valid = all.slice(spec.train, spec.train + spec.valid);
        s.test = all.slice(spec.train + spec.valid, all.size());
        return s;
    }
    Dataset train = binarize(load_idx(spec.train_images, spec.train_labels), spec.binarize, spec.binarize_seed);
    train.classes = std::max<std::size_t>(train.classes, 10);
    if (spec.validation >= train.size()) throw ConfigError("$.data.validation", "leaves no training examples");
    const std::size_t cut = train.size() - spec.validation;
    s.valid = train.slice(cut, train.size());
    s.train = train.slice(0, spec.limit_train ? std::min(cut, spec.limit_train) : cut);
    if (!spec.test_images.empty()) {
        s.test = binarize(load_idx(spec.test_images, spec.test_labels), spec.binarize, spec.binarize_seed + 1);
        s.test.classes = train.classes;
    } else {
        s.test = Dataset{train.visible, train.classes, {}};
    }
    return s;
}

}  // namespace mpdbm
