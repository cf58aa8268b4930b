#include "mpdbm/app.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <variant>

#include "mpdbm/error.hpp"
#include "mpdbm/evaluation.hpp"
#include "mpdbm/verification.hpp"

namespace mpdbm::app {

using nlohmann::json;
namespace fs = std::filesystem;

void apply_seed(RunConfig& cfg, std::uint64_t seed) {
    cfg.seed = seed;
    cfg.mp.seed = seed;
    cfg.pcd.seed = seed;
}

namespace {

void check_data_shape(const ModelShape& shape, const Dataset& data, const std::string& what) {
    if (data.visible != shape.visible || data.classes != shape.classes)
        throw ConfigError("$.data", what + " has " + std::to_string(data.visible) + " visibles and " +
                                        std::to_string(data.classes) + " classes; model expects " +
                                        std::to_string(shape.visible) + " and " + std::to_string(shape.classes));
}

InitConfig init_for(const RunConfig& cfg) {
    InitConfig init = cfg.init;
    init.centered = cfg.method == TrainMethod::pcd_centered;
    return init;
}

// The master seed feeds parameter initialization and, through a second draw,
// the trainer stream (minibatch order, masks, chains).
struct Seeds {
    Rng init;
    std::uint64_t trainer;
};

Seeds derive_seeds(std::uint64_t seed) {
    Rng master(seed);
    Rng init = master.split();
    return {init, master.next_u64()};
}

using Trainer = std::variant<MpTrainer, PcdTrainer>;

Trainer make_trainer(const RunConfig& cfg, const Splits& splits) {
    Seeds seeds = derive_seeds(cfg.seed);
    std::optional<Vector> means;
    if (cfg.visible_bias_from_data) means = splits.train.pixel_means();
    Params params = init_params(cfg.shape, seeds.init, init_for(cfg),
                                means ? std::optional<std::span<const double>>(*means) : std::nullopt);
    if (cfg.method == TrainMethod::mp) {
        MpConfig mc = cfg.mp;
        mc.seed = seeds.trainer;
        return Trainer(std::in_place_type<MpTrainer>, std::move(params), std::move(mc));
    }
    PcdConfig pc = cfg.pcd;
    pc.seed = seeds.trainer;
    return Trainer(std::in_place_type<PcdTrainer>, std::move(params), std::move(pc));
}

Checkpoint snapshot(const Trainer& t, const json& trainer_state) {
    Checkpoint c;
    c.trainer_state = trainer_state;
    std::visit(
        [&](const auto& tr) {
            c.params = tr.params();
            c.velocity = tr.velocity();
            c.rng = tr.rng().state();
            c.epoch = tr.epoch();
        },
        t);
    if (const auto* p = std::get_if<PcdTrainer>(&t)) {
        c.method = "pcd-centered";
        c.chains = p->chains().chains;
        c.chain_rng = p->chains().rng.state();
    } else {
        c.method = "mp";
    }
    return c;
}

void restore(Trainer& t, Checkpoint c) {
    if (auto* m = std::get_if<MpTrainer>(&t)) {
        if (c.method != "mp" && c.method != "init") throw ConfigError("$.method", "checkpoint was trained with " + c.method);
        m->restore(std::move(c.params), std::move(c.velocity), c.rng, c.epoch);
    } else {
        auto& p = std::get<PcdTrainer>(t);
        if (c.method != "pcd-centered") throw ConfigError("$.method", "checkpoint was trained with " + c.method);
        p.restore(std::move(c.params), std::move(c.velocity), c.rng, std::move(c.chains), c.chain_rng, c.epoch);
    }
}

void require_finite(const Params& p) {
    for (std::size_t e = 0; e < p.weights.size(); ++e)
        if (!all_finite(p.weights[e].data())) throw NumericError("non-finite value in " + weight_name(p.shape, e));
    for (std::size_t l = 0; l < p.biases.size(); ++l)
        if (!all_finite(p.biases[l])) throw NumericError("non-finite value in " + bias_name(p.shape, l));
}

// Line-delimited JSON with a CSV mirror sharing one fixed column order.
class MetricsWriter {
public:
    MetricsWriter(const fs::path& dir, std::vector<std::string> keys, bool append) : keys_(std::move(keys)) {
        const auto mode = append ? std::ios::app : std::ios::trunc;
        const bool csv_exists = append && fs::exists(dir / "metrics.csv") && fs::file_size(dir / "metrics.csv") > 0;
        jsonl_.open(dir / "metrics.jsonl", std::ios::out | mode);
        csv_.open(dir / "metrics.csv", std::ios::out | mode);
        if (!jsonl_ || !csv_) throw FormatError(FormatError::Kind::io, "cannot open metrics files in " + dir.string());
        if (!csv_exists) {
            for (std::size_t i = 0; i < keys_.size(); ++i) csv_ << (i ? "," : "") << keys_[i];
            csv_ << "\n";
        }
    }

    void write(const json& record) {
        nlohmann::ordered_json ordered = nlohmann::ordered_json::object();
        for (std::size_t i = 0; i < keys_.size(); ++i) {
            const json& v = record.at(keys_[i]);
            ordered[keys_[i]] = v;
            csv_ << (i ? "," : "") << (v.is_string() ? v.get<std::string>() : v.dump());
        }
        jsonl_ << ordered.dump() << "\n";
        csv_ << "\n";
        jsonl_.flush();
        csv_.flush();
    }

private:
    std::vector<std::string> keys_;
    std::ofstream jsonl_, csv_;
};

json fresh_trainer_state() {
    return {{"best_error", nullptr}, {"best_epoch", nullptr}, {"bad_epochs", 0}, {"stopped", false}};
}

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

}  // namespace

Checkpoint initial_checkpoint(const RunConfig& cfg, const Splits& splits) {
    return snapshot(make_trainer(cfg, splits), fresh_trainer_state());
}

int cmd_train(const RunConfig& cfg, const std::optional<fs::path>& resume, std::ostream& log) {
    const Splits splits = load_splits(cfg.data);
    check_data_shape(cfg.shape, splits.train, "training set");
    if (!splits.train.is_binary()) throw ConfigError("$.data", "training data must be binary");
    const fs::path out = cfg.output_dir;
    fs::create_directories(out);

    Trainer trainer = make_trainer(cfg, splits);
    json state = fresh_trainer_state();
    if (resume) {
        Checkpoint c = load_checkpoint(*resume);
        if (!(c.params.shape == cfg.shape)) throw ConfigError("$.model", "checkpoint shape differs from the config");
        if (c.trainer_state.contains("bad_epochs")) state = c.trainer_state;
        restore(trainer, std::move(c));
    }

    const bool is_mp = cfg.method == TrainMethod::mp;
    const std::size_t epochs = is_mp ? cfg.mp.epochs : cfg.pcd.epochs;
    const Schedule& schedule = is_mp ? cfg.mp.schedule : cfg.pcd.schedule;
    const std::size_t n_obj_iters = is_mp ? cfg.mp.n_mf_iters : cfg.eval.inference.n_iters;
    auto epoch_of = [&] { return std::visit([](const auto& t) { return t.epoch(); }, trainer); };
    auto params_of = [&]() -> const Params& { return std::visit([](const auto& t) -> const Params& { return t.params(); }, trainer); };

    save_checkpoint(out / "checkpoint", snapshot(trainer, state));
    MetricsWriter metrics(out,
                          {"epoch", "method", "train_loss", "valid_objective", "valid_objective_se", "valid_error",
                           "learning_rate", "momentum", "wall_time_s"},
                          resume.has_value());
    log << "training " << method_name(cfg.method) << " model with " << params_of().num_parameters()
        << " parameters on " << splits.train.size() << " examples\n";

    while (epoch_of() < epochs && !state.value("stopped", false)) {
        const std::size_t epoch = epoch_of();
        const auto t0 = std::chrono::steady_clock::now();
        double loss = 0.0;
        try {
            loss = std::visit([&](auto& t) { return t.run_epoch(splits.train.examples); }, trainer);
            require_finite(params_of());
            if (!std::isfinite(loss)) throw NumericError("non-finite training loss");
        } catch (const NumericError& e) {
            log << "epoch " << epoch << ": " << e.what() << "; last good checkpoint kept in " << (out / "checkpoint")
                << "\n";
            return kRuntime;
        }

        Estimate objective{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
        double valid_error = std::numeric_limits<double>::quiet_NaN();
        if (!splits.valid.empty()) {
            valid_error = classification_error(params_of(), splits.valid, cfg.eval.inference);
            if (cfg.eval.monitor_objective && cfg.eval.objective_masks > 0) {
                Rng obj_rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1)));
                objective = mp_objective_estimate(params_of(), splits.valid.examples, cfg.eval.objective_masks,
                                                  n_obj_iters, obj_rng);
            }
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        if (std::isfinite(valid_error)) {
            const bool improved = state["best_error"].is_null() || valid_error < state["best_error"].get<double>();
            if (improved) {
                state["best_error"] = valid_error;
                state["best_epoch"] = epoch + 1;
                state["bad_epochs"] = 0;
            } else {
                state["bad_epochs"] = state["bad_epochs"].get<std::size_t>() + 1;
            }
            if (cfg.eval.patience > 0 && state["bad_epochs"].get<std::size_t>() >= cfg.eval.patience)
                state["stopped"] = true;
            if (improved) save_checkpoint(out / "best", snapshot(trainer, state));
        }
        save_checkpoint(out / "checkpoint", snapshot(trainer, state));

        metrics.write({{"epoch", epoch + 1},
                       {"method", method_name(cfg.method)},
                       {"train_loss", is_mp ? finite_or_null(loss) : json(nullptr)},
                       {"valid_objective", finite_or_null(objective.mean)},
                       {"valid_objective_se", finite_or_null(objective.std_error)},
                       {"valid_error", finite_or_null(valid_error)},
                       {"learning_rate", schedule.lr_at(epoch)},
                       {"momentum", schedule.momentum_at(epoch)},
                       {"wall_time_s", seconds}});
        log << "epoch " << epoch + 1 << "/" << epochs << std::fixed << std::setprecision(4);
        if (is_mp) log << " loss " << loss;
        if (std::isfinite(valid_error)) log << " valid_error " << valid_error;
        if (std::isfinite(objective.mean)) log << " valid_objective " << objective.mean;
        log << " (" << std::setprecision(1) << seconds << "s)\n" << std::defaultfloat;
    }
    if (state.value("stopped", false)) log << "early stopping after epoch " << epoch_of() << "\n";
    save_checkpoint(out / "final", snapshot(trainer, state));
    return kOk;
}

int cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, std::ostream& log) {
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const Params& params = ckpt.params;
    const Splits splits = load_splits(cfg.data);
    const Dataset& data = cfg.eval.split == "valid" ? splits.valid : splits.test;
    check_data_shape(params.shape, data, "evaluation set");
    const fs::path out = cfg.output_dir;
    fs::create_directories(out);

    const auto& spec = cfg.eval.inference;
    const std::string inference = spec.mode == InferenceMode::standard ? "mean_field" : "multi_inference";
    std::ofstream records(out / "eval.jsonl", std::ios::trunc);
    if (!records) throw FormatError(FormatError::Kind::io, "cannot write " + (out / "eval.jsonl").string());
    auto emit = [&](const std::string& mode, const json& param, double value) {
        const json r = {{"mode", mode},        {"inference", inference}, {"mf_iters", spec.n_iters},
                        {"param", param},      {"value", value},         {"n", data.size()}};
        records << r.dump() << "\n";
        log << mode;
        if (!param.is_null()) log << " " << param.dump();
        log << ": " << value << "\n";
    };

    for (const auto& mode : cfg.eval.modes) {
        if (mode == "classify") {
            emit(mode, nullptr, classification_error(params, data, spec));
        } else if (mode == "missing_inputs") {
            const auto errs = missing_input_errors(params, data, cfg.eval.fractions, spec, cfg.eval.query_seed);
            for (std::size_t i = 0; i < errs.size(); ++i) emit(mode, cfg.eval.fractions[i], errs[i]);
        } else if (mode == "general_query") {
            const auto xent = general_query_xent(params, data, cfg.eval.query_sizes, spec, cfg.eval.query_seed);
            for (std::size_t i = 0; i < xent.size(); ++i) emit(mode, cfg.eval.query_sizes[i], xent[i]);
        } else if (mode == "inpaint") {
            std::ofstream dump(out / "inpaint.jsonl", std::ios::trunc);
            const auto recs = inpaint(params, data, cfg.eval.inpaint_examples, spec, cfg.eval.query_seed);
            for (const auto& r : recs) {
                for (std::size_t it = 0; it < r.v_hat.size(); ++it) {
                    json line = {{"example", r.example},
                                 {"iteration", it + 1},
                                 {"visible_observed", r.mask.visible_observed},
                                 {"label_observed", r.mask.label_observed},
                                 {"v_hat", r.v_hat[it]},
                                 {"y_hat", r.y_hat.empty() ? json(nullptr) : json(r.y_hat[it])}};
                    dump << line.dump() << "\n";
                }
            }
            log << "inpaint: " << recs.size() << " examples written to " << (out / "inpaint.jsonl").string() << "\n";
        }
    }
    return kOk;
}

json oracle_report(const OracleSpec& spec) {
    const ModelShape& shape = spec.shape;
    if (shape.total_units() > spec.max_total_units)
        throw EnumerationBoundError(std::to_string(shape.total_units()) + " units > " +
                                    std::to_string(spec.max_total_units));
    const oracle::EnumBound bound{spec.max_total_units};
    oracle::StateSpace::joint(shape, bound);

    const std::size_t n = spec.models;
    std::vector<std::uint64_t> seeds(n);
    Rng seeder(spec.seed);
    for (auto& s : seeds) s = seeder.next_u64();

    std::vector<double> grad_err(n), kl_increase(n), kl_min(n), tv(n), gap(n);
    parallel_for(n, [&](std::size_t m) {
        Rng rng(seeds[m]);
        const Params params = verify::random_params(shape, rng, spec.weight_scale);

        // Gradient: several unroll depths, with and without the sparsity term.
        double worst = 0.0;
        for (std::size_t iters : {1, 2, 5}) {
            for (bool sparse : {false, true}) {
                const auto batch = verify::random_examples(shape, 3, rng);
                std::vector<Mask> masks;
                for (std::size_t b = 0; b < batch.size(); ++b) masks.push_back(sample_mask(shape, rng));
                SparsityConfig sp;
                if (sparse) {
                    sp.enabled = true;
                    sp.weight = 0.5;
                    for (int attempt = 0; attempt < 100; ++attempt) {
                        sp.target = {0.1 + 0.8 * rng.uniform()};
                        sp.slack = 0.1 * rng.uniform();
                        if (verify::sparsity_kink_distance(params, batch, masks, iters, sp) > 1e-3) break;
                    }
                }
                const double fault = spec.inject_gradient_fault ? 1e-2 : 0.0;
                const auto check = verify::check_mp_gradient(params, batch, masks, iters, sp, 1e-5, fault);
                worst = std::max(worst, check.max_rel_error);
            }
        }
        grad_err[m] = worst;

        // Mean field KL along 20 sweeps.
        const auto ex = verify::random_examples(shape, 1, rng).front();
        const Mask mask = sample_mask(shape, rng);
        const auto kl = verify::kl_trajectory(params, ex, mask, 20);
        kl_increase[m] = kl.max_increase;
        kl_min[m] = kl.kl.back();

        Rng gibbs_rng = rng.split();
        tv[m] = verify::gibbs_total_variation(params, spec.gibbs_samples, spec.gibbs_thin, 1000, gibbs_rng);

        const Params centered = verify::random_params(shape, rng, spec.weight_scale, true);
        gap[m] = verify::centering_max_probability_gap(centered);
    });

    auto check = [](std::string name, const std::vector<double>& values, double threshold, bool upper,
                    std::string metric) {
        const double worst = upper ? *std::max_element(values.begin(), values.end())
                                   : *std::min_element(values.begin(), values.end());
        const bool pass = upper ? worst <= threshold : worst >= threshold;
        return json{{"name", std::move(name)}, {"metric", std::move(metric)}, {"worst", worst},
                    {"threshold", threshold},  {"passed", pass},             {"per_model", values}};
    };
    json checks = json::array();
    checks.push_back(check("gradient", grad_err, 1e-5, true, "max relative error vs central differences"));
    checks.push_back(check("kl_monotone", kl_increase, 1e-10, true, "largest KL increase between sweeps"));
    checks.push_back(check("kl_nonnegative", kl_min, 0.0, false, "final KL"));
    checks.push_back(check("gibbs_stationarity", tv, 0.01, true, "total variation to the exact distribution"));
    // Strict inequality for TV.
    for (double t : tv)
        if (!(t < 0.01)) checks.back()["passed"] = false;
    checks.push_back(check("centering_equivalence", gap, 1e-12, true, "max state probability gap"));

    bool all = true;
    for (const auto& c : checks) all = all && c["passed"].get<bool>();
    return {{"shape", shape_to_json(shape)}, {"models", n}, {"seed", spec.seed}, {"checks", checks}, {"passed", all}};
}

int cmd_oracle_check(const RunConfig& cfg, std::ostream& log) {
    const json report = oracle_report(cfg.oracle);
    const fs::path out = cfg.output_dir;
    fs::create_directories(out);
    std::ofstream(out / "oracle_report.json") << report.dump(2) << "\n";
    for (const auto& c : report["checks"])
        log << (c["passed"].get<bool>() ? "PASS " : "FAIL ") << std::left << std::setw(22)
            << c["name"].get<std::string>() << " " << c["metric"].get<std::string>() << " = " << c["worst"].dump()
            << " (threshold " << c["threshold"].dump() << ")\n";
    return report["passed"].get<bool>() ? kOk : kVerification;
}

int cmd_inspect(const fs::path& checkpoint, std::ostream& out) {
    const Checkpoint c = load_checkpoint(checkpoint);
    const auto& shape = c.params.shape;
    out << "checkpoint  " << checkpoint.string() << "\n"
        << "version     " << Checkpoint::kVersion << "\n"
        << "method      " << c.method << "\n"
        << "epoch       " << c.epoch << "\n"
        << "shape       visible=" << shape.visible << " hidden=" << json(shape.hidden).dump()
        << " classes=" << shape.classes << "\n"
        << "centered    " << (c.params.centered() ? "yes" : "no") << "\n"
        << "parameters  " << c.params.num_parameters() << "\n";
    if (!c.chains.empty()) out << "chains      " << c.chains.size() << "\n";
    if (!c.trainer_state.empty()) out << "trainer     " << c.trainer_state.dump() << "\n";
    auto rms = [](std::span<const double> x) {
        double scale = 0.0;
        for (double v : x) scale = std::max(scale, std::abs(v));
        if (x.empty() || scale == 0.0 || !std::isfinite(scale)) return scale;
        double s = 0.0;
        for (double v : x) s += (v / scale) * (v / scale);
        return scale * std::sqrt(s / static_cast<double>(x.size()));
    };
    out << std::setprecision(6);
    for (std::size_t e = 0; e < c.params.weights.size(); ++e)
        out << "  " << std::left << std::setw(8) << weight_name(shape, e) << c.params.weights[e].shape_string()
            << "  rms " << rms(c.params.weights[e].data()) << "\n";
    for (std::size_t l = 0; l < c.params.biases.size(); ++l)
        out << "  " << std::left << std::setw(8) << bias_name(shape, l) << "[" << c.params.biases[l].size() << "]"
            << "  rms " << rms(c.params.biases[l]) << "\n";
    return kOk;
}

}  // namespace mpdbm::app
