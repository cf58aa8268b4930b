#include <doctest.h>

#include "mpdbm/config.hpp"
#include "mpdbm/error.hpp"

using namespace mpdbm;
using nlohmann::json;

namespace {

std::string error_path(const json& j) {
    try {
        parse_run_config(j);
    } catch (const ConfigError& e) {
        return e.path();
    }
    return "";
}

}  // namespace

TEST_CASE("defaults") {
    const RunConfig cfg = parse_run_config(json::object());
    CHECK(cfg.method == TrainMethod::mp);
    CHECK(cfg.shape.visible == 16);
    CHECK(cfg.shape.classes == 4);
    CHECK(cfg.mp.n_mf_iters == 10);
    CHECK(cfg.data.kind == "synthetic");
    CHECK(cfg.eval.inference.mode == InferenceMode::standard);
}

TEST_CASE("fields are read from every section") {
    const json j = json::parse(R"({
        "seed": 5, "output_dir": "runs/a", "method": "pcd-centered",
        "model": {"hidden": [8, 4], "init": {"weight_scale": 0.01, "hidden_offset": 0.2}},
        "mp": {"mf_iters": 3, "learning_rate": 0.2, "column_norm_cap": [1.0, 2.0, 3.0],
               "sparsity": {"enabled": true, "target": 0.1, "slack": 0.05}},
        "pcd": {"gibbs_steps": 2, "n_chains": 10, "rao_blackwell": false, "epochs": 7},
        "data": {"classes": 3, "visible": 12, "noise": 0.1, "train": 50, "valid": 10, "test": 20},
        "eval": {"inference": "multi_inference", "mf_iters": 4, "modes": ["classify", "inpaint"],
                 "fractions": [0, 0.5], "patience": 3},
        "oracle": {"visible": 2, "hidden": [2], "classes": 0, "models": 2}
    })");
    const RunConfig cfg = parse_run_config(j);
    CHECK(cfg.seed == 5);
    CHECK(cfg.output_dir == "runs/a");
    CHECK(cfg.method == TrainMethod::pcd_centered);
    CHECK(cfg.shape == ModelShape{12, {8, 4}, 3});
    CHECK(cfg.init.centered);
    CHECK(cfg.init.hidden_offset == 0.2);
    CHECK(cfg.mp.n_mf_iters == 3);
    CHECK(cfg.mp.schedule.learning_rate == 0.2);
    CHECK(cfg.mp.column_norm_cap == std::vector<double>{1.0, 2.0, 3.0});
    CHECK(cfg.mp.sparsity.target == std::vector<double>{0.1});
    CHECK_FALSE(cfg.pcd.rao_blackwell);
    CHECK(cfg.pcd.epochs == 7);
    CHECK(cfg.eval.inference.mode == InferenceMode::multi_inference);
    CHECK(cfg.eval.inference.n_iters == 4);
    CHECK(cfg.eval.patience == 3);
    CHECK(cfg.oracle.shape == ModelShape{2, {2}, 0});
}

TEST_CASE("errors carry the offending path") {
    CHECK(error_path(json{{"bogus", 1}}) == "$.bogus");
    CHECK(error_path(json{{"mp", {{"learnign_rate", 0.1}}}}) == "$.mp.learnign_rate");
    CHECK(error_path(json{{"mp", {{"epochs", -1}}}}) == "$.mp.epochs");
    CHECK(error_path(json{{"mp", {{"epochs", "ten"}}}}) == "$.mp.epochs");
    CHECK(error_path(json{{"mp", {{"mf_iters", 0}}}}) == "$.mp");
    CHECK(error_path(json{{"model", {{"hidden", {4, "x"}}}}}) == "$.model.hidden[1]");
    CHECK(error_path(json{{"model", {{"visible", 20}}}}) == "$.model.visible");
    CHECK(error_path(json{{"method", "cd"}}) == "$.method");
    CHECK(error_path(json{{"eval", {{"modes", {"classify", "dance"}}}}}) == "$.eval.modes[1]");
    CHECK(error_path(json{{"mp", {{"sparsity", {{"enabled", true}, {"target", 1.5}}}}}}) == "$.mp");
    CHECK(error_path(json{{"data", {{"kind", "idx"}}}}) == "$.data.train_images");
    CHECK(error_path(json::array()) == "$");
}

TEST_CASE("synthetic splits are disjoint slices of one draw") {
    DataSpec spec;
    spec.train = 40;
    spec.valid = 8;
    spec.test = 12;
    const Splits s = load_splits(spec);
    CHECK(s.train.size() == 40);
    CHECK(s.valid.size() == 8);
    CHECK(s.test.size() == 12);
    const auto all = synth_patterns(spec.classes, spec.visible, spec.noise, 60, spec.seed).data;
    CHECK(s.valid.examples[0].v == all.examples[40].v);
    CHECK(s.test.examples[11].label == all.examples[59].label);
}
