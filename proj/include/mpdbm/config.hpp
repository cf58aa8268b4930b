#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpdbm/data.hpp"
#include "mpdbm/evaluation.hpp"
#include "mpdbm/model.hpp"
#include "mpdbm/mp_training.hpp"
#include "mpdbm/pcd.hpp"

namespace mpdbm {

enum class TrainMethod { mp, pcd_centered };

std::string method_name(TrainMethod m);

struct DataSpec {
    std::string kind = "synthetic";  // "synthetic" or "idx"
    // synthetic
    std::size_t classes = 4;
    std::size_t visible = 16;
    double noise = 0.05;
    std::size_t train = 1000;
    std::size_t valid = 500;
    std::size_t test = 1000;
    std::uint64_t seed = 0;
    // idx
    std::string train_images, train_labels, test_images, test_labels;
    std::size_t validation = 10000;  // held out from the end of the training file
    std::size_t limit_train = 0;     // 0 = all
    BinarizeMode binarize = BinarizeMode::threshold;
    std::uint64_t binarize_seed = 0;
};

struct Splits {
    Dataset train, valid, test;
};

Splits load_splits(const DataSpec& spec);

struct EvalSpec {
    InferenceSpec inference;
    std::size_t patience = 0;           // early stopping on validation error; 0 disables
    bool monitor_objective = true;      // per-epoch MP-objective estimate on the validation set
    std::size_t objective_masks = 200;
    std::vector<std::string> modes = {"classify"};
    std::vector<double> fractions = {0.0, 0.25, 0.5, 0.75};
    std::vector<std::size_t> query_sizes = {1, 2, 4, 8};
    std::size_t inpaint_examples = 10;
    std::string split = "test";         // "test" or "valid"
    std::uint64_t query_seed = 0;
};

struct OracleSpec {
    ModelShape shape{3, {2, 2}, 2};
    std::size_t models = 5;
    std::uint64_t seed = 1;
    std::size_t gibbs_samples = 1000000;
    std::size_t gibbs_thin = 2;
    double weight_scale = 1.0;
    bool inject_gradient_fault = false;
    std::size_t max_total_units = 22;
};

struct RunConfig {
    ModelShape shape;
    InitConfig init;
    bool visible_bias_from_data = true;
    TrainMethod method = TrainMethod::mp;
    MpConfig mp;
    PcdConfig pcd;
    DataSpec data;
    EvalSpec eval;
    OracleSpec oracle;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
};

// Validates against the schema (unknown keys rejected) and throws ConfigError
// with the JSON path of the first problem.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace mpdbm
