#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "mpdbm/app.hpp"
#include "mpdbm/error.hpp"

namespace {

using namespace mpdbm;

RunConfig load(const std::string& path, const std::optional<std::uint64_t>& seed, const std::string& out) {
    RunConfig cfg = path.empty() ? parse_run_config(nlohmann::json::object()) : load_run_config(path);
    if (seed) app::apply_seed(cfg, *seed);
    if (!out.empty()) cfg.output_dir = out;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App cli{"Multi-prediction deep Boltzmann machines"};
    cli.require_subcommand(1);

    std::string config_path, out_dir, resume, checkpoint;
    std::optional<std::uint64_t> seed;

    auto* train = cli.add_subcommand("train", "Train a model (MP or centered PCD)");
    train->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    train->add_option("--seed", seed, "Override the run seed");
    train->add_option("--out", out_dir, "Output directory");
    train->add_option("--resume", resume, "Checkpoint directory to resume from")->check(CLI::ExistingDirectory);

    auto* eval = cli.add_subcommand("eval", "Evaluate a checkpoint on classification and inference queries");
    eval->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    eval->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--seed", seed, "Override the run seed");
    eval->add_option("--out", out_dir, "Output directory");

    auto* check = cli.add_subcommand("oracle-check", "Verify inference and gradients against exact enumeration");
    check->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    check->add_option("--seed", seed, "Override the oracle seed");
    check->add_option("--out", out_dir, "Output directory");

    auto* inspect = cli.add_subcommand("inspect", "Print a checkpoint summary");
    inspect->add_option("checkpoint", checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);

    try {
        cli.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = cli.exit(e);
        return code == 0 ? app::kOk : app::kUsage;
    }

    try {
        if (*train) {
            const RunConfig cfg = load(config_path, seed, out_dir);
            return app::cmd_train(cfg, resume.empty() ? std::nullopt : std::optional<std::filesystem::path>(resume),
                                  std::cout);
        }
        if (*eval) return app::cmd_eval(load(config_path, seed, out_dir), checkpoint, std::cout);
        if (*check) {
            RunConfig cfg = load(config_path, std::nullopt, out_dir);
            if (seed) cfg.oracle.seed = *seed;
            return app::cmd_oracle_check(cfg, std::cout);
        }
        if (*inspect) return app::cmd_inspect(checkpoint, std::cout);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return app::kUsage;
    } catch (const EnumerationBoundError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return app::kUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return app::kRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return app::kRuntime;
    }
    return app::kUsage;
}
