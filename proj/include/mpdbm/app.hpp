#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

#include "mpdbm/checkpoint.hpp"
#include "mpdbm/config.hpp"

// Subcommand implementations behind the `mpdbm` executable. Each returns the
// process exit code for outcomes it decides itself (verification failure,
// numeric abort); configuration and format problems are thrown.
namespace mpdbm::app {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2, kVerification = 3 };

// Overrides the run seed everywhere it is consumed.
void apply_seed(RunConfig& cfg, std::uint64_t seed);

// Deterministic initial checkpoint for a config (what epochs=0 produces).
Checkpoint initial_checkpoint(const RunConfig& cfg, const Splits& splits);

/// Writes into cfg.output_dir:
///   checkpoint/   latest epoch
///   best/         lowest validation error so far
///   final/        state when training stopped
///   metrics.jsonl + metrics.csv, one record per epoch
int cmd_train(const RunConfig& cfg, const std::optional<std::filesystem::path>& resume, std::ostream& log);

/// Writes eval.jsonl (and inpaint.jsonl for the inpaint mode) into cfg.output_dir.
int cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint, std::ostream& log);

/// Runs the enumeration-backed checks on cfg.oracle and writes
/// oracle_report.json into cfg.output_dir. Returns kVerification on failure.
int cmd_oracle_check(const RunConfig& cfg, std::ostream& log);
nlohmann::json oracle_report(const OracleSpec& spec);

int cmd_inspect(const std::filesystem::path& checkpoint, std::ostream& out);

}  // namespace mpdbm::app
