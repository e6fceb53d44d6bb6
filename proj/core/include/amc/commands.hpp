// Command implementations behind the amc CLI. Each throws on error
// (ConfigError/DataError/ShapeError for validation problems) and returns a
// process exit code otherwise. All outputs land under the report directory,
// which is guarded by a lock file against concurrent writers.

#pragma once

#include <iosfwd>
#include <string>

#include "amc/config.hpp"
#include "amc/data.hpp"

namespace amc {

/// Trains per the config, writing a rolling per-epoch checkpoint, the final
/// checkpoint, and the tab-separated loss log under the report dir.
int cmd_train(const RunConfig& cfg, std::ostream& log);

/// Scores all judged candidates per query and writes metrics.tsv (plus
/// roc.txt in pairwise mode). Bidirectional mode reports caption recall.
int cmd_eval(const RunConfig& cfg, std::ostream& log);

/// Ranks every image for one query; `--explain` adds attention diagnostics.
int cmd_rank(const RunConfig& cfg, const std::string& query_id, int top_k, bool explain,
             std::ostream& log);

/// Runs the finite-difference suite at the built-in desk shapes and prints
/// the per-tensor report; exit 2 when any tensor fails.
int cmd_gradcheck(const RunConfig& cfg, std::ostream& log);

/// Generates a synthetic bundle directory from the spec.
int cmd_synth(const SynthSpec& spec, const std::string& out_dir, std::ostream& log);

/// Maps an escaped exception to the CLI exit convention:
/// 1 for validation errors, 2 for runtime failures.
int exit_code_for(const std::exception& e);

}  // namespace amc
