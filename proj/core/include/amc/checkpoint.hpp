// Checkpoint file: a text manifest (hyperparams and the named tensor table)
// terminated by a "payload" line, followed by the tensors' row-major 64-bit
// little-endian values in manifest order. Round-trips are bit-exact.

#pragma once

#include <string>

#include "amc/model.hpp"

namespace amc {

void save_checkpoint(const ModelParams& params, const std::string& path);

/// Throws DataError on malformed files, naming the file and offending line.
ModelParams load_checkpoint(const std::string& path);

}  // namespace amc
