#pragma once

#include <filesystem>
#include <iosfwd>

#include <json.hpp>

#include "mlmosaic/synth.hpp"

namespace mlmosaic::cli {

enum ExitCode : int {
  kOk = 0,
  kInvalidInput = 2,
  kIoError = 3,
  kAlgorithmFailure = 4,
};

/// Entry point of the `mlmosaic` tool. Never throws; errors become exit
/// codes with a message on `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Builds a SynthConfig from the synth JSON schema. Relative source paths
/// are resolved against `base_dir`.
SynthConfig synth_config_from_json(const nlohmann::json& j,
                                   const std::filesystem::path& base_dir);

}  // namespace mlmosaic::cli
