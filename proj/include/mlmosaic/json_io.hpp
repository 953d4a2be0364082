#pragma once

#include <filesystem>
#include <stdexcept>

#include <json.hpp>

#include "mlmosaic/mlm.hpp"
#include "mlmosaic/motion.hpp"
#include "mlmosaic/panorama.hpp"
#include "mlmosaic/synth.hpp"
#include "mlmosaic/two_frame.hpp"

namespace mlmosaic {

/// Structured input that does not match the expected schema.
class SchemaError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// {"kind": "affine", "theta": [a11, a12, a21, a22, tx, ty]}
nlohmann::json to_json(const MotionParams& p);
MotionParams motion_from_json(const nlohmann::json& j);

// {"kind": ..., "anchor": k, "params": [[...], ...]}
nlohmann::json to_json(const Registration& reg);
Registration registration_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PairResult& r);
nlohmann::json to_json(const EvalReport& r);
// One JSON-lines record per sweep.
nlohmann::json to_json(const SweepRecord& r);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const nlohmann::json& j, const std::filesystem::path& path);

}  // namespace mlmosaic
