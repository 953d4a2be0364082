#include "mlmosaic/json_io.hpp"

#include <fstream>

#include "mlmosaic/image_io.hpp"

namespace mlmosaic {

using nlohmann::json;

namespace {

ModelKind kind_from_json(const json& j) {
  if (!j.is_string()) throw SchemaError("\"kind\" must be a string");
  try {
    return parse_model_kind(j.get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(e.what());
  }
}

std::vector<double> numbers(const json& j, const char* what) {
  if (!j.is_array()) throw SchemaError(std::string(what) + " must be an array");
  std::vector<double> out;
  for (const json& v : j) {
    if (!v.is_number()) throw SchemaError(std::string(what) + " must contain numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

MotionParams params_from(ModelKind kind, const json& theta) {
  const std::vector<double> values = numbers(theta, "theta");
  try {
    return MotionParams::from_theta(kind, values);
  } catch (const std::invalid_argument& e) {
    throw SchemaError(e.what());
  }
}

}  // namespace

json to_json(const MotionParams& p) {
  const auto theta = p.theta();
  return {{"kind", std::string(to_string(p.kind()))},
          {"theta", std::vector<double>(theta.begin(), theta.end())}};
}

MotionParams motion_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind") || !j.contains("theta")) {
    throw SchemaError("motion parameters need \"kind\" and \"theta\"");
  }
  return params_from(kind_from_json(j["kind"]), j["theta"]);
}

json to_json(const Registration& reg) {
  json params = json::array();
  for (const MotionParams& p : reg.params) {
    const auto theta = p.theta();
    params.push_back(std::vector<double>(theta.begin(), theta.end()));
  }
  return {{"kind", std::string(to_string(reg.kind))}, {"anchor", reg.anchor},
          {"params", params}};
}

Registration registration_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind") || !j.contains("params")) {
    throw SchemaError("registration needs \"kind\" and \"params\"");
  }
  Registration reg;
  reg.kind = kind_from_json(j["kind"]);
  reg.anchor = 0;
  if (j.contains("anchor")) {
    if (!j["anchor"].is_number_integer()) throw SchemaError("\"anchor\" must be an integer");
    reg.anchor = j["anchor"].get<int>();
  }
  if (!j["params"].is_array()) throw SchemaError("\"params\" must be an array");
  for (const json& theta : j["params"]) reg.params.push_back(params_from(reg.kind, theta));
  try {
    reg.validate();
  } catch (const std::invalid_argument& e) {
    throw SchemaError(e.what());
  }
  return reg;
}

json to_json(const PairResult& r) {
  return {{"params", to_json(r.params)},
          {"metrics",
           {{"final_cost", r.final_cost},
            {"iterations", r.iterations},
            {"overlap_pixels", r.overlap_pixels}}}};
}

json to_json(const EvalReport& r) {
  return {{"corner_error", r.corner_error},
          {"max_corner_error", r.max_corner_error},
          {"param_rmse", r.param_rmse},
          {"psnr_db", r.psnr_db},
          {"ml_cost", r.ml_cost}};
}

json to_json(const SweepRecord& r) {
  return {{"level", r.level},
          {"sweep", r.sweep},
          {"ml_cost", r.ml_cost},
          {"level_cost", r.level_cost},
          {"max_update_norm", r.max_update_norm},
          {"frames_skipped", r.frames_skipped}};
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ImageIoError(ImageIoErrc::FileNotFound, path.string() + ": file not found");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

void write_json_file(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ImageIoError(ImageIoErrc::Unwritable, path.string() + ": unwritable path");
  out << j.dump(2) << '\n';
  if (!out) throw ImageIoError(ImageIoErrc::Unwritable, path.string() + ": write failed");
}

}  // namespace mlmosaic
