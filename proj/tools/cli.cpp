#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mlmosaic/image_io.hpp"
#include "mlmosaic/json_io.hpp"
#include "mlmosaic/mlm.hpp"
#include "mlmosaic/panorama.hpp"
#include "mlmosaic/parallel.hpp"
#include "mlmosaic/synth.hpp"
#include "mlmosaic/two_frame.hpp"

namespace mlmosaic::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Thrown for bad user input that is not already covered by a library error.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

const json& require(const json& j, const char* key) {
  if (!j.contains(key)) throw SchemaError(std::string("missing \"") + key + "\"");
  return j[key];
}

double number(const json& j, const char* what) {
  if (!j.is_number()) throw SchemaError(std::string(what) + " must be a number");
  return j.get<double>();
}

int integer(const json& j, const char* what) {
  if (!j.is_number_integer()) throw SchemaError(std::string(what) + " must be an integer");
  return j.get<int>();
}

Point pair_of(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) throw SchemaError(std::string(what) + " must be [x, y]");
  return {number(j[0], what), number(j[1], what)};
}

TextureSpec texture_from_json(const json& j) {
  TextureSpec t;
  if (j.contains("width")) t.width = integer(j["width"], "source.width");
  if (j.contains("height")) t.height = integer(j["height"], "source.height");
  if (j.contains("seed")) t.seed = static_cast<std::uint64_t>(integer(j["seed"], "source.seed"));
  if (j.contains("contrast")) t.contrast = number(j["contrast"], "source.contrast");
  if (j.contains("blur")) t.blur = number(j["blur"], "source.blur");
  if (j.contains("octaves")) t.octaves = integer(j["octaves"], "source.octaves");
  if (j.contains("roughness")) t.roughness = number(j["roughness"], "source.roughness");
  if (j.contains("shapes")) t.shapes = integer(j["shapes"], "source.shapes");
  if (t.width < 2 || t.height < 2) throw SchemaError("procedural source must be at least 2x2");
  return t;
}

std::vector<fs::path> list_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw ImageIoError(ImageIoErrc::FileNotFound, dir.string() + ": not a directory");
  }
  std::vector<fs::path> frames;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    const std::string ext = entry.path().extension().string();
    if (entry.is_regular_file() && name.rfind("frame_", 0) == 0 &&
        (ext == ".pgm" || ext == ".png")) {
      frames.push_back(entry.path());
    }
  }
  std::sort(frames.begin(), frames.end());
  if (frames.empty()) throw InputError(dir.string() + ": no frame_*.pgm or frame_*.png files");
  return frames;
}

std::vector<Raster> load_frames(const fs::path& dir) {
  std::vector<Raster> images;
  for (const fs::path& p : list_frames(dir)) images.push_back(load_image(p));
  return images;
}

std::string frame_name(int i) {
  std::ostringstream s;
  s << "frame_" << std::setw(3) << std::setfill('0') << i << ".pgm";
  return s.str();
}

void write_text(const std::string& text, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ImageIoError(ImageIoErrc::Unwritable, path.string() + ": unwritable path");
  out << text;
  if (!out) throw ImageIoError(ImageIoErrc::Unwritable, path.string() + ": write failed");
}

// Removes every registered file unless release() was called.
class OutputGuard {
 public:
  ~OutputGuard() {
    if (released_) return;
    std::error_code ec;
    for (const fs::path& p : files_) fs::remove(p, ec);
  }
  const fs::path& add(fs::path p) { return files_.emplace_back(std::move(p)); }
  void release() { released_ = true; }

 private:
  std::vector<fs::path> files_;
  bool released_ = false;
};

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) {
    throw ImageIoError(ImageIoErrc::Unwritable, dir.string() + ": cannot create directory");
  }
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const fs::path config_path(a.config);
  const json j = read_json_file(config_path);
  SynthConfig cfg = synth_config_from_json(j, config_path.parent_path());
  if (a.seed) cfg.seed = *a.seed;
  const SynthDataset ds = generate(cfg);

  const fs::path dir(a.out);
  ensure_directory(dir);
  OutputGuard guard;
  for (int i = 0; i < cfg.n_frames; ++i) {
    save_image(ds.frames[i], guard.add(dir / frame_name(i)));
  }
  save_image(cfg.source, guard.add(dir / "source.pgm"));
  write_json_file(to_json(ds.truth), guard.add(dir / "truth.json"));

  json echo = j;
  echo["source"] = "source.pgm";
  echo["seed"] = cfg.seed;
  json trajectory = json::array();
  for (const MotionParams& p : cfg.trajectory) {
    const auto theta = p.theta();
    trajectory.push_back(std::vector<double>(theta.begin(), theta.end()));
  }
  echo["trajectory"] = trajectory;
  write_json_file(echo, guard.add(dir / "config.json"));
  guard.release();
  out << "wrote " << cfg.n_frames << " frames to " << dir.string() << '\n';
  return kOk;
}

// --- register --------------------------------------------------------------

struct RegisterArgs {
  std::string image_a;
  std::string image_b;
  std::string model = "affine";
  int levels = RegisterOptions{}.max_levels;
  double damping = RegisterOptions{}.damping;
};

int cmd_register(const RegisterArgs& a, std::ostream& out, std::ostream& err) {
  const ModelKind kind = parse_model_kind(a.model);
  RegisterOptions opts;
  opts.max_levels = a.levels;
  opts.damping = a.damping;
  opts.validate();
  const Raster ref = load_image(a.image_a);
  const Raster moving = load_image(a.image_b);
  try {
    const PairResult r = register_pair(ref, moving, identity(kind), opts);
    out << to_json(r).dump(2) << '\n';
  } catch (const RegistrationFailure& e) {
    err << "registration failure: " << e.what() << '\n';
    return kAlgorithmFailure;
  }
  return kOk;
}

// --- mosaic ----------------------------------------------------------------

struct MosaicArgs {
  std::string dir;
  std::string mode = "mlm";
  std::string model = "affine";
  std::string out;
  std::string inject;
  int levels = MlmOptions{}.max_levels;
  int max_sweeps = MlmOptions{}.max_sweeps;
  double sweep_tol = MlmOptions{}.sweep_tol;
  double damping = MlmOptions{}.damping;
};

struct Injection {
  int frame = 0;
  Point offset;
};

Injection parse_injection(const std::string& text) {
  std::istringstream s(text);
  Injection inj;
  char c1 = 0;
  char c2 = 0;
  if (!(s >> inj.frame >> c1 >> inj.offset.x >> c2 >> inj.offset.y) || c1 != ',' ||
      c2 != ',' || !s.eof()) {
    throw InputError("--inject-offset expects K,DX,DY");
  }
  return inj;
}

std::string trace_jsonl(const MlmTrace& trace) {
  std::string text;
  for (const SweepRecord& r : trace.records) text += to_json(r).dump() + '\n';
  return text;
}

int cmd_mosaic(const MosaicArgs& a, std::ostream& out, std::ostream& err) {
  if (a.mode != "sequential" && a.mode != "mlm") {
    throw InputError("--mode must be sequential or mlm");
  }
  const ModelKind kind = parse_model_kind(a.model);
  MlmOptions mopts;
  mopts.max_levels = a.levels;
  mopts.max_sweeps = a.max_sweeps;
  mopts.sweep_tol = a.sweep_tol;
  mopts.damping = a.damping;
  mopts.validate();
  std::optional<Injection> inject;
  if (!a.inject.empty()) inject = parse_injection(a.inject);

  const std::vector<Raster> images = load_frames(a.dir);
  const fs::path dir = a.out.empty() ? fs::path(a.dir) / "mosaic" : fs::path(a.out);

  Registration sequential;
  try {
    sequential = sequential_init(images, kind);
  } catch (const SequentialInitError& e) {
    err << "sequential initialisation failed between frames " << e.pair_index() << " and "
        << e.pair_index() + 1 << ": " << e.what() << '\n';
    return kAlgorithmFailure;
  }
  if (inject) {
    if (inject->frame <= 0 || inject->frame >= static_cast<int>(images.size())) {
      throw InputError("--inject-offset frame index out of range");
    }
    sequential = inject_offset(sequential, inject->frame, inject->offset);
  }

  Registration final_reg = sequential;
  MlmTrace trace;
  if (a.mode == "mlm") {
    RefineResult res = refine(images, sequential, mopts);
    final_reg = std::move(res.registration);
    trace = std::move(res.trace);
  } else {
    const RefGrid grid = compute_bounds(images, sequential);
    SweepRecord rec;
    rec.ml_cost = ml_cost(images, sequential, grid);
    rec.level_cost = rec.ml_cost;
    trace.records.push_back(rec);
  }

  const PanoramaEstimate pe = estimate_panorama(images, final_reg, compute_bounds(images, final_reg));
  ensure_directory(dir);
  OutputGuard guard;
  const fs::path pano = guard.add(dir / "panorama.pgm");
  const fs::path weights = guard.add(dir / "weights.pgm");
  render(pe, pano, weights);
  write_json_file(to_json(final_reg), guard.add(dir / "registration.json"));
  if (a.mode == "mlm") {
    write_json_file(to_json(sequential), guard.add(dir / "registration_sequential.json"));
  }
  write_text(trace_jsonl(trace), guard.add(dir / "trace.jsonl"));
  guard.release();
  out << "mosaic of " << images.size() << " frames written to " << dir.string() << '\n';
  return kOk;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string registration;
  std::string truth;
  std::string dir;
  std::string source;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const Registration est = registration_from_json(read_json_file(a.registration));
  const Registration truth = registration_from_json(read_json_file(a.truth));
  const std::vector<Raster> images = load_frames(a.dir);
  if (est.size() != images.size() || truth.size() != images.size()) {
    throw InputError("frame count mismatch between registrations and frames");
  }
  if (est.kind != truth.kind) throw InputError("motion model mismatch");
  const Raster source = load_image(a.source);
  Point offset;
  const fs::path config = fs::path(a.dir) / "config.json";
  if (fs::exists(config)) {
    const json j = read_json_file(config);
    if (j.contains("offset")) offset = pair_of(j["offset"], "offset");
  }
  out << to_json(evaluate(est, truth, images, source, offset)).dump(2) << '\n';
  return kOk;
}

int exit_code_for(ImageIoErrc code) {
  switch (code) {
    case ImageIoErrc::MalformedHeader:
    case ImageIoErrc::UnsupportedFormat:
    case ImageIoErrc::UnsupportedBitDepth:
      return kInvalidInput;
    case ImageIoErrc::FileNotFound:
    case ImageIoErrc::TruncatedPayload:
    case ImageIoErrc::Unwritable:
      return kIoError;
  }
  return kIoError;
}

}  // namespace

SynthConfig synth_config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw SchemaError("synth config must be an object");
  SynthConfig cfg;
  const json& src = require(j, "source");
  if (src.is_string()) {
    fs::path p(src.get<std::string>());
    if (p.is_relative()) p = base_dir / p;
    cfg.source = load_image(p);
  } else if (src.is_object()) {
    // Stored at 8 bits so that source.pgm is exactly the image sampled.
    cfg.source = make_texture(texture_from_json(src));
    for (double& v : cfg.source.data()) v = quantize_intensity(v) / 255.0;
  } else {
    throw SchemaError("\"source\" must be a path or a procedural texture object");
  }
  cfg.n_frames = integer(require(j, "n_frames"), "n_frames");
  const Point size = pair_of(require(j, "frame_size"), "frame_size");
  cfg.frame_width = static_cast<int>(size.x);
  cfg.frame_height = static_cast<int>(size.y);
  if (cfg.frame_width != size.x || cfg.frame_height != size.y) {
    throw SchemaError("frame_size must be integral");
  }
  const json& kind = require(j, "kind");
  if (!kind.is_string()) throw SchemaError("\"kind\" must be a string");
  try {
    cfg.kind = parse_model_kind(kind.get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(e.what());
  }
  if (j.contains("offset")) cfg.offset = pair_of(j["offset"], "offset");
  if (j.contains("noise_sigma")) cfg.noise_sigma = number(j["noise_sigma"], "noise_sigma");
  if (j.contains("seed")) cfg.seed = static_cast<std::uint64_t>(integer(j["seed"], "seed"));

  const json& traj = require(j, "trajectory");
  if (traj.is_array()) {
    for (const json& theta : traj) {
      json entry = {{"kind", kind}, {"theta", theta}};
      cfg.trajectory.push_back(motion_from_json(entry));
    }
  } else if (traj.is_object()) {
    ChainSpec chain;
    if (traj.contains("step")) chain.step = pair_of(traj["step"], "trajectory.step");
    if (traj.contains("jitter_translation")) {
      chain.jitter_translation = number(traj["jitter_translation"], "jitter_translation");
    }
    if (traj.contains("jitter_linear")) {
      chain.jitter_linear = number(traj["jitter_linear"], "jitter_linear");
    }
    chain.seed = cfg.seed;
    if (traj.contains("seed")) {
      chain.seed = static_cast<std::uint64_t>(integer(traj["seed"], "trajectory.seed"));
    }
    if (cfg.n_frames < 1) throw SchemaError("n_frames must be positive");
    cfg.trajectory = make_chain_trajectory(cfg.n_frames, cfg.kind, chain);
  } else {
    throw SchemaError("\"trajectory\" must be a list of parameter vectors or a chain spec");
  }
  cfg.validate();
  return cfg;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Maximum-likelihood image mosaicing"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 1;
  app.add_option("--threads", threads, "Worker thread cap")->check(CLI::PositiveNumber);

  SynthArgs sa;
  std::uint64_t seed = 0;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--config", sa.config, "Synth config JSON")->required();
  synth->add_option("--out", sa.out, "Output directory")->required();
  CLI::Option* seed_opt = synth->add_option("--seed", seed, "Override the config seed");

  RegisterArgs ra;
  CLI::App* reg = app.add_subcommand("register", "Register two images");
  reg->add_option("image_a", ra.image_a, "Reference image")->required();
  reg->add_option("image_b", ra.image_b, "Moving image")->required();
  reg->add_option("--model", ra.model, "translation or affine");
  reg->add_option("--levels", ra.levels, "Pyramid levels");
  reg->add_option("--damping", ra.damping, "Normal-matrix damping");

  MosaicArgs ma;
  CLI::App* mosaic = app.add_subcommand("mosaic", "Build a mosaic from frame_*.pgm files");
  mosaic->add_option("dir", ma.dir, "Frame directory")->required();
  mosaic->add_option("--mode", ma.mode, "sequential or mlm");
  mosaic->add_option("--model", ma.model, "translation or affine");
  mosaic->add_option("--levels", ma.levels, "Refinement pyramid levels");
  mosaic->add_option("--max-sweeps", ma.max_sweeps, "Sweeps per level");
  mosaic->add_option("--sweep-tol", ma.sweep_tol, "Relative cost decrease to stop a level");
  mosaic->add_option("--damping", ma.damping, "Per-frame damping");
  mosaic->add_option("--out", ma.out, "Output directory (default DIR/mosaic)");
  mosaic->add_option("--inject-offset", ma.inject,
                     "K,DX,DY: shift frames K.. by (DX,DY) after sequential alignment");

  EvalArgs ea;
  CLI::App* eval = app.add_subcommand("eval", "Compare a registration with ground truth");
  eval->add_option("registration", ea.registration, "Estimated registration JSON")->required();
  eval->add_option("truth", ea.truth, "Ground-truth registration JSON")->required();
  eval->add_option("dir", ea.dir, "Frame directory")->required();
  eval->add_option("source", ea.source, "Source image")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o;
    std::ostringstream e_out;
    const int code = app.exit(e, o, e_out);
    out << o.str();
    err << e_out.str();
    return code == 0 ? kOk : kInvalidInput;
  }

  try {
    set_max_threads(threads);
    if (*seed_opt) sa.seed = seed;
    if (synth->parsed()) return cmd_synth(sa, out);
    if (reg->parsed()) return cmd_register(ra, out, err);
    if (mosaic->parsed()) return cmd_mosaic(ma, out, err);
    if (eval->parsed()) return cmd_eval(ea, out);
  } catch (const ImageIoError& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const SynthConfigError& e) {
    err << "invalid config: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const RegistrationFailure& e) {
    err << "registration failure: " << e.what() << '\n';
    return kAlgorithmFailure;
  } catch (const FrameUpdateError& e) {
    err << "refinement failure: " << e.what() << '\n';
    return kAlgorithmFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kAlgorithmFailure;
  }
  return kInvalidInput;
}

}  // namespace mlmosaic::cli
