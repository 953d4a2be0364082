#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlmosaic/motion.hpp"
#include "mlmosaic/panorama.hpp"
#include "mlmosaic/raster.hpp"

namespace mlmosaic {

/// Separable Gaussian blur, replicated borders. sigma <= 0 returns r.
Raster gaussian_blur(const Raster& r, double sigma);

/// Procedural stand-in for a photograph: multi-octave smooth noise plus
/// random soft-edged ellipses, normalised to mean 0.5 and standard
/// deviation `contrast`, optionally blurred, clamped to [0,1].
struct TextureSpec {
  int width = 512;
  int height = 512;
  std::uint64_t seed = 1;
  double contrast = 0.2;
  double blur = 0.0;
  int octaves = 6;
  double roughness = 1.0;  // octave amplitude ratio, fine over coarse
  int shapes = 60;
};

Raster make_texture(const TextureSpec& spec);

/// Camera path for a sequence: frame k is displaced by k * step in the
/// panorama, with seeded jitter on translation and (affine) linear part.
struct ChainSpec {
  Point step{16.0, 4.0};
  double jitter_translation = 1.0;  // uniform +-, pixels
  double jitter_linear = 0.0;       // uniform +- on each linear entry
  std::uint64_t seed = 1;
};

/// Returns panorama-to-frame parameters; element 0 is the identity.
std::vector<MotionParams> make_chain_trajectory(int n_frames, ModelKind kind,
                                                const ChainSpec& spec);

struct SynthConfig {
  Raster source;
  int n_frames = 0;
  int frame_width = 0;
  int frame_height = 0;
  ModelKind kind = ModelKind::Translation;
  std::vector<MotionParams> trajectory;  // panorama-to-frame, [0] identity
  Point offset{};                        // panorama origin inside the source
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  /// Throws SynthConfigError naming the offending frame.
  void validate() const;
};

class SynthConfigError : public std::invalid_argument {
 public:
  SynthConfigError(int frame, const std::string& what)
      : std::invalid_argument(what), frame_(frame) {}
  int frame() const { return frame_; }  // -1 when not frame specific

 private:
  int frame_;
};

struct SynthDataset {
  std::vector<Raster> frames;
  Registration truth;
  SynthConfig config;
};

/// Frame i pixel x shows source(m(theta_i)^-1(x) + offset) plus
/// N(0, sigma^2) noise drawn from a generator seeded by (seed, i), then
/// clamped to [0,1].
SynthDataset generate(const SynthConfig& cfg);

struct EvalReport {
  std::vector<double> corner_error;  // pixels, per frame
  std::vector<double> param_rmse;    // per frame
  double max_corner_error = 0.0;
  double psnr_db = 0.0;  // capped at 100 dB
  double ml_cost = 0.0;
};

/// Max over the four frame corners of the distance between the corner
/// mapped to the panorama by the true and by the estimated parameters.
double corner_error(const MotionParams& estimate, const MotionParams& truth,
                    int frame_width, int frame_height);

/// Re-anchors `estimate` onto truth's anchor frame, then computes the
/// metrics. PSNR compares the estimated panorama against
/// source(x0 + offset) on pixels with W >= 1.
EvalReport evaluate(const Registration& estimate, const Registration& truth,
                    std::span<const Raster> images, const Raster& source,
                    Point offset = {});

}  // namespace mlmosaic
