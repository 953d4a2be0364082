#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlmosaic/motion.hpp"
#include "mlmosaic/raster.hpp"

namespace mlmosaic {

struct RegisterOptions {
  int max_levels = 4;
  int max_iters_fine = 50;    // level 0
  int max_iters_coarse = 10;  // every coarser level
  double min_update_norm = 1e-4;
  double damping = 1e-6;
  int min_overlap_pixels = 256;
  int max_step_halvings = 8;

  void validate() const;
};

struct PairResult {
  MotionParams params;
  double final_cost = 0.0;   // mean squared residual over the final window
  std::vector<int> iterations;  // accepted steps, indexed by pyramid level
  int overlap_pixels = 0;
};

class RegistrationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PixelIndex {
  int x = 0;
  int y = 0;
  friend bool operator==(PixelIndex, PixelIndex) = default;
};

/// Half-open pixel-index rectangle [x0, x1) x [y0, y1) of the reference image.
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
  int area() const { return (x1 - x0) * (y1 - y0); }
};

/// Square of side `size` centred in a width x height image.
PixelRect centered_window(int width, int height, int size);

/// Pixels x of `reference` whose warped position m(theta; x) can be sampled
/// in `moving`. Positions use the reference's coordinate frame (origin).
std::vector<PixelIndex> adaptive_window(const Raster& reference,
                                        const Raster& moving,
                                        const MotionParams& theta);

/// e(theta, x) = reference(x) - moving(m(theta; x)); nullopt when x is off
/// the reference grid or the warped sample is outside `moving`.
std::optional<double> residual(const Raster& reference, const Raster& moving,
                               const MotionParams& theta, Point x);

struct WindowCost {
  double sum_sq = 0.0;
  int count = 0;
  double mean() const { return count > 0 ? sum_sq / count : 0.0; }
};

WindowCost adaptive_cost(const Raster& reference, const Raster& moving,
                         const MotionParams& theta);

/// Cost over a fixed rectangle; nullopt if any pixel of the rectangle cannot
/// be evaluated.
std::optional<WindowCost> fixed_window_cost(const Raster& reference,
                                            const Raster& moving,
                                            const MotionParams& theta,
                                            const PixelRect& window);

/// Sums over a window of the Gauss-Newton system:
///   hessian = sum grad_e grad_e^T,  rhs = sum e grad_e,
/// with grad_e = -(d m / d theta) . grad(moving) sampled at m(theta; x).
struct NormalEquations {
  ParamMatrix hessian;
  ParamVector rhs;
  double sum_sq = 0.0;
  int count = 0;
};

/// Accumulates over `window` (whole reference when nullopt), skipping
/// pixels whose warped sample is outside `moving` and, when
/// `reference_mask` is non-empty, pixels where the mask is zero.
NormalEquations accumulate_normal_equations(
    const Raster& reference, const Raster& moving,
    const GradientField& moving_gradient, const MotionParams& theta,
    const std::optional<PixelRect>& window = std::nullopt,
    std::span<const std::uint8_t> reference_mask = {});

/// Solves (hessian + damping I) delta = -rhs. Throws RegistrationFailure on
/// a non-finite system or solution.
ParamVector solve_normal_equations(const NormalEquations& ne, double damping);

/// One adaptive-window Gauss-Newton update at theta0 (no line search).
/// Throws RegistrationFailure when the window has fewer than
/// opts.min_overlap_pixels pixels.
ParamVector gauss_newton_step(const Raster& reference, const Raster& moving,
                              const MotionParams& theta0,
                              const RegisterOptions& opts);

/// Coarse-to-fine adaptive-window registration of `moving` against
/// `reference`. Levels without enough overlap are skipped; if every level
/// is skipped, or the final overlap is too small, throws
/// RegistrationFailure.
PairResult register_pair(const Raster& reference, const Raster& moving,
                         const MotionParams& theta_init,
                         const RegisterOptions& opts = {});

/// Baseline: the same coarse-to-fine Gauss-Newton but over a centred
/// square window of side `window_size` (halved per level). Throws
/// RegistrationFailure as soon as the window leaves the overlap.
PairResult register_pair_fixed_window(const Raster& reference,
                                      const Raster& moving,
                                      const MotionParams& theta_init,
                                      int window_size,
                                      const RegisterOptions& opts = {});

}  // namespace mlmosaic
