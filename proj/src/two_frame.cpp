#include "mlmosaic/two_frame.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "mlmosaic/parallel.hpp"

namespace mlmosaic {

void RegisterOptions::validate() const {
  if (max_levels < 1 || max_iters_fine < 1 || max_iters_coarse < 1 ||
      min_overlap_pixels < 1 || max_step_halvings < 0) {
    throw std::invalid_argument("RegisterOptions: counts must be >= 1");
  }
  if (!(min_update_norm > 0.0)) {
    throw std::invalid_argument("RegisterOptions: min_update_norm must be > 0");
  }
  if (!(damping >= 0.0)) {
    throw std::invalid_argument("RegisterOptions: damping must be >= 0");
  }
}

PixelRect centered_window(int width, int height, int size) {
  const int x0 = (width - size) / 2;
  const int y0 = (height - size) / 2;
  return {x0, y0, x0 + size, y0 + size};
}

namespace {

constexpr int kRowGrain = 16;

Point grid_point(const Raster& r, int ix, int iy) {
  return {r.origin().x + ix, r.origin().y + iy};
}

struct Accumulator {
  double hessian[kMaxDof * kMaxDof] = {};
  double rhs[kMaxDof] = {};
  double sum_sq = 0.0;
  int count = 0;
};

}  // namespace

std::vector<PixelIndex> adaptive_window(const Raster& reference,
                                        const Raster& moving,
                                        const MotionParams& theta) {
  std::vector<PixelIndex> window;
  for (int iy = 0; iy < reference.height(); ++iy) {
    for (int ix = 0; ix < reference.width(); ++ix) {
      const Point warped = map_point(theta, grid_point(reference, ix, iy));
      if (sample_at(moving, warped)) window.push_back({ix, iy});
    }
  }
  return window;
}

std::optional<double> residual(const Raster& reference, const Raster& moving,
                               const MotionParams& theta, Point x) {
  const auto ref = sample_at(reference, x);
  if (!ref) return std::nullopt;
  const auto warped = sample_at(moving, map_point(theta, x));
  if (!warped) return std::nullopt;
  return *ref - *warped;
}

WindowCost adaptive_cost(const Raster& reference, const Raster& moving,
                         const MotionParams& theta) {
  const auto parts = map_chunks<WindowCost>(
      reference.height(), kRowGrain, [&](int row_begin, int row_end) {
        WindowCost c;
        for (int iy = row_begin; iy < row_end; ++iy) {
          for (int ix = 0; ix < reference.width(); ++ix) {
            const auto s =
                sample_at(moving, map_point(theta, grid_point(reference, ix, iy)));
            if (!s) continue;
            const double e = reference(ix, iy) - *s;
            c.sum_sq += e * e;
            ++c.count;
          }
        }
        return c;
      });
  WindowCost total;
  for (const auto& c : parts) {
    total.sum_sq += c.sum_sq;
    total.count += c.count;
  }
  return total;
}

std::optional<WindowCost> fixed_window_cost(const Raster& reference,
                                            const Raster& moving,
                                            const MotionParams& theta,
                                            const PixelRect& window) {
  if (window.x0 < 0 || window.y0 < 0 || window.x1 > reference.width() ||
      window.y1 > reference.height() || window.area() <= 0) {
    return std::nullopt;
  }
  WindowCost c;
  for (int iy = window.y0; iy < window.y1; ++iy) {
    for (int ix = window.x0; ix < window.x1; ++ix) {
      const auto s =
          sample_at(moving, map_point(theta, grid_point(reference, ix, iy)));
      if (!s) return std::nullopt;
      const double e = reference(ix, iy) - *s;
      c.sum_sq += e * e;
      ++c.count;
    }
  }
  return c;
}

NormalEquations accumulate_normal_equations(
    const Raster& reference, const Raster& moving,
    const GradientField& moving_gradient, const MotionParams& theta,
    const std::optional<PixelRect>& window,
    std::span<const std::uint8_t> reference_mask) {
  const PixelRect rect =
      window.value_or(PixelRect{0, 0, reference.width(), reference.height()});
  const int n = theta.dof();
  const ModelKind kind = theta.kind();
  if (!reference_mask.empty() && reference_mask.size() != reference.size()) {
    throw std::invalid_argument("reference mask size does not match raster");
  }

  const auto parts = map_chunks<Accumulator>(
      rect.y1 - rect.y0, kRowGrain, [&](int row_begin, int row_end) {
        Accumulator acc;
        double g[kMaxDof];
        for (int iy = rect.y0 + row_begin; iy < rect.y0 + row_end; ++iy) {
          for (int ix = rect.x0; ix < rect.x1; ++ix) {
            if (!reference_mask.empty() &&
                reference_mask[static_cast<std::size_t>(iy) * reference.width() + ix] == 0) {
              continue;
            }
            const Point x = grid_point(reference, ix, iy);
            const Point warped = map_point(theta, x);
            const auto s = sample_at(moving, warped);
            if (!s) continue;
            const double e = reference(ix, iy) - *s;
            residual_gradient(kind, x, *sample_at(moving_gradient.gx, warped),
                              *sample_at(moving_gradient.gy, warped), g);
            for (int r = 0; r < n; ++r) {
              for (int c = 0; c <= r; ++c) acc.hessian[r * kMaxDof + c] += g[r] * g[c];
              acc.rhs[r] += e * g[r];
            }
            acc.sum_sq += e * e;
            ++acc.count;
          }
        }
        return acc;
      });

  NormalEquations ne{ParamMatrix::Zero(n, n), ParamVector::Zero(n), 0.0, 0};
  for (const auto& acc : parts) {
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c <= r; ++c) ne.hessian(r, c) += acc.hessian[r * kMaxDof + c];
      ne.rhs[r] += acc.rhs[r];
    }
    ne.sum_sq += acc.sum_sq;
    ne.count += acc.count;
  }
  for (int r = 0; r < n; ++r) {
    for (int c = r + 1; c < n; ++c) ne.hessian(r, c) = ne.hessian(c, r);
  }
  return ne;
}

ParamVector solve_normal_equations(const NormalEquations& ne, double damping) {
  const int n = static_cast<int>(ne.rhs.size());
  ParamMatrix system = ne.hessian;
  system.diagonal().array() += damping;
  if (!system.allFinite() || !ne.rhs.allFinite()) {
    throw RegistrationFailure("non-finite normal equations");
  }
  if (!(ne.hessian.trace() > 0.0)) {
    throw RegistrationFailure("no intensity gradient inside the overlap");
  }
  ParamVector delta = system.ldlt().solve(-ne.rhs);
  if (delta.size() != n || !delta.allFinite()) {
    throw RegistrationFailure("normal equations have no finite solution");
  }
  return delta;
}

ParamVector gauss_newton_step(const Raster& reference, const Raster& moving,
                              const MotionParams& theta0,
                              const RegisterOptions& opts) {
  const GradientField grad = spatial_gradient(moving);
  const NormalEquations ne =
      accumulate_normal_equations(reference, moving, grad, theta0);
  if (ne.count < opts.min_overlap_pixels) {
    throw RegistrationFailure("insufficient overlap: " +
                              std::to_string(ne.count) + " pixels");
  }
  return solve_normal_equations(ne, opts.damping);
}

namespace {

// Window behaviour for one pyramid level. `cost` returns nullopt when the
// window cannot be evaluated (too small, or outside the overlap).
struct LevelWindow {
  std::function<std::optional<WindowCost>(const MotionParams&)> cost;
  std::function<NormalEquations(const MotionParams&)> system;
};

// Gauss-Newton iterations with the step-halving safeguard at one level.
// Returns the number of accepted steps.
int iterate_level(MotionParams& theta, WindowCost current,
                  const LevelWindow& window, int max_iters,
                  const RegisterOptions& opts) {
  int accepted = 0;
  for (int it = 0; it < max_iters; ++it) {
    const ParamVector delta =
        solve_normal_equations(window.system(theta), opts.damping);
    ParamVector step = delta;
    bool improved = false;
    for (int h = 0; h <= opts.max_step_halvings; ++h, step *= 0.5) {
      const MotionParams candidate = theta.plus(step);
      if (!candidate.is_invertible()) continue;
      const auto c = window.cost(candidate);
      if (c && c->mean() < current.mean()) {
        theta = candidate;
        current = *c;
        improved = true;
        break;
      }
    }
    if (!improved) break;
    ++accepted;
    if (step.norm() < opts.min_update_norm) break;
  }
  return accepted;
}

struct PyramidPair {
  Pyramid reference;
  Pyramid moving;
  int levels = 0;
};

PyramidPair build_pyramids(const Raster& reference, const Raster& moving,
                           int max_levels) {
  PyramidPair p{build_pyramid(reference, max_levels),
                build_pyramid(moving, max_levels), 0};
  p.levels = static_cast<int>(
      std::min(p.reference.levels.size(), p.moving.levels.size()));
  return p;
}

}  // namespace

PairResult register_pair(const Raster& reference, const Raster& moving,
                         const MotionParams& theta_init,
                         const RegisterOptions& opts) {
  opts.validate();
  const PyramidPair pyr = build_pyramids(reference, moving, opts.max_levels);

  PairResult result;
  result.iterations.assign(static_cast<std::size_t>(pyr.levels), 0);
  MotionParams theta = rescale(theta_init, std::ldexp(1.0, -(pyr.levels - 1)));
  bool attempted = false;

  for (int level = pyr.levels - 1; level >= 0; --level) {
    const Raster& ref = pyr.reference.levels[level];
    const Raster& mov = pyr.moving.levels[level];
    const GradientField grad = spatial_gradient(mov);
    LevelWindow window{
        [&](const MotionParams& t) -> std::optional<WindowCost> {
          const WindowCost c = adaptive_cost(ref, mov, t);
          if (c.count < opts.min_overlap_pixels) return std::nullopt;
          return c;
        },
        [&](const MotionParams& t) {
          return accumulate_normal_equations(ref, mov, grad, t);
        }};

    if (const auto start = window.cost(theta)) {
      attempted = true;
      const int max_iters = level == 0 ? opts.max_iters_fine : opts.max_iters_coarse;
      result.iterations[level] = iterate_level(theta, *start, window, max_iters, opts);
    }
    if (level > 0) theta = rescale(theta, 2.0);
  }

  const WindowCost final_cost = adaptive_cost(reference, moving, theta);
  if (!attempted || final_cost.count < opts.min_overlap_pixels) {
    throw RegistrationFailure("insufficient overlap at every pyramid level");
  }
  result.params = theta;
  result.final_cost = final_cost.mean();
  result.overlap_pixels = final_cost.count;
  return result;
}

PairResult register_pair_fixed_window(const Raster& reference,
                                      const Raster& moving,
                                      const MotionParams& theta_init,
                                      int window_size,
                                      const RegisterOptions& opts) {
  opts.validate();
  if (window_size < 2) throw std::invalid_argument("window size must be >= 2");
  const PyramidPair pyr = build_pyramids(reference, moving, opts.max_levels);

  PairResult result;
  result.iterations.assign(static_cast<std::size_t>(pyr.levels), 0);
  MotionParams theta = rescale(theta_init, std::ldexp(1.0, -(pyr.levels - 1)));

  for (int level = pyr.levels - 1; level >= 0; --level) {
    const Raster& ref = pyr.reference.levels[level];
    const Raster& mov = pyr.moving.levels[level];
    const GradientField grad = spatial_gradient(mov);
    const PixelRect rect = centered_window(
        ref.width(), ref.height(), std::max(window_size >> level, 2));
    LevelWindow window{
        [&](const MotionParams& t) { return fixed_window_cost(ref, mov, t, rect); },
        [&](const MotionParams& t) {
          return accumulate_normal_equations(ref, mov, grad, t, rect);
        }};

    const auto start = window.cost(theta);
    if (!start) {
      throw RegistrationFailure("fixed window leaves the overlap at level " +
                                std::to_string(level));
    }
    const int max_iters = level == 0 ? opts.max_iters_fine : opts.max_iters_coarse;
    result.iterations[level] = iterate_level(theta, *start, window, max_iters, opts);
    if (level > 0) theta = rescale(theta, 2.0);
  }

  const PixelRect rect =
      centered_window(reference.width(), reference.height(), window_size);
  const auto final_cost = fixed_window_cost(reference, moving, theta, rect);
  if (!final_cost) throw RegistrationFailure("fixed window leaves the overlap");
  result.params = theta;
  result.final_cost = final_cost->mean();
  result.overlap_pixels = final_cost->count;
  return result;
}

}  // namespace mlmosaic
