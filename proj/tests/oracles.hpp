#pragma once

// Reference computations that do not share code paths with the library.

#include <cmath>
#include <span>
#include <vector>

#include "mlmosaic/motion.hpp"
#include "mlmosaic/panorama.hpp"
#include "mlmosaic/raster.hpp"

namespace oracles {

using namespace mlmosaic;

inline std::optional<double> observe(const Raster& img, const MotionParams& p, Point x0) {
  const Point x = map_point(p, x0);
  if (x.x < 0 || x.y < 0 || x.x > img.width() - 1 || x.y > img.height() - 1) return std::nullopt;
  return sample_bilinear(img, x.x, x.y);
}

/// Observer count of every grid pixel under `reg`.
inline std::vector<int> observer_counts(std::span<const Raster> images, const Registration& reg,
                                        const RefGrid& grid) {
  std::vector<int> w(grid.pixel_count(), 0);
  for (int iy = 0; iy < grid.height(); ++iy) {
    for (int ix = 0; ix < grid.width(); ++ix) {
      for (std::size_t i = 0; i < images.size(); ++i) {
        if (observe(images[i], reg.params[i], grid.point(ix, iy))) ++w[iy * grid.width() + ix];
      }
    }
  }
  return w;
}

/// Half of the coordinatewise objective for frame q, with the observer
/// counts and the overlap regions frozen at `reg`:
///   0.5 * sum_i sum_{x in R_iq} E_iq(x; theta_q)^2 / W(x),
/// E_iq = I_i(m(theta_i; x)) - I_q(m(theta_q; x)).
inline double half_frozen_objective(std::span<const Raster> images, const Registration& reg,
                                    int q, const MotionParams& theta_q, const RefGrid& grid,
                                    const std::vector<int>& w0) {
  double total = 0;
  for (int iy = 0; iy < grid.height(); ++iy) {
    for (int ix = 0; ix < grid.width(); ++ix) {
      const Point x0 = grid.point(ix, iy);
      if (!observe(images[q], reg.params[q], x0)) continue;
      const auto iq = observe(images[q], theta_q, x0);
      if (!iq) continue;
      const int w = w0[iy * grid.width() + ix];
      for (std::size_t i = 0; i < images.size(); ++i) {
        if (static_cast<int>(i) == q) continue;
        const auto ii = observe(images[i], reg.params[i], x0);
        if (!ii) continue;
        total += (*ii - *iq) * (*ii - *iq) / w;
      }
    }
  }
  return 0.5 * total;
}

/// Central finite-difference gradient of half_frozen_objective wrt theta_q.
inline std::vector<double> frozen_objective_gradient(std::span<const Raster> images,
                                                     const Registration& reg, int q,
                                                     const RefGrid& grid, double eps) {
  const std::vector<int> w0 = observer_counts(images, reg, grid);
  const auto theta = reg.params[q].theta();
  std::vector<double> g(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    std::vector<double> plus(theta.begin(), theta.end()), minus = plus;
    plus[k] += eps;
    minus[k] -= eps;
    const double fp = half_frozen_objective(
        images, reg, q, MotionParams::from_theta(reg.kind, plus), grid, w0);
    const double fm = half_frozen_objective(
        images, reg, q, MotionParams::from_theta(reg.kind, minus), grid, w0);
    g[k] = (fp - fm) / (2 * eps);
  }
  return g;
}

/// Residual term sum_x sum_i [I_i(m(theta_i; x)) - P(x)]^2 H over the grid,
/// where P is indexed like the grid.
inline double residual_term(std::span<const Raster> images, const Registration& reg,
                            const RefGrid& grid, std::span<const double> pano) {
  double total = 0;
  for (int iy = 0; iy < grid.height(); ++iy) {
    for (int ix = 0; ix < grid.width(); ++ix) {
      const double p = pano[iy * grid.width() + ix];
      for (std::size_t i = 0; i < images.size(); ++i) {
        if (const auto v = observe(images[i], reg.params[i], grid.point(ix, iy))) {
          total += (*v - p) * (*v - p);
        }
      }
    }
  }
  return total;
}

/// Very low-frequency scene for derivative checks, where central
/// differences and the slope of the bilinear interpolant agree closely.
inline double gentle_scene(double x, double y) {
  return 0.5 + 0.2 * std::sin(0.035 * x + 0.4) * std::cos(0.028 * y - 0.3) +
         0.1 * std::cos(0.022 * x - 0.031 * y + 0.7);
}

}  // namespace oracles
